#include "voxdec/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "voxdec/error.hpp"
#include "voxdec/optim.hpp"

namespace voxdec {

void TrainConfig::validate() const {
  if (batch_size < 1) throw DomainError("train config: batch_size must be >= 1");
  if (window < 1) throw DomainError("train config: window must be >= 1");
  if (label_shift >= window) throw DomainError("train config: label_shift must be smaller than the window");
  if (stride < 1) throw DomainError("train config: stride must be >= 1");
  if (epochs < 1 || warmup_epochs < 1 || warmup_epochs >= epochs)
    throw DomainError("train config: need 0 < warmup_epochs < epochs");
  if (windows_per_run < 1) throw DomainError("train config: windows_per_run must be >= 1");
  if (!(weight_decay >= 0.0)) throw DomainError("train config: weight_decay must be >= 0");
  if (!(lr_start > 0.0 && lr_start <= lr_peak && lr_end >= 0.0))
    throw DomainError("train config: need 0 < lr_start <= lr_peak and lr_end >= 0");
}

RunData standardize_run(const RunData& run) {
  const auto& vol = run.volume;
  if (vol.rank() != 4 || vol.dim(0) < 2) throw ShapeError("standardization needs a 4D run with at least 2 frames");
  const auto frames = vol.dim(0);
  const auto n = vol.slice_size();
  RunData out = run;
  std::vector<double> mean(n, 0.0), var(n, 0.0);
  for (std::size_t f = 0; f < frames; ++f) {
    const auto s = vol.slice(f);
    for (std::size_t v = 0; v < n; ++v) mean[v] += s[v];
  }
  for (auto& m : mean) m /= static_cast<double>(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    const auto s = vol.slice(f);
    for (std::size_t v = 0; v < n; ++v) {
      const double d = s[v] - mean[v];
      var[v] += d * d;
    }
  }
  std::vector<double> inv_sd(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    const double sd = std::sqrt(var[v] / static_cast<double>(frames));
    // rounding residue of a constant series is not variance
    if (sd > 1e-10 * std::max(1.0, std::abs(mean[v]))) inv_sd[v] = 1.0 / sd;
  }
  for (std::size_t f = 0; f < frames; ++f) {
    const auto src = vol.slice(f);
    auto dst = out.volume.slice(f);
    for (std::size_t v = 0; v < n; ++v) dst[v] = inv_sd[v] == 0.0 ? 0.0 : (src[v] - mean[v]) * inv_sd[v];
  }
  return out;
}

std::vector<int> shift_labels(std::span<const int> labels, std::size_t l) {
  if (l >= labels.size())
    throw DomainError("label shift " + std::to_string(l) + " must be smaller than the run length " +
                      std::to_string(labels.size()));
  std::vector<int> out(labels.size(), 0);
  std::copy(labels.begin(), labels.end() - static_cast<long>(l), out.begin() + static_cast<long>(l));
  return out;
}

Tensor extract_window(const Tensor& volume, std::size_t start, std::size_t t) {
  if (volume.rank() != 4) throw ShapeError("window extraction needs a T x D x H x W volume");
  if (start + t > volume.dim(0))
    throw DomainError("window [" + std::to_string(start) + ", " + std::to_string(start + t) + ") exceeds " +
                      std::to_string(volume.dim(0)) + " frames");
  const auto n = volume.slice_size();
  const auto first = volume.values().begin() + static_cast<long>(start * n);
  return Tensor({t, volume.dim(1), volume.dim(2), volume.dim(3)},
                std::vector<double>(first, first + static_cast<long>(t * n)));
}

Window sample_window(const RunData& run, std::span<const int> shifted_labels, std::size_t t, std::mt19937_64& rng) {
  const auto frames = run.volume.dim(0);
  if (frames < t)
    throw DomainError("run has " + std::to_string(frames) + " frames, fewer than the window " + std::to_string(t));
  if (shifted_labels.size() != frames) throw ShapeError("label count does not match run length");
  std::uniform_int_distribution<std::size_t> pick(0, frames - t);
  Window w;
  w.start = pick(rng);
  w.frames = extract_window(run.volume, w.start, t);
  w.labels.assign(shifted_labels.begin() + static_cast<long>(w.start),
                  shifted_labels.begin() + static_cast<long>(w.start + t));
  return w;
}

std::size_t window_count(std::size_t frames, std::size_t t, std::size_t stride) {
  if (stride < 1) throw DomainError("stride must be >= 1");
  if (frames < t) throw DomainError("run has fewer frames than the window");
  return (frames - t) / stride + 1;
}

std::size_t Prediction::coverage(std::size_t frame) const {
  const auto& row = tallies.at(frame);
  return static_cast<std::size_t>(std::accumulate(row.begin(), row.end(), 0));
}

int majority_vote(std::span<const int> tallies, std::span<const double> mean_probs) {
  if (tallies.size() != mean_probs.size()) throw ShapeError("vote tallies and probabilities differ in length");
  if (std::accumulate(tallies.begin(), tallies.end(), 0) < 1) throw DomainError("majority vote needs at least one vote");
  std::size_t best = 0;
  for (std::size_t k = 1; k < tallies.size(); ++k) {
    if (tallies[k] > tallies[best] || (tallies[k] == tallies[best] && mean_probs[k] > mean_probs[best])) best = k;
  }
  return static_cast<int>(best);
}

Prediction predict_run(const ModelWeights& weights, const ModelConfig& cfg, const RunData& standardized,
                       std::size_t stride) {
  const auto frames = standardized.volume.dim(0);
  const auto t = cfg.t;
  const auto k = cfg.classes;
  const auto n_windows = window_count(frames, t, stride);

  Prediction pred;
  pred.labels.assign(frames, 0);
  pred.mean_probs = Tensor({frames, k});
  pred.tallies.assign(frames, std::vector<int>(k, 0));
  for (std::size_t w = 0; w < n_windows; ++w) {
    const auto start = w * stride;
    const auto out = forward(extract_window(standardized.volume, start, t), weights, cfg);
    for (std::size_t f = 0; f < t; ++f) {
      const double* row = out.probs.data() + f * k;
      const auto vote = static_cast<std::size_t>(std::max_element(row, row + k) - row);
      pred.tallies[start + f][vote] += 1;
      for (std::size_t c = 0; c < k; ++c) pred.mean_probs[(start + f) * k + c] += row[c];
    }
  }
  for (std::size_t i = 0; i < frames; ++i) {
    const auto n = pred.coverage(i);
    if (n == 0) continue;
    double* probs = pred.mean_probs.data() + i * k;
    for (std::size_t c = 0; c < k; ++c) probs[c] /= static_cast<double>(n);
    pred.labels[i] = majority_vote(pred.tallies[i], std::span<const double>(probs, k));
  }
  return pred;
}

double frame_accuracy(const Prediction& pred, std::span<const int> truth) {
  if (truth.size() != pred.frames()) throw ShapeError("truth and prediction lengths differ");
  std::size_t hits = 0, scored = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (pred.coverage(i) == 0) continue;
    ++scored;
    hits += pred.labels[i] == truth[i] ? 1 : 0;
  }
  return scored ? static_cast<double>(hits) / static_cast<double>(scored) : 0.0;
}

TrainResult train(const std::vector<RunData>& runs, const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  model_cfg.validate();
  if (cfg.window != model_cfg.t) throw DomainError("train config window does not match model window length");
  if (runs.size() <= cfg.validation_runs) throw DomainError("training needs at least one run besides validation runs");
  for (const auto& r : runs) {
    if (r.volume.rank() != 4 || r.volume.dim(1) != model_cfg.grid.d || r.volume.dim(2) != model_cfg.grid.h ||
        r.volume.dim(3) != model_cfg.grid.w)
      throw ShapeError("run volume " + format_dims(r.volume.dims()) + " does not match the model grid");
    if (r.volume.dim(0) < cfg.window) throw DomainError("run is shorter than the training window");
    if (r.labels.size() != r.volume.dim(0)) throw ShapeError("run labels do not match its frame count");
    for (int l : r.labels)
      if (l < 0 || static_cast<std::size_t>(l) >= model_cfg.classes)
        throw DomainError("run label " + std::to_string(l) + " outside the model's class range");
  }

  const std::size_t n_train = runs.size() - cfg.validation_runs;
  std::vector<std::vector<int>> shifted;
  for (const auto& r : runs) shifted.push_back(shift_labels(r.labels, cfg.label_shift));

  const std::size_t samples_per_epoch = n_train * cfg.windows_per_run;
  const std::size_t steps_per_epoch = (samples_per_epoch + cfg.batch_size - 1) / cfg.batch_size;
  ScheduleConfig schedule;
  schedule.lr_start = cfg.lr_start;
  schedule.lr_peak = cfg.lr_peak;
  schedule.lr_end = cfg.lr_end;
  schedule.warmup_steps = static_cast<std::int64_t>(cfg.warmup_epochs * steps_per_epoch);
  schedule.total_steps = static_cast<std::int64_t>(cfg.epochs * steps_per_epoch);
  schedule.validate();
  AdamWConfig adam;
  adam.weight_decay = cfg.weight_decay;

  TrainResult result;
  result.weights = init_params(model_cfg, cfg.seed);
  std::vector<OptState> states;
  result.weights.for_each([&](const std::string&, Tensor&) { states.emplace_back(); });

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::int64_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::pair<std::size_t, Window>> samples;
    for (auto r : order)
      for (std::size_t i = 0; i < cfg.windows_per_run; ++i)
        samples.emplace_back(r, sample_window(runs[r], shifted[r], cfg.window, rng));
    std::shuffle(samples.begin(), samples.end(), rng);

    double loss_sum = 0.0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      const auto lo = b * cfg.batch_size;
      const auto hi = std::min(lo + cfg.batch_size, samples.size());
      ModelWeights grad = result.weights.zeros_like();
      double batch_loss = 0.0;
      for (auto i = lo; i < hi; ++i) {
        const auto& win = samples[i].second;
        const auto fw = forward(win.frames, result.weights, model_cfg);
        auto pg = backward_standard(fw.cache, win.labels, result.weights, model_cfg);
        batch_loss += pg.loss;
        grad += pg.grads;
      }
      const double count = static_cast<double>(hi - lo);
      batch_loss /= count;
      if (!std::isfinite(batch_loss))
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b));
      grad *= 1.0 / count;
      const double lr = lr_at(step, schedule);
      std::vector<const Tensor*> grads;
      grad.for_each([&](const std::string&, const Tensor& g) { grads.push_back(&g); });
      std::size_t p = 0;
      result.weights.for_each([&](const std::string&, Tensor& param) {
        adamw_step(param, *grads[p], states[p], lr, adam);
        ++p;
      });
      ++step;
      loss_sum += batch_loss * count;
    }

    EpochRecord rec;
    rec.train_loss = loss_sum / static_cast<double>(samples.size());
    const std::size_t v_lo = cfg.validation_runs ? n_train : 0;
    const std::size_t v_hi = cfg.validation_runs ? runs.size() : 1;
    double acc = 0.0;
    for (auto v = v_lo; v < v_hi; ++v) {
      const auto pred = predict_run(result.weights, model_cfg, runs[v], cfg.window);
      acc += frame_accuracy(pred, shifted[v]);
    }
    rec.validation_accuracy = acc / static_cast<double>(v_hi - v_lo);
    result.history.push_back(rec);
    if (on_epoch) on_epoch(epoch, rec);
  }
  return result;
}

}  // namespace voxdec
