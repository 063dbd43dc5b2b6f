#include "voxdec/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "voxdec/error.hpp"
#include "voxdec/metrics.hpp"

namespace voxdec {

Tensor guided_window(const ModelWeights& weights, const ModelConfig& cfg, const Tensor& window, std::size_t frame_idx,
                     std::size_t class_idx) {
  if (frame_idx >= cfg.t) throw DomainError("guided backprop frame index " + std::to_string(frame_idx) + " >= t");
  if (class_idx >= cfg.classes)
    throw DomainError("guided backprop class index " + std::to_string(class_idx) + " >= K");
  const auto fw = forward(window, weights, cfg);
  Tensor seed({cfg.t, cfg.classes});
  seed[frame_idx * cfg.classes + class_idx] = 1.0;
  return backward_input(fw.cache, seed, weights, cfg, ReluMode::guided);
}

SaliencyMap saliency_run(const ModelWeights& weights, const ModelConfig& cfg, const RunData& standardized,
                         const Prediction& prediction, SeedClass seed, std::span<const int> truth) {
  const auto frames = standardized.volume.dim(0);
  if (prediction.frames() != frames)
    throw ShapeError("prediction covers " + std::to_string(prediction.frames()) + " frames, run has " +
                     std::to_string(frames));
  if (seed == SeedClass::truth && truth.size() != frames)
    throw ShapeError("true-class seeding needs one label per run frame");
  const auto t = cfg.t;
  const auto keep = harvest_frame(t);
  const auto n = window_count(frames, t, 1);
  const auto& g = cfg.grid;
  SaliencyMap map;
  map.frame_offset = keep;
  map.frames = Tensor({n, g.d, g.h, g.w});
  for (std::size_t w = 0; w < n; ++w) {
    const auto run_frame = w + keep;
    const int cls = seed == SeedClass::predicted ? prediction.labels[run_frame] : truth[run_frame];
    const Tensor grad =
        guided_window(weights, cfg, extract_window(standardized.volume, w, t), keep, static_cast<std::size_t>(cls));
    const auto src = grad.slice(keep);
    std::copy(src.begin(), src.end(), map.frames.slice(w).begin());
  }
  return map;
}

SaliencyMap group_average(const std::vector<SaliencyMap>& maps) {
  if (maps.empty()) throw DomainError("group average needs at least one map");
  SaliencyMap out = maps.front();
  for (std::size_t i = 1; i < maps.size(); ++i) {
    if (maps[i].frames.dims() != out.frames.dims() || maps[i].frame_offset != out.frame_offset)
      throw ShapeError("group average: map " + std::to_string(i) + " has different extents or offset");
    out.frames += maps[i].frames;
  }
  out.frames *= 1.0 / static_cast<double>(maps.size());
  return out;
}

DesignMatrix glm_design(const TaskDesign& design, const std::vector<double>& hrf, std::size_t label_shift,
                        std::size_t frame_offset, std::size_t rows) {
  if (frame_offset + rows > design.frames)
    throw DomainError("GLM needs " + std::to_string(frame_offset + rows) + " design frames, design has " +
                      std::to_string(design.frames));
  const auto labels = design.labels();
  const auto shifted = shift_labels(labels, label_shift);
  const auto k = design.conditions.size();
  DesignMatrix x{rows, k, std::vector<double>(rows * k, 0.0)};
  for (std::size_t r = 0; r < rows; ++r) x.values[r * k] = 1.0;
  for (std::size_t c = 1; c < k; ++c) {
    std::vector<double> indicator(design.frames);
    for (std::size_t f = 0; f < design.frames; ++f) indicator[f] = shifted[f] == static_cast<int>(c) ? 1.0 : 0.0;
    const auto reg = convolve_causal(indicator, hrf);
    for (std::size_t r = 0; r < rows; ++r) x.values[r * k + c] = reg[frame_offset + r];
  }
  return x;
}

GlmResult glm_map(const SaliencyMap& map, const TaskDesign& design, const std::vector<double>& hrf,
                  std::size_t label_shift) {
  const auto n = map.count();
  const OlsSolver solver(glm_design(design, hrf, label_shift, map.frame_offset, n));
  const auto k = design.conditions.size();
  const Dims vol{map.frames.dim(1), map.frames.dim(2), map.frames.dim(3)};
  const auto voxels = map.frames.slice_size();

  GlmResult res;
  res.dof = solver.dof();
  for (std::size_t c = 1; c < k; ++c) {
    res.conditions.push_back(static_cast<int>(c));
    res.beta.emplace_back(vol);
    res.tstat.emplace_back(vol);
    res.pvalue.emplace_back(vol);
  }
  std::vector<double> y(n);
  for (std::size_t v = 0; v < voxels; ++v) {
    for (std::size_t j = 0; j < n; ++j) y[j] = map.frames[j * voxels + v];
    const auto fit = solver.fit(y);
    for (std::size_t c = 1; c < k; ++c) {
      const double b = fit.beta[c], se = fit.se[c];
      double t = 0.0, p = 1.0;
      if (se > 0.0) {
        t = b / se;
        p = student_t_two_sided(t, static_cast<double>(res.dof));
      } else if (b != 0.0) {
        t = std::copysign(std::numeric_limits<double>::infinity(), b);
        p = 0.0;
      }
      res.beta[c - 1][v] = b;
      res.tstat[c - 1][v] = t;
      res.pvalue[c - 1][v] = p;
    }
  }
  return res;
}

std::vector<bool> fdr_threshold(std::span<const double> pvals, double q) {
  if (pvals.empty()) throw DomainError("FDR threshold needs at least one p-value");
  if (!(q > 0.0 && q < 1.0)) throw DomainError("FDR level q must lie in (0, 1)");
  std::vector<double> sorted(pvals.begin(), pvals.end());
  std::sort(sorted.begin(), sorted.end());
  const double m = static_cast<double>(sorted.size());
  double cutoff = -1.0;
  for (std::size_t i = sorted.size(); i-- > 0;) {
    if (sorted[i] <= static_cast<double>(i + 1) * q / m) {
      cutoff = sorted[i];
      break;
    }
  }
  std::vector<bool> reject(pvals.size());
  for (std::size_t i = 0; i < pvals.size(); ++i) reject[i] = pvals[i] <= cutoff;
  return reject;
}

PeakSeries peak_series(const SaliencyMap& map, const GlmResult& glm, int condition, const TaskDesign& design,
                       const std::vector<double>& hrf) {
  const auto it = std::find(glm.conditions.begin(), glm.conditions.end(), condition);
  if (it == glm.conditions.end()) throw DomainError("no beta map for condition " + std::to_string(condition));
  const Tensor& beta = glm.beta[static_cast<std::size_t>(it - glm.conditions.begin())];
  const auto vals = beta.values();
  const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
  if (*lo == *hi) throw DomainError("beta map for condition " + std::to_string(condition) + " is flat");
  const auto v = static_cast<std::size_t>(std::max_element(vals.begin(), vals.end()) - vals.begin());

  PeakSeries out;
  const auto h = beta.dim(1), w = beta.dim(2);
  out.voxel = {v / (h * w), (v / w) % h, v % w};
  const auto n = map.count();
  const auto voxels = map.frames.slice_size();
  const auto ideal = ideal_response(design, condition, hrf);
  const auto labels = design.labels();
  for (std::size_t j = 0; j < n; ++j) {
    out.series.push_back(map.frames[j * voxels + v]);
    out.ideal.push_back(ideal.at(map.frame_offset + j));
    out.stimulus.push_back(labels.at(map.frame_offset + j) == condition ? 1.0 : 0.0);
  }
  out.pcc = pcc(out.series, out.ideal);
  return out;
}

}  // namespace voxdec
