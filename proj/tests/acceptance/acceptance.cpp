// Acceptance suite: one PASS/FAIL line per criterion.
//   voxdec_acceptance [--only 1,2,5]

#include <CLI11.hpp>
#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "voxdec/error.hpp"
#include "voxdec/formats.hpp"
#include "voxdec/metrics.hpp"
#include "voxdec/model.hpp"
#include "voxdec/ops.hpp"
#include "voxdec/pipeline.hpp"
#include "voxdec/saliency.hpp"
#include "voxdec/stats.hpp"
#include "voxdec/synth.hpp"
#include "voxdec/volume_file.hpp"

using namespace voxdec;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Tensor away_from_zero(Dims dims, std::mt19937_64& rng) {
  Tensor t = oracle::random_tensor(std::move(dims), rng);
  for (auto& v : t.values())
    if (std::abs(v) < 1e-2) v = v < 0 ? -0.5 : 0.5;
  return t;
}

// ---- 1 ------------------------------------------------------------------------

Outcome gradients() {
  const auto t0 = Clock::now();
  constexpr int kTrials = 100;
  std::mt19937_64 rng(2024);
  std::map<std::string, double> worst;
  auto note = [&](const std::string& k, double e) { worst[k] = std::max(worst[k], e); };

  for (int trial = 0; trial < kTrials; ++trial) {
    {
      const std::size_t k = pick(rng, 1, 3), s = pick(rng, 1, 2), p = pick(rng, 0, 1);
      Tensor x = oracle::random_tensor({pick(rng, 1, 3), pick(rng, 3, 5), pick(rng, 3, 5), pick(rng, 3, 5)}, rng);
      Tensor w = oracle::random_tensor({pick(rng, 1, 3), x.dim(0), k, k, k}, rng);
      Tensor b = oracle::random_tensor({w.dim(0)}, rng);
      const Tensor u = oracle::random_tensor(conv3d_output_dims(x.dims(), w.dims(), {s, p}), rng);
      auto f = [&] { return oracle::dot(u, conv3d(x, w, b, {s, p})); };
      const ConvGrads g = conv3d_vjp(x, w, {s, p}, u);
      note("conv3d", std::max({oracle::fd_check(f, x, g.x), oracle::fd_check(f, w, g.w), oracle::fd_check(f, b, g.b)}));
    }
    {
      const Dims dims{pick(rng, 1, 4), pick(rng, 1, 5), pick(rng, 1, 5)};
      Tensor x = away_from_zero(dims, rng);
      const Tensor u = oracle::random_tensor(dims, rng);
      auto fr = [&] { return oracle::dot(u, relu(x)); };
      note("relu", oracle::fd_check(fr, x, relu_vjp(x, u, ReluMode::standard)));
      auto fs = [&] { return oracle::dot(u, sigmoid(x)); };
      note("sigmoid", oracle::fd_check(fs, x, sigmoid_vjp(sigmoid(x), u)));
    }
    {
      const std::size_t m = pick(rng, 1, 6), n = pick(rng, 1, 6);
      Tensor x = oracle::random_tensor({n}, rng), w = oracle::random_tensor({m, n}, rng), b = oracle::random_tensor({m}, rng);
      const Tensor u = oracle::random_tensor({m}, rng);
      auto f = [&] { return oracle::dot(u, dense(x, w, b)); };
      const DenseGrads g = dense_vjp(x, w, u);
      note("dense", std::max({oracle::fd_check(f, x, g.x), oracle::fd_check(f, w, g.w), oracle::fd_check(f, b, g.b)}));
    }
    for (PoolKind kind : {PoolKind::avg, PoolKind::max}) {
      Tensor x = oracle::random_tensor({pick(rng, 1, 4), pick(rng, 1, 4), pick(rng, 1, 4), pick(rng, 1, 4)}, rng);
      const Tensor u = oracle::random_tensor({x.dim(0)}, rng);
      auto f = [&] { return oracle::dot(u, pool_global(x, kind)); };
      note(kind == PoolKind::avg ? "avg_pool" : "max_pool", oracle::fd_check(f, x, pool_global_vjp(x, kind, u)));
    }
    {
      const std::size_t rows = pick(rng, 1, 6), k = pick(rng, 2, 7);
      Tensor logits = oracle::random_tensor({rows, k}, rng, 2.0);
      std::vector<int> labels(rows);
      for (auto& l : labels) l = static_cast<int>(pick(rng, 0, k - 1));
      auto f = [&] { return softmax_xent(logits, labels).loss; };
      note("softmax_xent", oracle::fd_check(f, logits, softmax_xent(logits, labels).grad_logits));
    }
  }
  bool ok = true;
  std::string detail;
  for (const auto& [k, e] : worst) {
    ok = ok && e <= 1e-5;
    detail += k + " " + fmt(e, 2) + ", ";
  }

  // end-to-end: toy model, sampled parameter entries and input entries
  double e2e = 0.0;
  for (int trial = 0; trial < kTrials; ++trial) {
    ModelConfig cfg;
    cfg.t = 4;
    cfg.c = 4;
    cfg.stem_width = 4;
    cfg.stage_widths = {4, 8};
    cfg.classes = 3;
    cfg.reduction = 2;
    cfg.grid = {pick(rng, 4, 6), pick(rng, 4, 6), pick(rng, 4, 6)};
    ModelWeights w = init_params(cfg, 500 + static_cast<std::uint64_t>(trial));
    std::normal_distribution<double> n(0.0, 0.1);
    w.for_each([&](const std::string& name, Tensor& p) {
      if (name.ends_with(".b"))
        for (auto& v : p.values()) v = n(rng);
    });
    Tensor x = oracle::random_tensor({cfg.t, cfg.grid.d, cfg.grid.h, cfg.grid.w}, rng);
    std::vector<int> labels(cfg.t);
    for (auto& l : labels) l = static_cast<int>(pick(rng, 0, cfg.classes - 1));
    const ForwardResult fw = forward(x, w, cfg);
    const ParamGrads g = backward_standard(fw.cache, labels, w, cfg);
    auto loss = [&] { return softmax_xent(forward(x, w, cfg).logits, labels).loss; };
    std::vector<const Tensor*> analytic;
    g.grads.for_each([&](const std::string&, const Tensor& p) { analytic.push_back(&p); });
    std::size_t i = 0;
    w.for_each([&](const std::string&, Tensor& p) { e2e = std::max(e2e, oracle::fd_check(loss, p, *analytic[i++], &rng, 16)); });
    const Tensor seed = oracle::random_tensor({cfg.t, cfg.classes}, rng);
    const Tensor gx = backward_input(fw.cache, seed, w, cfg, ReluMode::standard);
    auto f = [&] { return oracle::dot(seed, forward(x, w, cfg).logits); };
    e2e = std::max(e2e, oracle::fd_check(f, x, gx, &rng, 64));
  }
  const double elapsed = seconds_since(t0);
  ok = ok && e2e <= 1e-4 && elapsed < 120.0;
  detail += "end-to-end " + fmt(e2e, 2) + "; " + std::to_string(kTrials) + " trials in " + fmt(elapsed, 3) + " s";
  return {ok, detail};
}

// ---- 2 ------------------------------------------------------------------------

Outcome protocol_constants() {
  const auto block = build_design(DesignKind::block, 1);
  const auto event = build_design(DesignKind::event, 1);
  const std::size_t wb = window_count(block.frames, 16, 1), we = window_count(event.frames, 16, 1);

  // durations per condition read back from the event lists
  std::map<std::string, std::set<std::size_t>> dur;
  for (const auto& e : block.events) dur[block.conditions[static_cast<std::size_t>(e.condition)]].insert(e.duration);
  for (const auto& e : event.events) dur[event.conditions[static_cast<std::size_t>(e.condition)]].insert(e.duration);
  // rest runs: maximal stretches of label 0 after the first event
  auto rest_runs = [](const TaskDesign& d) {
    std::set<std::size_t> lens;
    const auto labels = d.labels();
    std::size_t first = d.frames;
    for (const auto& e : d.events) first = std::min(first, e.onset);
    for (std::size_t f = first, len = 0; f <= labels.size(); ++f) {
      if (f < labels.size() && labels[f] == 0) {
        ++len;
      } else {
        if (len) lens.insert(len);
        len = 0;
      }
    }
    return lens;
  };
  const auto block_rest = rest_runs(block), event_rest = rest_runs(event);

  const bool task17 = dur["left_hand"] == std::set<std::size_t>{17} && dur["tongue"] == std::set<std::size_t>{17};
  const bool cue4 = dur["cue"] == std::set<std::size_t>{4};
  const bool trial5 = dur["win"] == std::set<std::size_t>{5} && dur["loss"] == std::set<std::size_t>{5} &&
                      dur["neutral"] == std::set<std::size_t>{5};
  const bool rest21 = block_rest.count(21) == 1 && event_rest.count(21) == 1;
  const bool ok = wb == 269 && we == 238 && block.frames == 284 && event.frames == 253 && task17 && cue4 && trial5 &&
                  rest21 && harvest_frame(16) == 7;
  std::ostringstream d;
  d << std::boolalpha << "windows " << wb << "/" << we << ", frames " << block.frames << "/" << event.frames << ", task 17 " << task17
    << ", cue 4 " << cue4 << ", rest 21 " << rest21 << ", trial 5 " << trial5;
  return {ok, d.str()};
}

// ---- 3, 4, 7: synthetic analogs --------------------------------------------------

struct Analog {
  TaskDesign design;
  Phantom phantom;
  ModelConfig model;
  TrainConfig train;
  std::vector<RunData> runs;  // standardized; first 20 train, last 4 test
  std::vector<std::vector<int>> truth;
  TrainResult result;
  double seconds = 0.0;
};

constexpr std::size_t kSubjects = 24, kTrain = 20;

Analog build_and_train(DesignKind kind, double noise_sd, const char* tag) {
  const auto t0 = Clock::now();
  Analog a;
  a.design = build_design(kind, 7);
  a.model.classes = a.design.classes();
  a.phantom = default_phantom(a.model.grid, a.design.classes() - 1, noise_sd);
  for (std::size_t s = 0; s < kSubjects; ++s) {
    a.runs.push_back(standardize_run(render_run(a.design, a.phantom, 1000 + s)));
    a.truth.push_back(shift_labels(a.runs.back().labels, a.train.label_shift));
  }
  const std::vector<RunData> train_runs(a.runs.begin(), a.runs.begin() + kTrain);
  a.result = train(train_runs, a.model, a.train, [&](std::size_t e, const EpochRecord& r) {
    std::cerr << "  [" << tag << "] epoch " << e + 1 << " loss " << fmt(r.train_loss) << " val_acc "
              << fmt(r.validation_accuracy) << " (" << fmt(seconds_since(t0), 3) << " s)\n";
  });
  a.seconds = seconds_since(t0);
  return a;
}

struct HeldOut {
  std::vector<Prediction> preds;
  ConfusionMatrix cm;
  double accuracy = 0.0;  // pooled over held-out frames
};

HeldOut evaluate_held_out(const Analog& a) {
  HeldOut h;
  std::vector<int> all_pred, all_truth;
  for (std::size_t s = kTrain; s < kSubjects; ++s) {
    h.preds.push_back(predict_run(a.result.weights, a.model, a.runs[s], a.train.stride));
    all_pred.insert(all_pred.end(), h.preds.back().labels.begin(), h.preds.back().labels.end());
    all_truth.insert(all_truth.end(), a.truth[s].begin(), a.truth[s].end());
  }
  h.cm = confusion(all_pred, all_truth, a.model.classes);
  h.accuracy = h.cm.accuracy();
  return h;
}

Outcome block_analog() {
  const auto t0 = Clock::now();
  const Analog a = build_and_train(DesignKind::block, 1.0, "block");
  const HeldOut h = evaluate_held_out(a);
  const auto hrf = canonical_hrf(a.design.tr_s);
  std::vector<double> sum(a.model.classes, 0.0);
  std::vector<int> count(a.model.classes, 0);
  for (std::size_t i = 0; i < h.preds.size(); ++i)
    for (const auto& s : hrf_similarity(h.preds[i].labels, a.truth[kTrain + i], a.design, hrf))
      if (s.pcc) {
        sum[static_cast<std::size_t>(s.condition)] += *s.pcc;
        ++count[static_cast<std::size_t>(s.condition)];
      }
  bool pcc_ok = true;
  std::string pccs;
  for (std::size_t c = 1; c < a.model.classes; ++c) {
    const double mean = count[c] ? sum[c] / count[c] : 0.0;
    pcc_ok = pcc_ok && count[c] > 0 && mean >= 0.90;
    pccs += (c > 1 ? " " : "") + a.design.conditions[c] + "=" + fmt(mean, 3);
  }
  const double elapsed = seconds_since(t0);
  const bool ok = h.accuracy >= 0.90 && pcc_ok && elapsed < 1200.0;
  return {ok, "held-out accuracy " + fmt(h.accuracy) + ", hrf PCC " + pccs + ", " + fmt(elapsed, 4) + " s"};
}

Outcome event_analog() {
  const auto t0 = Clock::now();
  const Analog a = build_and_train(DesignKind::event, 1.0, "event");
  const HeldOut h = evaluate_held_out(a);
  double chance = 0.0;
  std::size_t total = 0;
  for (const auto& row : h.cm.counts)
    for (auto v : row) total += static_cast<std::size_t>(v);
  for (const auto& row : h.cm.counts) {
    double n = 0.0;
    for (auto v : row) n += static_cast<double>(v);
    chance = std::max(chance, n / static_cast<double>(total));
  }
  const double rest_recall = class_scores(h.cm).recall[0];
  const bool ok = h.accuracy >= 2.0 * chance && rest_recall >= 0.90;
  return {ok, "held-out accuracy " + fmt(h.accuracy) + " vs 2 x chance " + fmt(2.0 * chance) + ", rest recall " +
                  fmt(rest_recall) + ", " + fmt(seconds_since(t0), 4) + " s"};
}

Outcome saliency_alignment() {
  const auto t0 = Clock::now();
  const Analog a = build_and_train(DesignKind::block, 0.0, "noise-free");
  const HeldOut h = evaluate_held_out(a);
  std::vector<SaliencyMap> maps;
  for (std::size_t s = kTrain; s < kSubjects; ++s) {
    // saliency uses stride-1 votes for the seed class
    const Prediction pred = predict_run(a.result.weights, a.model, a.runs[s], 1);
    maps.push_back(saliency_run(a.result.weights, a.model, a.runs[s], pred));
  }
  const SaliencyMap group = group_average(maps);
  const auto hrf = canonical_hrf(a.design.tr_s);
  const GlmResult glm = glm_map(group, a.design, hrf, a.train.label_shift);
  bool ok = true;
  std::string detail;
  for (int c : glm.conditions) {
    std::string value;
    try {
      const PeakSeries peak = peak_series(group, glm, c, a.design, hrf);
      ok = ok && peak.pcc >= 0.9;
      value = fmt(peak.pcc, 3);
    } catch (const std::exception&) {
      ok = false;
      value = "none";
    }
    detail += a.design.conditions[static_cast<std::size_t>(c)] + "=" + value + " ";
  }
  return {ok, "peak PCC " + detail + "(held-out accuracy " + fmt(h.accuracy) + ", " + fmt(seconds_since(t0), 4) + " s)"};
}

// ---- 5 ------------------------------------------------------------------------

Outcome oracles() {
  constexpr int kInstances = 1000;
  std::mt19937_64 rng(55);
  int vote_bad = 0, auc_bad = 0, fdr_bad = 0;
  double auc_err = 0.0;
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t k = pick(rng, 2, 7);
    std::vector<int> tallies(k);
    std::vector<double> probs(k);
    for (std::size_t c = 0; c < k; ++c) {
      tallies[c] = static_cast<int>(pick(rng, 0, 4));
      probs[c] = static_cast<double>(pick(rng, 0, 3)) / 3.0;
    }
    if (std::all_of(tallies.begin(), tallies.end(), [](int v) { return v == 0; })) tallies[pick(rng, 0, k - 1)] = 1;
    vote_bad += majority_vote(tallies, probs) != oracle::vote(tallies, probs);
  }
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t n = pick(rng, 2, 40);
    std::vector<double> scores(n);
    std::vector<int> pos(n);
    for (std::size_t j = 0; j < n; ++j) {
      scores[j] = static_cast<double>(pick(rng, 0, 9)) / 9.0;
      pos[j] = static_cast<int>(pick(rng, 0, 1));
    }
    pos[0] = 1;
    pos[1] = 0;
    const double e = std::abs(roc_auc(scores, pos).auc - oracle::pairwise_auc(scores, pos));
    auc_err = std::max(auc_err, e);
    auc_bad += e > 1e-9;
  }
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t m = pick(rng, 1, 30);
    std::vector<double> p(m);
    std::uniform_real_distribution<double> u(0.0, 0.2);
    for (auto& v : p) v = pick(rng, 0, 3) == 0 ? static_cast<double>(pick(rng, 0, 10)) / 100.0 : u(rng);
    const double q = std::uniform_real_distribution<double>(0.01, 0.3)(rng);
    fdr_bad += fdr_threshold(p, q) != oracle::bh_reject(p, q);
  }
  const bool ok = vote_bad == 0 && auc_bad == 0 && fdr_bad == 0;
  return {ok, std::to_string(kInstances) + " instances each: voting mismatches " + std::to_string(vote_bad) +
                  ", AUC max error " + fmt(auc_err, 2) + ", FDR mismatches " + std::to_string(fdr_bad)};
}

// ---- 6 ------------------------------------------------------------------------

// Membership after dilation by `dilate` face-adjacent steps.
bool near_roi(const Roi& roi, const std::array<std::size_t, 3>& v, const Grid& g, int dilate) {
  for (int dz = -dilate; dz <= dilate; ++dz)
    for (int dy = -dilate; dy <= dilate; ++dy)
      for (int dx = -dilate; dx <= dilate; ++dx) {
        if (std::abs(dz) + std::abs(dy) + std::abs(dx) > dilate) continue;
        const long z = static_cast<long>(v[0]) + dz, y = static_cast<long>(v[1]) + dy, x = static_cast<long>(v[2]) + dx;
        if (z < 0 || y < 0 || x < 0 || z >= static_cast<long>(g.d) || y >= static_cast<long>(g.h) ||
            x >= static_cast<long>(g.w))
          continue;
        if (roi.contains(static_cast<std::size_t>(z), static_cast<std::size_t>(y), static_cast<std::size_t>(x)))
          return true;
      }
  return false;
}

// GLM over the run volume itself, aligned like a harvested map.
bool localizes(std::uint64_t seed, double noise_sd, int dilate, std::string* where) {
  const TaskDesign design = build_design(DesignKind::block, seed);
  const Phantom phantom = default_phantom(Grid{20, 24, 20}, design.classes() - 1, noise_sd);
  const RunData run = standardize_run(render_run(design, phantom, seed));
  const std::size_t t = 16, offset = harvest_frame(t), n = window_count(design.frames, t, 1);
  SaliencyMap map{Tensor({n, phantom.grid.d, phantom.grid.h, phantom.grid.w}), offset};
  const std::size_t slice = run.volume.slice_size();
  std::copy_n(run.volume.data() + offset * slice, n * slice, map.frames.data());
  const auto hrf = canonical_hrf(design.tr_s);
  const GlmResult glm = glm_map(map, design, hrf, 0);
  bool ok = true;
  for (std::size_t i = 0; i < glm.conditions.size(); ++i) {
    const int c = glm.conditions[i];
    const PeakSeries peak = peak_series(map, glm, c, design, hrf);
    const bool inside = near_roi(phantom.rois[static_cast<std::size_t>(c - 1)], peak.voxel, phantom.grid, dilate);
    if (!inside && where) *where += " " + design.conditions[static_cast<std::size_t>(c)];
    ok = ok && inside;
  }
  return ok;
}

Outcome glm_localization() {
  std::string misses;
  const bool clean = localizes(7, 0.0, 0, &misses);
  int hits = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) hits += localizes(seed, 1.0, 1, nullptr);
  return {clean && hits >= 9, std::string("noise-free inside every ROI: ") + (clean ? "yes" : "no, missed" + misses) +
                                  "; noisy within dilated ROI for " + std::to_string(hits) + "/10 seeds"};
}

// ---- 8 ------------------------------------------------------------------------

Outcome glm_calibration() {
  const TaskDesign design = build_design(DesignKind::block, 3);
  const std::size_t n = window_count(design.frames, 16, 1);
  std::mt19937_64 rng(88);
  SaliencyMap map{oracle::random_tensor({n, 10, 10, 10}, rng), harvest_frame(16)};
  const GlmResult glm = glm_map(map, design, canonical_hrf(design.tr_s), 4);
  double worst = 0.0;
  for (const auto& p : glm.pvalue) {
    std::vector<double> v(p.values().begin(), p.values().end());
    worst = std::max(worst, ks_uniform(v));
  }
  return {worst < 0.05, "1000 white-noise voxels, largest KS statistic over conditions " + fmt(worst, 3)};
}

// ---- 9 ------------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    files[fs::relative(e.path(), dir).string()] = {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }
  return files;
}

bool run_chain(const fs::path& dir, std::string& failure) {
  fs::create_directories(dir);
  {
    std::ofstream(dir / "model.json") << R"({"t": 16, "c": 4, "stem_width": 4, "stage_widths": [4, 8, 32], "reduction": 2})";
    std::ofstream(dir / "train.json") << R"({"epochs": 3, "warmup_epochs": 1, "windows_per_run": 4, "seed": 9})";
  }
  const std::string bin = VOXDEC_CLI_PATH, d = dir.string();
  const std::vector<std::string> steps{
      "generate --design block --subjects 3 --seed 42 --grid 10x12x10 --out " + d + "/data",
      "train --data " + d + "/data --model-config " + d + "/model.json --train-config " + d + "/train.json --out " + d +
          "/weights.vwt",
      "predict --weights " + d + "/weights.vwt --run " + d + "/data/sub-002.json --out " + d + "/preds.csv",
      "eval --preds " + d + "/preds.csv --run " + d + "/data/sub-002.json --out " + d + "/metrics.json",
      "saliency --weights " + d + "/weights.vwt --runs " + d + "/data --fdr-q 0.05 --out " + d + "/saliency",
      "report --metrics " + d + "/metrics.json --series " + d + "/saliency/peak_left_hand.csv --series " + d +
          "/saliency/peak_tongue.csv --out " + d + "/report.svg"};
  for (const auto& s : steps) {
    const std::string cmd = "\"" + bin + "\" " + s + " > \"" + d + "/log.txt\" 2>&1";
    if (std::system(cmd.c_str()) != 0) {
      failure = s.substr(0, s.find(' '));
      return false;
    }
  }
  fs::remove(dir / "log.txt");
  return true;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("voxdec-acceptance-" + std::to_string(std::random_device{}()));
  std::string failure;
  const bool ran = run_chain(root / "a", failure) && run_chain(root / "b", failure);
  if (!ran) {
    fs::remove_all(root);
    return {false, "chain failed at " + failure};
  }
  const auto a = snapshot(root / "a"), b = snapshot(root / "b");
  std::vector<std::string> differ;
  for (const auto& [name, bytes] : a)
    if (!b.count(name) || b.at(name) != bytes) differ.push_back(name);
  const bool same_set = a.size() == b.size();
  fs::remove_all(root);
  const bool ok = same_set && differ.empty() && a.size() > 10;
  std::string detail = std::to_string(a.size()) + " artifacts compared across two runs";
  if (!differ.empty()) detail += ", first difference " + differ.front();
  return {ok, detail};
}

// ---- 10 -----------------------------------------------------------------------

Outcome volume_round_trip() {
  constexpr int kTensors = 10000;
  std::mt19937_64 rng(1010);
  std::uniform_int_distribution<std::uint32_t> bits;
  const fs::path file = fs::temp_directory_path() / ("voxdec-roundtrip-" + std::to_string(std::random_device{}()) + ".vwt");
  int bad = 0;
  for (int i = 0; i < kTensors; ++i) {
    Dims dims(pick(rng, 1, 4));
    for (auto& d : dims) d = pick(rng, 1, 5);
    Tensor t(dims);
    for (auto& v : t.values()) {
      float f;
      do f = std::bit_cast<float>(bits(rng));
      while (std::isnan(f));
      v = static_cast<double>(f);
    }
    write_volume(file, t);
    const Tensor back = read_volume(file);
    bad += !(back.dims() == t.dims() && std::memcmp(back.data(), t.data(), t.size() * sizeof(double)) == 0);
  }
  fs::remove(file);
  return {bad == 0, std::to_string(kTensors) + " tensors through write/read, " + std::to_string(bad) + " mismatches"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxdec acceptance suite"};
  std::vector<int> only;
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',')->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, gradients},       {2, protocol_constants}, {3, block_analog},    {4, event_analog},
      {5, oracles},         {6, glm_localization},   {7, saliency_alignment}, {8, glm_calibration},
      {9, determinism},     {10, volume_round_trip}};
  int failed = 0;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
