#include "voxdec/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "voxdec/error.hpp"

namespace voxdec {

double double_gamma(double tau) {
  if (tau <= 0.0) return 0.0;
  // tau^5 e^-tau / Gamma(6) - (1/6) tau^15 e^-tau / Gamma(16), evaluated in log space
  const double main = std::exp(5.0 * std::log(tau) - tau - std::lgamma(6.0));
  const double undershoot = std::exp(15.0 * std::log(tau) - tau - std::lgamma(16.0));
  return main - undershoot / 6.0;
}

std::vector<double> canonical_hrf(double tr_s, double duration_s) {
  if (!(tr_s > 0.0)) throw DomainError("HRF sampling interval must be positive");
  const auto n = static_cast<std::size_t>(std::floor(duration_s / tr_s)) + 1;
  std::vector<double> kernel(n);
  for (std::size_t k = 0; k < n; ++k) kernel[k] = double_gamma(static_cast<double>(k) * tr_s);
  const double peak = *std::max_element(kernel.begin(), kernel.end());
  for (auto& v : kernel) v /= peak;
  return kernel;
}

void TaskDesign::validate() const {
  if (frames == 0) throw DomainError("design has no frames");
  if (conditions.empty() || conditions.front() != "rest") throw DomainError("design condition 0 must be rest");
  std::vector<int> owner(frames, -1);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (e.condition <= 0 || static_cast<std::size_t>(e.condition) >= conditions.size())
      throw DomainError("event " + std::to_string(i) + " has invalid condition " + std::to_string(e.condition));
    if (e.duration == 0) throw DomainError("event " + std::to_string(i) + " has zero duration");
    if (e.onset + e.duration > frames)
      throw DomainError("event " + std::to_string(i) + " ends after the run (" + std::to_string(e.onset + e.duration) +
                        " > " + std::to_string(frames) + ")");
    for (std::size_t f = e.onset; f < e.onset + e.duration; ++f) {
      if (owner[f] >= 0)
        throw DomainError("events " + std::to_string(owner[f]) + " and " + std::to_string(i) + " overlap at frame " +
                          std::to_string(f));
      owner[f] = static_cast<int>(i);
    }
  }
}

std::vector<int> TaskDesign::labels() const {
  std::vector<int> out(frames, 0);
  for (const auto& e : events)
    for (std::size_t f = e.onset; f < e.onset + e.duration && f < frames; ++f) out[f] = e.condition;
  return out;
}

int TaskDesign::condition_index(const std::string& name) const {
  const auto it = std::find(conditions.begin(), conditions.end(), name);
  if (it == conditions.end()) throw DomainError("unknown condition '" + name + "'");
  return static_cast<int>(it - conditions.begin());
}

DesignKind parse_design_kind(const std::string& name) {
  if (name == "block") return DesignKind::block;
  if (name == "event") return DesignKind::event;
  throw DomainError("design must be 'block' or 'event', got '" + name + "'");
}

std::string to_string(DesignKind kind) { return kind == DesignKind::block ? "block" : "event"; }

namespace {

// Motor task timing, in frames.
constexpr std::size_t kTaskBlock = 17;
constexpr std::size_t kCue = 4;
constexpr std::size_t kRestBlock = 21;
constexpr std::size_t kMotorLeadIn = 11;
// Gambling task timing, in frames.
constexpr std::size_t kTrial = 5;
constexpr std::size_t kTrialsPerBlock = 8;
constexpr std::size_t kPrimaryTrials = 6;
constexpr std::size_t kGamblingBlocks = 4;
constexpr std::size_t kGamblingLeadIn = 9;

std::vector<int> shuffled_without_repeats(std::vector<int> items, std::mt19937_64& rng) {
  for (;;) {
    std::shuffle(items.begin(), items.end(), rng);
    if (std::adjacent_find(items.begin(), items.end()) == items.end()) return items;
  }
}

TaskDesign motor_design(std::mt19937_64& rng) {
  TaskDesign d;
  d.conditions = {"rest", "left_hand", "right_hand", "left_foot", "right_foot", "tongue", "cue"};
  const int cue = 6;
  const auto order = shuffled_without_repeats({1, 1, 2, 2, 3, 3, 4, 4, 5, 5}, rng);
  // 10 cue+task units with rest blocks after the 3rd, 6th and 8th unit
  std::size_t f = kMotorLeadIn;
  for (std::size_t i = 0; i < order.size(); ++i) {
    d.events.push_back({cue, f, kCue});
    f += kCue;
    d.events.push_back({order[i], f, kTaskBlock});
    f += kTaskBlock;
    if (i == 2 || i == 5 || i == 7) f += kRestBlock;
  }
  d.frames = f;
  return d;
}

TaskDesign gambling_design(std::mt19937_64& rng) {
  TaskDesign d;
  d.conditions = {"rest", "win", "loss", "neutral"};
  const int win = 1, loss = 2, neutral = 3;
  std::vector<int> kinds{win, win, loss, loss};
  std::shuffle(kinds.begin(), kinds.end(), rng);
  std::size_t f = kGamblingLeadIn;
  for (std::size_t b = 0; b < kGamblingBlocks; ++b) {
    const int primary = kinds[b];
    std::vector<int> trials(kPrimaryTrials, primary);
    trials.push_back(neutral);
    trials.push_back(primary == win ? loss : win);
    std::shuffle(trials.begin(), trials.end(), rng);
    for (int c : trials) {
      d.events.push_back({c, f, kTrial});
      f += kTrial;
    }
    f += kRestBlock;
  }
  static_assert(kTrialsPerBlock == kPrimaryTrials + 2);
  d.frames = f;
  return d;
}

}  // namespace

TaskDesign build_design(DesignKind kind, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TaskDesign d = kind == DesignKind::block ? motor_design(rng) : gambling_design(rng);
  d.tr_s = kDefaultTr;
  d.validate();
  return d;
}

std::vector<double> convolve_causal(const std::vector<double>& series, const std::vector<double>& kernel) {
  std::vector<double> out(series.size(), 0.0);
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i] == 0.0) continue;
    for (std::size_t k = 0; k < kernel.size() && i + k < series.size(); ++k) out[i + k] += series[i] * kernel[k];
  }
  return out;
}

std::vector<double> ideal_response(const TaskDesign& design, int condition, const std::vector<double>& hrf) {
  if (condition < 0 || static_cast<std::size_t>(condition) >= design.conditions.size())
    throw DomainError("unknown condition index " + std::to_string(condition));
  std::vector<double> boxcar(design.frames, 0.0);
  for (const auto& e : design.events)
    if (e.condition == condition)
      for (std::size_t f = e.onset; f < e.onset + e.duration && f < design.frames; ++f) boxcar[f] = 1.0;
  return convolve_causal(boxcar, hrf);
}

bool Roi::contains(std::size_t z, std::size_t y, std::size_t x) const { return contains_dilated(z, y, x, 0.0); }

bool Roi::contains_dilated(std::size_t z, std::size_t y, std::size_t x, double margin) const {
  const std::array<double, 3> p{static_cast<double>(z), static_cast<double>(y), static_cast<double>(x)};
  double r2 = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double q = (p[a] - center[a]) / (radii[a] + margin);
    r2 += q * q;
  }
  return r2 <= 1.0 + 1e-12;
}

void Phantom::validate() const {
  if (!(noise_sd >= 0.0)) throw DomainError("phantom noise_sd must be >= 0");
  const std::array<double, 3> ext{static_cast<double>(grid.d), static_cast<double>(grid.h),
                                  static_cast<double>(grid.w)};
  for (std::size_t i = 0; i < rois.size(); ++i) {
    const auto& r = rois[i];
    if (!(r.amplitude > 0.0)) throw DomainError("phantom ROI " + std::to_string(i) + " needs a positive amplitude");
    for (int a = 0; a < 3; ++a) {
      if (!(r.radii[a] > 0.0)) throw DomainError("phantom ROI " + std::to_string(i) + " needs positive radii");
      if (r.center[a] - r.radii[a] < 0.0 || r.center[a] + r.radii[a] > ext[a] - 1.0)
        throw DomainError("phantom ROI " + std::to_string(i) + " extends outside the grid");
    }
  }
}

Phantom default_phantom(Grid grid, std::size_t task_conditions, double noise_sd) {
  static constexpr std::array<std::array<double, 3>, 6> kCenters{{{0.27, 0.25, 0.27},
                                                                   {0.27, 0.25, 0.73},
                                                                   {0.27, 0.75, 0.27},
                                                                   {0.27, 0.75, 0.73},
                                                                   {0.73, 0.25, 0.50},
                                                                   {0.73, 0.75, 0.50}}};
  static constexpr std::array<std::array<double, 3>, 6> kRadii{
      {{3, 2, 2}, {2, 3, 2}, {2, 2, 3}, {3, 3, 2}, {2, 3, 3}, {3, 3, 3}}};
  if (task_conditions > kCenters.size())
    throw DomainError("default phantom supports at most " + std::to_string(kCenters.size()) + " task conditions");
  const std::array<double, 3> ext{static_cast<double>(grid.d), static_cast<double>(grid.h),
                                  static_cast<double>(grid.w)};
  const double scale = std::min({1.0, ext[0] / 20.0, ext[1] / 24.0, ext[2] / 20.0});
  Phantom p;
  p.grid = grid;
  p.noise_sd = noise_sd;
  for (std::size_t c = 0; c < task_conditions; ++c) {
    Roi r;
    for (int a = 0; a < 3; ++a) {
      r.center[a] = std::round(kCenters[c][a] * (ext[a] - 1.0));
      r.radii[a] = std::max(1.0, kRadii[c][a] * scale);
    }
    r.amplitude = 3.0;
    p.rois.push_back(r);
  }
  p.validate();
  return p;
}

RunData render_run(const TaskDesign& design, const Phantom& phantom, std::uint64_t seed) {
  design.validate();
  phantom.validate();
  if (phantom.rois.size() + 1 != design.conditions.size())
    throw DomainError("phantom has " + std::to_string(phantom.rois.size()) + " ROIs but the design has " +
                      std::to_string(design.conditions.size() - 1) + " task conditions");
  const auto& g = phantom.grid;
  const auto hrf = canonical_hrf(design.tr_s);
  const auto n_vox = g.voxels();

  // signal template: per-voxel list of (condition, amplitude)
  std::vector<std::vector<std::pair<int, double>>> members(n_vox);
  for (std::size_t z = 0, v = 0; z < g.d; ++z)
    for (std::size_t y = 0; y < g.h; ++y)
      for (std::size_t x = 0; x < g.w; ++x, ++v)
        for (std::size_t c = 0; c < phantom.rois.size(); ++c)
          if (phantom.rois[c].contains(z, y, x)) members[v].emplace_back(static_cast<int>(c + 1), phantom.rois[c].amplitude);

  std::vector<std::vector<double>> responses(design.conditions.size());
  for (std::size_t c = 1; c < design.conditions.size(); ++c)
    responses[c] = ideal_response(design, static_cast<int>(c), hrf);

  RunData run;
  run.design = design;
  run.labels = design.labels();
  run.volume = Tensor({design.frames, g.d, g.h, g.w}, phantom.baseline);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t f = 0; f < design.frames; ++f) {
    auto frame = run.volume.slice(f);
    for (std::size_t v = 0; v < n_vox; ++v) {
      double value = phantom.baseline;
      for (const auto& [c, amp] : members[v]) value += amp * responses[static_cast<std::size_t>(c)][f];
      if (phantom.noise_sd > 0.0) value += phantom.noise_sd * noise(rng);
      frame[v] = value;
    }
  }
  return run;
}

}  // namespace voxdec
