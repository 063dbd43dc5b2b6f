#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "voxdec/model.hpp"
#include "voxdec/tensor.hpp"

namespace voxdec {

inline constexpr double kDefaultTr = 0.72;

/// Double-gamma HRF sampled every tr_s seconds over duration_s, peak-normalized.
std::vector<double> canonical_hrf(double tr_s, double duration_s = 32.0);

/// Unnormalized double-gamma value at tau seconds (peak delay 6, undershoot 16, ratio 1/6).
double double_gamma(double tau_s);

struct TaskEvent {
  int condition = 0;
  std::size_t onset = 0;
  std::size_t duration = 0;
  friend bool operator==(const TaskEvent&, const TaskEvent&) = default;
};

struct TaskDesign {
  double tr_s = kDefaultTr;
  std::size_t frames = 0;
  std::vector<std::string> conditions;  // index 0 is rest
  std::vector<TaskEvent> events;

  std::size_t classes() const { return conditions.size(); }
  /// Throws DomainError naming the first violated invariant.
  void validate() const;
  /// Per-frame condition index; 0 where no event is active.
  std::vector<int> labels() const;
  int condition_index(const std::string& name) const;
  friend bool operator==(const TaskDesign&, const TaskDesign&) = default;
};

enum class DesignKind { block, event };

DesignKind parse_design_kind(const std::string& name);
std::string to_string(DesignKind kind);

/// Motor-like block design (284 frames, 7 classes) or gambling-like event design (253 frames, 4 classes).
TaskDesign build_design(DesignKind kind, std::uint64_t seed);

/// Boxcar of one condition convolved with the kernel, truncated to the run length.
std::vector<double> ideal_response(const TaskDesign& design, int condition, const std::vector<double>& hrf);
/// Same convolution applied to an arbitrary 0/1 indicator series.
std::vector<double> convolve_causal(const std::vector<double>& series, const std::vector<double>& kernel);

struct Roi {
  std::array<double, 3> center{};  // voxel coordinates (d, h, w)
  std::array<double, 3> radii{};
  double amplitude = 3.0;

  bool contains(std::size_t z, std::size_t y, std::size_t x) const;
  /// Membership in the ROI grown by `margin` voxels along every axis.
  bool contains_dilated(std::size_t z, std::size_t y, std::size_t x, double margin) const;
};

struct Phantom {
  Grid grid{};
  std::vector<Roi> rois;  // rois[c - 1] belongs to condition c
  double baseline = 100.0;
  double noise_sd = 1.0;

  void validate() const;
};

/// Disjoint ellipsoids with radii between 2 and 3 voxels, one per task condition.
Phantom default_phantom(Grid grid, std::size_t task_conditions, double noise_sd = 1.0);

struct RunData {
  Tensor volume;            // T x D x H x W
  std::vector<int> labels;  // length T
  TaskDesign design;
};

RunData render_run(const TaskDesign& design, const Phantom& phantom, std::uint64_t seed);

}  // namespace voxdec
