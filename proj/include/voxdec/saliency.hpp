#pragma once

#include <array>
#include <string>
#include <vector>

#include "voxdec/model.hpp"
#include "voxdec/pipeline.hpp"
#include "voxdec/stats.hpp"
#include "voxdec/synth.hpp"

namespace voxdec {

/// Guided-backprop input gradient for one (frame, class) logit of a window.
Tensor guided_window(const ModelWeights& weights, const ModelConfig& cfg, const Tensor& window,
                     std::size_t frame_idx, std::size_t class_idx);

/// Frame of each window whose gradient is kept: the 8th of 16.
inline std::size_t harvest_frame(std::size_t t) { return t / 2 - 1; }

struct SaliencyMap {
  Tensor frames;                 // n x D x H x W, one per window start
  std::size_t frame_offset = 0;  // run frame of frames[0]

  std::size_t count() const { return frames.dim(0); }
};

enum class SeedClass { predicted, truth };

/// Slides a stride-1 window over the run and keeps the harvested frame's
/// guided gradient, seeded with that frame's predicted (or true) class.
SaliencyMap saliency_run(const ModelWeights& weights, const ModelConfig& cfg, const RunData& standardized,
                         const Prediction& prediction, SeedClass seed = SeedClass::predicted,
                         std::span<const int> truth = {});

/// Signed elementwise mean.
SaliencyMap group_average(const std::vector<SaliencyMap>& maps);

struct GlmResult {
  std::vector<int> conditions;  // non-rest condition index per map
  std::vector<Tensor> beta;     // D x H x W each
  std::vector<Tensor> tstat;
  std::vector<Tensor> pvalue;
  std::size_t dof = 0;
};

/// Regressor matrix [intercept | HRF-convolved shifted indicator per non-rest
/// condition], rows aligned with the harvested frames.
DesignMatrix glm_design(const TaskDesign& design, const std::vector<double>& hrf, std::size_t label_shift,
                        std::size_t frame_offset, std::size_t rows);

GlmResult glm_map(const SaliencyMap& map, const TaskDesign& design, const std::vector<double>& hrf,
                  std::size_t label_shift);

/// Benjamini-Hochberg rejections at level q.
std::vector<bool> fdr_threshold(std::span<const double> pvals, double q);

struct PeakSeries {
  std::array<std::size_t, 3> voxel{};  // (d, h, w)
  std::vector<double> series;          // harvested gradient at the voxel
  std::vector<double> ideal;           // ideal response at the matching run frames
  std::vector<double> stimulus;        // 0/1 stimulus at the matching run frames
  double pcc = 0.0;
};

PeakSeries peak_series(const SaliencyMap& map, const GlmResult& glm, int condition, const TaskDesign& design,
                       const std::vector<double>& hrf);

}  // namespace voxdec
