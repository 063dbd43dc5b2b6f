#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "voxdec/model.hpp"
#include "voxdec/synth.hpp"
#include "voxdec/tensor.hpp"

namespace voxdec {

struct TrainConfig {
  std::size_t batch_size = 16;
  double weight_decay = 0.05;
  std::size_t epochs = 20;
  std::size_t warmup_epochs = 2;
  std::size_t window = 16;       // t
  std::size_t label_shift = 4;   // l
  std::size_t stride = 1;        // s, used at inference
  std::size_t windows_per_run = 24;
  double lr_start = 2e-5;
  double lr_peak = 2e-4;
  double lr_end = 0.0;
  /// Runs taken from the end of the training list for per-epoch validation.
  std::size_t validation_runs = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-voxel z-scoring over time; zero-variance voxels become all zero.
RunData standardize_run(const RunData& run);

/// Delays labels by l frames; the first l frames become rest.
std::vector<int> shift_labels(std::span<const int> labels, std::size_t l);

/// Frames [start, start + t) of a T x D x H x W volume.
Tensor extract_window(const Tensor& volume, std::size_t start, std::size_t t);

struct Window {
  std::size_t start = 0;
  Tensor frames;            // t x D x H x W
  std::vector<int> labels;  // length t
};

Window sample_window(const RunData& run, std::span<const int> shifted_labels, std::size_t t, std::mt19937_64& rng);

struct EpochRecord {
  double train_loss = 0.0;
  double validation_accuracy = 0.0;
};

struct TrainResult {
  ModelWeights weights;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(std::size_t epoch, const EpochRecord&)>;

/// Runs must already be standardized; windows are drawn from all of them
/// except the trailing `validation_runs`.
TrainResult train(const std::vector<RunData>& runs, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const EpochCallback& on_epoch = {});

struct Prediction {
  std::vector<int> labels;  // length T
  Tensor mean_probs;        // T x K
  std::vector<std::vector<int>> tallies;  // T rows of K counts

  std::size_t frames() const { return labels.size(); }
  std::size_t coverage(std::size_t frame) const;
};

std::size_t window_count(std::size_t frames, std::size_t t, std::size_t stride);

/// Sliding-window inference with per-frame majority voting. Frames not
/// covered by any window (possible when stride > 1) keep zero tallies and label 0.
Prediction predict_run(const ModelWeights& weights, const ModelConfig& cfg, const RunData& standardized,
                       std::size_t stride = 1);

/// Most votes; ties go to the larger mean probability, then the smaller index.
int majority_vote(std::span<const int> tallies, std::span<const double> mean_probs);

/// Fraction of frames where pred == truth (over frames with at least one vote).
double frame_accuracy(const Prediction& pred, std::span<const int> truth);

}  // namespace voxdec
