#pragma once

// Volume-wise decoder: a 1x1x1 time embedding folds the t frames of a window
// into channels, a residual backbone with channel attention encodes the
// window, and a shared head decodes one logit row per frame.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voxdec/ops.hpp"
#include "voxdec/tensor.hpp"

namespace voxdec {

struct Grid {
  std::size_t d = 20, h = 24, w = 20;

  std::size_t voxels() const { return d * h * w; }
  Dims dims() const { return {d, h, w}; }
  friend bool operator==(const Grid&, const Grid&) = default;
};

struct ModelConfig {
  std::size_t t = 16;                           // window length in frames
  std::size_t c = 16;                           // time-embedding channels
  std::size_t stem_width = 8;
  std::vector<std::size_t> stage_widths{8, 32, 112};
  std::size_t blocks_per_stage = 1;
  std::size_t classes = 7;                      // K, rest included
  std::size_t reduction = 4;                    // attention bottleneck ratio r
  Grid grid{};
  /// Test hook: every relu becomes the identity (forward and backward).
  bool identity_activations = false;

  std::size_t final_width() const { return stage_widths.back(); }
  std::size_t features_per_frame() const { return final_width() / t; }
  void validate() const;
};

struct ConvLayer {
  Tensor w, b;
};

struct DenseLayer {
  Tensor w, b;
};

struct ResidualBlock {
  ConvLayer conv1, conv2;
  std::optional<ConvLayer> proj;  // 1x1x1 skip projection when widths change
  DenseLayer squeeze, excite;     // attention bottleneck 2C -> C/r -> C
};

struct Stage {
  std::vector<ResidualBlock> blocks;
  ConvLayer down;  // stride-2 3x3x3
};

struct ModelWeights {
  ConvLayer embed;
  ConvLayer stem;
  std::vector<Stage> stages;
  DenseLayer head;  // K x (C_final / t)

  /// Visits every parameter array in a fixed canonical order.
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;

  std::size_t parameter_count() const;
  /// Same structure, all zeros.
  ModelWeights zeros_like() const;
  ModelWeights& operator+=(const ModelWeights& other);
  ModelWeights& operator*=(double s);

  friend bool operator==(const ModelWeights&, const ModelWeights&);
};

/// Zero-mean normal kernels with variance 2/fan_in; zero biases.
ModelWeights init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Throws ShapeError unless every array matches what `cfg` implies.
void check_weights(const ModelConfig& cfg, const ModelWeights& weights);

Tensor time_embed(const Tensor& window, const ModelWeights& weights, const ModelConfig& cfg);

struct AttentionOutput {
  Tensor y;
  Tensor scores;  // one per channel, in (0, 1)
};

AttentionOutput channel_attention(const Tensor& x, const DenseLayer& squeeze, const DenseLayer& excite,
                                  bool identity_activations = false);

/// Pooled C_final vector -> t x K logits through one shared dense head.
Tensor decode_frames(const Tensor& feature, const DenseLayer& head, std::size_t t);

/// Intermediate values retained for the backward pass.
struct ForwardCache {
  struct BlockCache {
    Tensor input, a1, r1, z, r2, descriptor, hidden_pre, hidden, scores;
  };
  struct StageCache {
    std::vector<BlockCache> blocks;
    Tensor down_input, down_pre;
  };

  Tensor window;
  Tensor embedded;
  Tensor stem_pre;
  std::vector<StageCache> stages;
  Dims final_dims;
  Tensor pooled;
  Tensor logits;
  bool valid = false;
};

struct ForwardResult {
  Tensor probs;   // t x K
  Tensor logits;  // t x K
  ForwardCache cache;
};

ForwardResult forward(const Tensor& window, const ModelWeights& weights, const ModelConfig& cfg);

/// Gradients of the mean cross-entropy over the window's frames.
struct ParamGrads {
  double loss = 0.0;
  ModelWeights grads;
};

ParamGrads backward_standard(const ForwardCache& cache, std::span<const int> labels, const ModelWeights& weights,
                             const ModelConfig& cfg);

/// Input gradient for an arbitrary logit seed (t x K), with the given relu rule.
Tensor backward_input(const ForwardCache& cache, const Tensor& logit_seed, const ModelWeights& weights,
                      const ModelConfig& cfg, ReluMode mode);

}  // namespace voxdec
