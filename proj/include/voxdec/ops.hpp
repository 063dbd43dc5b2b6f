#pragma once

// Differentiable primitives. Every forward rule has a matching vjp that
// returns the gradient of sum(upstream * output) with respect to its inputs.

#include <span>
#include <vector>

#include "voxdec/tensor.hpp"

namespace voxdec {

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

/// Output extents of a 3D cross-correlation; throws ShapeError when any is < 1.
Dims conv3d_output_dims(const Dims& x, const Dims& w, ConvGeometry g);

/// x: Cin x D x H x W, w: Cout x Cin x kd x kh x kw, b: Cout. Zero padding.
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, ConvGeometry g);

struct ConvGrads {
  Tensor x;  // empty when not requested
  Tensor w;  // empty when not requested
  Tensor b;
};

ConvGrads conv3d_vjp(const Tensor& x, const Tensor& w, ConvGeometry g, const Tensor& upstream,
                     bool want_x = true, bool want_w = true);

enum class ReluMode {
  standard,  // pass upstream where the input was positive
  guided,    // additionally require a positive upstream
};

Tensor relu(const Tensor& x);
/// `x` is the forward input (pre-activation).
Tensor relu_vjp(const Tensor& x, const Tensor& upstream, ReluMode mode);

Tensor sigmoid(const Tensor& x);
/// `y` is the forward output of sigmoid.
Tensor sigmoid_vjp(const Tensor& y, const Tensor& upstream);

/// y = w x + b with w: M x N.
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);

struct DenseGrads {
  Tensor x, w, b;
};
DenseGrads dense_vjp(const Tensor& x, const Tensor& w, const Tensor& upstream);

enum class PoolKind { avg, max };

/// Per-channel reduction over all spatial positions: C x ... -> C.
Tensor pool_global(const Tensor& x, PoolKind kind);
/// Max routes each channel's upstream to the first maximal element (row-major).
Tensor pool_global_vjp(const Tensor& x, PoolKind kind, const Tensor& upstream);

/// Row-wise numerically stable softmax of a rows x K matrix.
Tensor softmax_rows(const Tensor& logits);

struct SoftmaxXent {
  double loss = 0.0;  // mean over rows of -log p[row, label]
  Tensor probs;
  Tensor grad_logits;
};

SoftmaxXent softmax_xent(const Tensor& logits, std::span<const int> labels);

}  // namespace voxdec
