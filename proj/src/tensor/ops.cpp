#include "voxdec/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "voxdec/error.hpp"

namespace voxdec {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

struct ConvShape {
  std::size_t cin, d, h, w;         // input
  std::size_t cout, kd, kh, kw;     // kernel
  std::size_t od, oh, ow;           // output
  std::size_t stride, pad;

  std::size_t in_spatial() const { return d * h * w; }
  std::size_t out_spatial() const { return od * oh * ow; }
  std::size_t patch() const { return cin * kd * kh * kw; }
  bool pointwise() const { return kd == 1 && kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

ConvShape conv_shape(const Dims& x, const Dims& w, ConvGeometry g) {
  const Dims out = conv3d_output_dims(x, w, g);
  return {x[0], x[1], x[2], x[3], w[0], w[2], w[3], w[4], out[1], out[2], out[3], g.stride, g.pad};
}

// Scratch buffer for the unfolded patch matrix, reused across calls on a thread.
AlignedBuffer& scratch(std::size_t n) {
  thread_local AlignedBuffer buf;
  if (buf.size() < n) buf.resize(n);
  return buf;
}

// Unfold output planes [z0, z1) of x into a (patch x planes*oh*ow) row-major matrix.
void im2col(const ConvShape& s, const double* x, double* col, std::size_t z0, std::size_t z1) {
  const auto plane = s.oh * s.ow;
  const auto n_out = (z1 - z0) * plane;
  const long pad = static_cast<long>(s.pad);
  std::size_t row = 0;
  for (std::size_t c = 0; c < s.cin; ++c) {
    const double* xc = x + c * s.in_spatial();
    for (std::size_t kz = 0; kz < s.kd; ++kz)
      for (std::size_t ky = 0; ky < s.kh; ++ky)
        for (std::size_t kx = 0; kx < s.kw; ++kx, ++row) {
          double* dst = col + row * n_out;
          for (std::size_t oz = z0; oz < z1; ++oz) {
            const long iz = static_cast<long>(oz * s.stride + kz) - pad;
            for (std::size_t oy = 0; oy < s.oh; ++oy) {
              double* out = dst + (oz - z0) * plane + oy * s.ow;
              const long iy = static_cast<long>(oy * s.stride + ky) - pad;
              if (iz < 0 || iz >= static_cast<long>(s.d) || iy < 0 || iy >= static_cast<long>(s.h)) {
                std::fill(out, out + s.ow, 0.0);
                continue;
              }
              const double* src = xc + (static_cast<std::size_t>(iz) * s.h + static_cast<std::size_t>(iy)) * s.w;
              for (std::size_t ox = 0; ox < s.ow; ++ox) {
                const long ix = static_cast<long>(ox * s.stride + kx) - pad;
                out[ox] = (ix < 0 || ix >= static_cast<long>(s.w)) ? 0.0 : src[ix];
              }
            }
          }
        }
  }
}

// Adjoint of im2col: scatter-add the patch matrix back onto the input grid.
void col2im(const ConvShape& s, const double* col, double* x, std::size_t z0, std::size_t z1) {
  const auto plane = s.oh * s.ow;
  const auto n_out = (z1 - z0) * plane;
  const long pad = static_cast<long>(s.pad);
  std::size_t row = 0;
  for (std::size_t c = 0; c < s.cin; ++c) {
    double* xc = x + c * s.in_spatial();
    for (std::size_t kz = 0; kz < s.kd; ++kz)
      for (std::size_t ky = 0; ky < s.kh; ++ky)
        for (std::size_t kx = 0; kx < s.kw; ++kx, ++row) {
          const double* src = col + row * n_out;
          for (std::size_t oz = z0; oz < z1; ++oz) {
            const long iz = static_cast<long>(oz * s.stride + kz) - pad;
            if (iz < 0 || iz >= static_cast<long>(s.d)) continue;
            for (std::size_t oy = 0; oy < s.oh; ++oy) {
              const long iy = static_cast<long>(oy * s.stride + ky) - pad;
              if (iy < 0 || iy >= static_cast<long>(s.h)) continue;
              const double* in = src + (oz - z0) * plane + oy * s.ow;
              double* dst = xc + (static_cast<std::size_t>(iz) * s.h + static_cast<std::size_t>(iy)) * s.w;
              for (std::size_t ox = 0; ox < s.ow; ++ox) {
                const long ix = static_cast<long>(ox * s.stride + kx) - pad;
                if (ix >= 0 && ix < static_cast<long>(s.w)) dst[ix] += in[ox];
              }
            }
          }
        }
  }
}

// Output z-planes per im2col tile, sized so the tile stays cache resident.
std::size_t tile_planes(const ConvShape& s) {
  constexpr std::size_t kTileDoubles = std::size_t{1} << 17;
  const auto per_plane = s.patch() * s.oh * s.ow;
  return std::clamp<std::size_t>(kTileDoubles / std::max<std::size_t>(per_plane, 1), 1, s.od);
}

}  // namespace

Dims conv3d_output_dims(const Dims& x, const Dims& w, ConvGeometry g) {
  if (x.size() != 4) throw ShapeError("conv3d input must be C x D x H x W, got " + format_dims(x));
  if (w.size() != 5) throw ShapeError("conv3d kernel must be Cout x Cin x kd x kh x kw, got " + format_dims(w));
  if (w[1] != x[0])
    throw ShapeError("conv3d channel mismatch: input has " + std::to_string(x[0]) + ", kernel expects " +
                     std::to_string(w[1]));
  if (g.stride < 1) throw ShapeError("conv3d stride must be >= 1");
  Dims out{w[0], 0, 0, 0};
  for (int a = 0; a < 3; ++a) {
    const long span = static_cast<long>(x[a + 1] + 2 * g.pad) - static_cast<long>(w[a + 2]);
    if (span < 0)
      throw ShapeError("conv3d output extent would be non-positive for input " + format_dims(x) + " and kernel " +
                       format_dims(w));
    out[a + 1] = static_cast<std::size_t>(span) / g.stride + 1;
  }
  return out;
}

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, ConvGeometry g) {
  const ConvShape s = conv_shape(x.dims(), w.dims(), g);
  if (b.size() != s.cout) throw ShapeError("conv3d bias length must equal output channels");
  Tensor y({s.cout, s.od, s.oh, s.ow});
  const auto n = s.out_spatial();
  ConstMatMap kernel(w.data(), s.cout, s.patch());
  MatMap out(y.data(), s.cout, n);
  if (s.pointwise()) {
    out.noalias() = kernel * ConstMatMap(x.data(), s.cin, n);
  } else {
    const auto plane = s.oh * s.ow;
    const auto step = tile_planes(s);
    auto& col = scratch(s.patch() * step * plane);
    for (std::size_t z0 = 0; z0 < s.od; z0 += step) {
      const auto z1 = std::min(s.od, z0 + step);
      const auto cols = (z1 - z0) * plane;
      im2col(s, x.data(), col.data(), z0, z1);
      out.middleCols(z0 * plane, cols).noalias() = kernel * ConstMatMap(col.data(), s.patch(), cols);
    }
  }
  for (std::size_t c = 0; c < s.cout; ++c) out.row(c).array() += b[c];
  return y;
}

ConvGrads conv3d_vjp(const Tensor& x, const Tensor& w, ConvGeometry g, const Tensor& upstream, bool want_x,
                     bool want_w) {
  const ConvShape s = conv_shape(x.dims(), w.dims(), g);
  if (upstream.dims() != Dims{s.cout, s.od, s.oh, s.ow})
    throw ShapeError("conv3d vjp upstream has extents " + format_dims(upstream.dims()));
  const auto n = s.out_spatial();
  ConstMatMap up(upstream.data(), s.cout, n);
  ConvGrads grads;
  grads.b = Tensor({s.cout});
  for (std::size_t c = 0; c < s.cout; ++c) grads.b[c] = up.row(c).sum();

  if (want_w) {
    grads.w = Tensor(w.dims());
    MatMap gw(grads.w.data(), s.cout, s.patch());
    if (s.pointwise()) {
      gw.noalias() = up * ConstMatMap(x.data(), s.cin, n).transpose();
    } else {
      const auto plane = s.oh * s.ow;
      const auto step = tile_planes(s);
      auto& col = scratch(s.patch() * step * plane);
      gw.setZero();
      for (std::size_t z0 = 0; z0 < s.od; z0 += step) {
        const auto z1 = std::min(s.od, z0 + step);
        const auto cols = (z1 - z0) * plane;
        im2col(s, x.data(), col.data(), z0, z1);
        gw.noalias() += up.middleCols(z0 * plane, cols) * ConstMatMap(col.data(), s.patch(), cols).transpose();
      }
    }
  }
  if (want_x) {
    grads.x = Tensor(x.dims());
    ConstMatMap kernel(w.data(), s.cout, s.patch());
    if (s.pointwise()) {
      MatMap(grads.x.data(), s.cin, n).noalias() = kernel.transpose() * up;
    } else {
      const auto plane = s.oh * s.ow;
      const auto step = tile_planes(s);
      auto& col = scratch(s.patch() * step * plane);
      for (std::size_t z0 = 0; z0 < s.od; z0 += step) {
        const auto z1 = std::min(s.od, z0 + step);
        const auto cols = (z1 - z0) * plane;
        MatMap(col.data(), s.patch(), cols).noalias() = kernel.transpose() * up.middleCols(z0 * plane, cols);
        col2im(s, col.data(), grads.x.data(), z0, z1);
      }
    }
  }
  return grads;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor relu_vjp(const Tensor& x, const Tensor& upstream, ReluMode mode) {
  require_same_dims(x, upstream, "relu vjp");
  Tensor g(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool open = x[i] > 0.0 && (mode == ReluMode::standard || upstream[i] > 0.0);
    g[i] = open ? upstream[i] : 0.0;
  }
  return g;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.values()) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  return y;
}

Tensor sigmoid_vjp(const Tensor& y, const Tensor& upstream) {
  require_same_dims(y, upstream, "sigmoid vjp");
  Tensor g(y.dims());
  for (std::size_t i = 0; i < y.size(); ++i) g[i] = upstream[i] * y[i] * (1.0 - y[i]);
  return g;
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2) throw ShapeError("dense weight must be M x N, got " + format_dims(w.dims()));
  const auto m = w.dim(0), n = w.dim(1);
  if (x.size() != n)
    throw ShapeError("dense dimension mismatch: input length " + std::to_string(x.size()) + ", weight " +
                     format_dims(w.dims()));
  if (b.size() != m) throw ShapeError("dense bias length must equal output size");
  Tensor y({m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = b[i];
    const double* row = w.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
  return y;
}

DenseGrads dense_vjp(const Tensor& x, const Tensor& w, const Tensor& upstream) {
  if (w.rank() != 2 || x.size() != w.dim(1) || upstream.size() != w.dim(0))
    throw ShapeError("dense vjp dimension mismatch for weight " + format_dims(w.dims()));
  const auto m = w.dim(0), n = w.dim(1);
  DenseGrads g{Tensor(x.dims()), Tensor(w.dims()), Tensor({m})};
  for (std::size_t i = 0; i < m; ++i) {
    const double u = upstream[i];
    g.b[i] = u;
    const double* row = w.data() + i * n;
    double* grow = g.w.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      grow[j] = u * x[j];
      g.x[j] += row[j] * u;
    }
  }
  return g;
}

Tensor pool_global(const Tensor& x, PoolKind kind) {
  if (x.rank() < 2) throw ShapeError("global pooling needs a channel axis and spatial extents");
  const auto channels = x.dim(0);
  const auto n = x.slice_size();
  Tensor y({channels});
  for (std::size_t c = 0; c < channels; ++c) {
    const auto s = x.slice(c);
    if (kind == PoolKind::avg) {
      double acc = 0.0;
      for (double v : s) acc += v;
      y[c] = acc / static_cast<double>(n);
    } else {
      y[c] = *std::max_element(s.begin(), s.end());
    }
  }
  return y;
}

Tensor pool_global_vjp(const Tensor& x, PoolKind kind, const Tensor& upstream) {
  const auto channels = x.dim(0);
  if (upstream.size() != channels) throw ShapeError("global pooling vjp needs one upstream value per channel");
  const auto n = x.slice_size();
  Tensor g(x.dims());
  for (std::size_t c = 0; c < channels; ++c) {
    auto dst = g.slice(c);
    if (kind == PoolKind::avg) {
      const double share = upstream[c] / static_cast<double>(n);
      std::fill(dst.begin(), dst.end(), share);
    } else {
      const auto s = x.slice(c);
      // max_element returns the first maximum
      dst[static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin())] = upstream[c];
    }
  }
  return g;
}

Tensor softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax expects rows x K logits");
  const auto rows = logits.dim(0), k = logits.dim(1);
  Tensor p(logits.dims());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = logits.data() + r * k;
    double* out = p.data() + r * k;
    const double peak = *std::max_element(in, in + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += out[j] = std::exp(in[j] - peak);
    for (std::size_t j = 0; j < k; ++j) out[j] /= total;
  }
  return p;
}

SoftmaxXent softmax_xent(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ShapeError("softmax_xent expects rows x K logits");
  const auto rows = logits.dim(0), k = logits.dim(1);
  if (labels.size() != rows)
    throw ShapeError("softmax_xent has " + std::to_string(rows) + " rows but " + std::to_string(labels.size()) +
                     " labels");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= k)
      throw DomainError("label " + std::to_string(l) + " outside [0, " + std::to_string(k) + ")");

  SoftmaxXent out;
  out.probs = Tensor(logits.dims());
  out.grad_logits = Tensor(logits.dims());
  const double inv_rows = 1.0 / static_cast<double>(rows);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = logits.data() + r * k;
    const double peak = *std::max_element(in, in + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(in[j] - peak);
    const double log_total = std::log(total);
    const auto label = static_cast<std::size_t>(labels[r]);
    loss -= in[label] - peak - log_total;
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(in[j] - peak - log_total);
      out.probs[r * k + j] = p;
      out.grad_logits[r * k + j] = (p - (j == label ? 1.0 : 0.0)) * inv_rows;
    }
  }
  out.loss = loss * inv_rows;
  return out;
}

}  // namespace voxdec
