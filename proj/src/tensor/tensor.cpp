#include "voxdec/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "voxdec/error.hpp"

namespace voxdec {

std::size_t element_count(const Dims& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::string format_dims(const Dims& dims) {
  std::ostringstream out;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out << 'x';
    out << dims[i];
  }
  return out.str();
}

Tensor::Tensor(Dims dims, double fill) : dims_(std::move(dims)) {
  for (auto d : dims_)
    if (d == 0) throw ShapeError("tensor extents must be positive: " + format_dims(dims_));
  data_.assign(element_count(dims_), fill);
}

Tensor::Tensor(Dims dims, std::vector<double> values)
    : dims_(std::move(dims)), data_(values.begin(), values.end()) {
  for (auto d : dims_)
    if (d == 0) throw ShapeError("tensor extents must be positive: " + format_dims(dims_));
  if (element_count(dims_) != data_.size())
    throw ShapeError("tensor " + format_dims(dims_) + " needs " + std::to_string(element_count(dims_)) +
                     " values, got " + std::to_string(data_.size()));
}

std::size_t Tensor::slice_size() const { return dims_.empty() ? 0 : data_.size() / dims_[0]; }

std::span<double> Tensor::slice(std::size_t i) {
  const auto n = slice_size();
  return std::span<double>(data_).subspan(i * n, n);
}

std::span<const double> Tensor::slice(std::size_t i) const {
  const auto n = slice_size();
  return std::span<const double>(data_).subspan(i * n, n);
}

Tensor Tensor::reshaped(Dims dims) const {
  if (element_count(dims) != data_.size())
    throw ShapeError("cannot reshape " + format_dims(dims_) + " to " + format_dims(dims));
  Tensor out;
  out.dims_ = std::move(dims);
  out.data_ = data_;
  return out;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_dims(*this, other, "tensor add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void require_same_dims(const Tensor& a, const Tensor& b, const char* what) {
  if (a.dims() != b.dims())
    throw ShapeError(std::string(what) + ": extents " + format_dims(a.dims()) + " vs " + format_dims(b.dims()));
}

}  // namespace voxdec
