#include "stgormer/ndarray.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace stg {

std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

NdArray::NdArray(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

NdArray::NdArray(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_))
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " + shape_str(shape_));
}

std::size_t NdArray::offset(std::initializer_list<std::size_t> idx) const {
  if (idx.size() != shape_.size()) throw ShapeError("index rank mismatch for shape " + shape_str(shape_));
  std::size_t off = 0, k = 0;
  for (std::size_t i : idx) {
    if (i >= shape_[k]) throw std::out_of_range("index out of range");
    off = off * shape_[k++] + i;
  }
  return off;
}

double& NdArray::at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
double NdArray::at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

double NdArray::item() const {
  if (data_.size() != 1) throw ShapeError("item() on array of shape " + shape_str(shape_));
  return data_[0];
}

NdArray NdArray::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return NdArray(std::move(shape), data_);
}

void NdArray::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool NdArray::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const NdArray& a, const NdArray& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

NdArray softmax(const NdArray& x, std::size_t axis) {
  if (axis >= x.rank()) throw ShapeError("softmax axis out of range for " + shape_str(x.shape()));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t len = x.dim(axis);
  NdArray y(x.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double m = x[base];
      for (std::size_t k = 1; k < len; ++k) m = std::max(m, x[base + k * inner]);
      double s = 0;
      for (std::size_t k = 0; k < len; ++k) {
        double e = std::exp(x[base + k * inner] - m);
        y[base + k * inner] = e;
        s += e;
      }
      for (std::size_t k = 0; k < len; ++k) y[base + k * inner] /= s;
    }
  }
  return y;
}

}  // namespace stg
