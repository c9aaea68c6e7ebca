#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stg {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

/// Dense row-major array of doubles.
class NdArray {
 public:
  NdArray() = default;
  explicit NdArray(Shape shape, double fill = 0.0);
  NdArray(Shape shape, std::vector<double> data);

  static NdArray scalar(double v) { return NdArray(Shape{}, std::vector<double>{v}); }
  static NdArray vector(std::initializer_list<double> v) { return NdArray(Shape{v.size()}, std::vector<double>(v)); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::initializer_list<std::size_t> idx);
  double at(std::initializer_list<std::size_t> idx) const;
  double item() const;

  /// Same data, new shape of equal element count.
  NdArray reshaped(Shape shape) const;
  void fill(double v);

  bool all_finite() const noexcept;
  bool operator==(const NdArray&) const = default;

 private:
  std::size_t offset(std::initializer_list<std::size_t> idx) const;

  Shape shape_;
  std::vector<double> data_;
};

double max_abs_diff(const NdArray& a, const NdArray& b);

/// Numerically stable softmax along any axis.
NdArray softmax(const NdArray& x, std::size_t axis);

}  // namespace stg
