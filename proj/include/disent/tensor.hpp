#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace disent {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles. Images use NHWC layout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape()); }

  const Shape& shape() const { return shape_; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Contiguous slice along the leading axis.
  std::span<double> row(std::size_t i);
  std::span<const double> row(std::size_t i) const;
  std::size_t row_size() const;

  /// Same data, new shape; throws InputError when element counts differ.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  /// Copies rows [begin, end) along the leading axis.
  Tensor slice_rows(std::size_t begin, std::size_t end) const;
  /// Gathers the listed leading-axis rows in order.
  Tensor gather_rows(std::span<const std::size_t> indices) const;

  bool all_finite() const;
  void fill(double v);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Throws InputError naming `what` when shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

/// FNV-1a over the raw bytes of the values.
std::uint64_t hash_bytes(const void* data, std::size_t n, std::uint64_t seed = 1469598103934665603ULL);
std::uint64_t hash_tensor(const Tensor& t, std::uint64_t seed = 1469598103934665603ULL);

}  // namespace disent
