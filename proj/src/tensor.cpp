#include "disent/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "disent/error.hpp"

namespace disent {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw InputError("tensor data has " + std::to_string(data_.size()) + " values, shape " + shape_str(shape_) +
                     " needs " + std::to_string(shape_numel(shape_)));
  }
}

std::size_t Tensor::row_size() const { return shape_.empty() || shape_[0] == 0 ? 0 : data_.size() / shape_[0]; }

std::span<double> Tensor::row(std::size_t i) {
  const auto n = row_size();
  return std::span<double>(data_).subspan(i * n, n);
}

std::span<const double> Tensor::row(std::size_t i) const {
  const auto n = row_size();
  return std::span<const double>(data_).subspan(i * n, n);
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (shape_numel(shape) != data_.size()) {
    throw InputError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  const auto n = row_size();
  Shape s = shape_;
  s[0] = end - begin;
  std::vector<double> out(data_.begin() + static_cast<std::ptrdiff_t>(begin * n),
                          data_.begin() + static_cast<std::ptrdiff_t>(end * n));
  return Tensor(std::move(s), std::move(out));
}

Tensor Tensor::gather_rows(std::span<const std::size_t> indices) const {
  const auto n = row_size();
  Shape s = shape_;
  s[0] = indices.size();
  Tensor out(std::move(s));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = row(indices[i]);
    std::copy(src.begin(), src.end(), out.data() + i * n);
  }
  return out;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw InputError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

std::uint64_t hash_bytes(const void* data, std::size_t n, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t hash_tensor(const Tensor& t, std::uint64_t seed) {
  std::uint64_t h = hash_bytes(t.shape().data(), t.shape().size() * sizeof(std::size_t), seed);
  return hash_bytes(t.data(), t.size() * sizeof(double), h);
}

}  // namespace disent
