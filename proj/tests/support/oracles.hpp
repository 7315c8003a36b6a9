#pragma once

// Reference implementations used only by tests. They are written from the
// defining formulas and share no code with the library kernels.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "disent/tensor.hpp"

namespace oracle {

using disent::Shape;
using disent::Tensor;

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// y[n,oy,ox,co] = b[co] + sum_{ky,kx,ci} x[n, oy*s+ky-p, ox*s+kx-p, ci] * w[ky,kx,ci,co]
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  const std::size_t n = x.dim(0), h = x.dim(1), wd = x.dim(2), ci = x.dim(3);
  const std::size_t k = w.dim(0), co = w.dim(3);
  const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  Tensor y({n, oh, ow, co});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox)
        for (std::size_t c = 0; c < co; ++c) {
          double acc = b[c];
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
              for (std::size_t i = 0; i < ci; ++i) {
                acc += x[((s * h + iy) * wd + ix) * ci + i] * w[((ky * k + kx) * ci + i) * co + c];
              }
            }
          y[((s * oh + oy) * ow + ox) * co + c] = acc;
        }
  return y;
}

// Central-difference gradient of a scalar function with respect to every entry of `t`.
inline Tensor numeric_grad(Tensor& t, const std::function<double()>& f, double h = 1e-6) {
  Tensor g(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double keep = t[i];
    t[i] = keep + h;
    const double up = f();
    t[i] = keep - h;
    const double down = f();
    t[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

// max |a-b| / max(1, max|b|): relative error with an absolute floor for tiny gradients.
inline double rel_error(const Tensor& a, const Tensor& b) {
  double diff = 0.0, scale = 1.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return diff / scale;
}

// A fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("disent_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace oracle
