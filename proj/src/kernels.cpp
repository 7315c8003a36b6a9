#include "disent/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "disent/error.hpp"

namespace disent::kernels {
namespace {

void check_conv_args(const Tensor& x, const Tensor& w, const Tensor& b, const char* what) {
  if (x.rank() != 4 || w.rank() != 4 || b.rank() != 1) throw InputError(std::string(what) + ": bad tensor ranks");
  if (w.dim(0) != w.dim(1)) throw InputError(std::string(what) + ": kernel must be square");
  if (x.dim(3) != w.dim(2)) {
    throw InputError(std::string(what) + ": input has " + std::to_string(x.dim(3)) + " channels, weight expects " +
                     std::to_string(w.dim(2)));
  }
  if (b.dim(0) != w.dim(3)) throw InputError(std::string(what) + ": bias width mismatch");
}

// Valid (iy, ix) tap positions are skipped via signed arithmetic.
inline bool in_range(std::ptrdiff_t v, std::size_t n) { return v >= 0 && v < static_cast<std::ptrdiff_t>(n); }

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, ConvGeometry g) {
  check_conv_args(x, w, b, "conv2d");
  const std::size_t n = x.dim(0), h = x.dim(1), wd = x.dim(2), ci = x.dim(3), co = w.dim(3), k = g.kernel;
  if (h + 2 * g.pad < k || wd + 2 * g.pad < k) throw InputError("conv2d: input smaller than kernel");
  const std::size_t ho = g.conv_out(h), wo = g.conv_out(wd);
  Tensor y({n, ho, wo, co});
  const double* xp = x.data();
  const double* wp = w.data();
  double* yp = y.data();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double* out = yp + ((s * ho + oy) * wo + ox) * co;
        std::copy(b.data(), b.data() + co, out);
        for (std::size_t ky = 0; ky < k; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (!in_range(iy, h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (!in_range(ix, wd)) continue;
            const double* in = xp + ((s * h + iy) * wd + ix) * ci;
            const double* wk = wp + (ky * k + kx) * ci * co;
            for (std::size_t c = 0; c < ci; ++c) {
              const double xv = in[c];
              const double* wr = wk + c * co;
              for (std::size_t o = 0; o < co; ++o) out[o] += xv * wr[o];
            }
          }
        }
      }
    }
  }
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& grad_y, ConvGeometry g, Tensor* grad_x,
                     Tensor* grad_w, Tensor* grad_b) {
  const std::size_t n = x.dim(0), h = x.dim(1), wd = x.dim(2), ci = x.dim(3), co = w.dim(3), k = g.kernel;
  const std::size_t ho = grad_y.dim(1), wo = grad_y.dim(2);
  if (grad_x) *grad_x = Tensor(x.shape());
  const double* xp = x.data();
  const double* wp = w.data();
  const double* gyp = grad_y.data();
  double* gxp = grad_x ? grad_x->data() : nullptr;
  double* gwp = grad_w ? grad_w->data() : nullptr;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const double* gy = gyp + ((s * ho + oy) * wo + ox) * co;
        if (grad_b) {
          for (std::size_t o = 0; o < co; ++o) (*grad_b)[o] += gy[o];
        }
        for (std::size_t ky = 0; ky < k; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (!in_range(iy, h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (!in_range(ix, wd)) continue;
            const std::size_t in_off = ((s * h + iy) * wd + ix) * ci;
            const std::size_t w_off = (ky * k + kx) * ci * co;
            for (std::size_t c = 0; c < ci; ++c) {
              const double* wr = wp + w_off + c * co;
              if (gxp) {
                double acc = 0.0;
                for (std::size_t o = 0; o < co; ++o) acc += gy[o] * wr[o];
                gxp[in_off + c] += acc;
              }
              if (gwp) {
                const double xv = xp[in_off + c];
                double* gw = gwp + w_off + c * co;
                for (std::size_t o = 0; o < co; ++o) gw[o] += xv * gy[o];
              }
            }
          }
        }
      }
    }
  }
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, ConvGeometry g) {
  check_conv_args(x, w, b, "conv_transpose2d");
  const std::size_t n = x.dim(0), h = x.dim(1), wd = x.dim(2), ci = x.dim(3), co = w.dim(3), k = g.kernel;
  const std::size_t ho = g.deconv_out(h), wo = g.deconv_out(wd);
  Tensor y({n, ho, wo, co});
  const double* xp = x.data();
  const double* wp = w.data();
  double* yp = y.data();
  for (std::size_t p = 0; p < n * ho * wo; ++p) std::copy(b.data(), b.data() + co, yp + p * co);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t iy = 0; iy < h; ++iy) {
      for (std::size_t ix = 0; ix < wd; ++ix) {
        const double* in = xp + ((s * h + iy) * wd + ix) * ci;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const auto oy = static_cast<std::ptrdiff_t>(iy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (!in_range(oy, ho)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const auto ox = static_cast<std::ptrdiff_t>(ix * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (!in_range(ox, wo)) continue;
            double* out = yp + ((s * ho + oy) * wo + ox) * co;
            const double* wk = wp + (ky * k + kx) * ci * co;
            for (std::size_t c = 0; c < ci; ++c) {
              const double xv = in[c];
              const double* wr = wk + c * co;
              for (std::size_t o = 0; o < co; ++o) out[o] += xv * wr[o];
            }
          }
        }
      }
    }
  }
  return y;
}

void conv_transpose2d_backward(const Tensor& x, const Tensor& w, const Tensor& grad_y, ConvGeometry g,
                               Tensor* grad_x, Tensor* grad_w, Tensor* grad_b) {
  const std::size_t n = x.dim(0), h = x.dim(1), wd = x.dim(2), ci = x.dim(3), co = w.dim(3), k = g.kernel;
  const std::size_t ho = grad_y.dim(1), wo = grad_y.dim(2);
  if (grad_x) *grad_x = Tensor(x.shape());
  const double* xp = x.data();
  const double* wp = w.data();
  const double* gyp = grad_y.data();
  double* gxp = grad_x ? grad_x->data() : nullptr;
  double* gwp = grad_w ? grad_w->data() : nullptr;
  if (grad_b) {
    for (std::size_t p = 0; p < n * ho * wo; ++p) {
      for (std::size_t o = 0; o < co; ++o) (*grad_b)[o] += gyp[p * co + o];
    }
  }
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t iy = 0; iy < h; ++iy) {
      for (std::size_t ix = 0; ix < wd; ++ix) {
        const std::size_t in_off = ((s * h + iy) * wd + ix) * ci;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const auto oy = static_cast<std::ptrdiff_t>(iy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (!in_range(oy, ho)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const auto ox = static_cast<std::ptrdiff_t>(ix * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (!in_range(ox, wo)) continue;
            const double* gy = gyp + ((s * ho + oy) * wo + ox) * co;
            const std::size_t w_off = (ky * k + kx) * ci * co;
            for (std::size_t c = 0; c < ci; ++c) {
              const double* wr = wp + w_off + c * co;
              if (gxp) {
                double acc = 0.0;
                for (std::size_t o = 0; o < co; ++o) acc += gy[o] * wr[o];
                gxp[in_off + c] += acc;
              }
              if (gwp) {
                const double xv = xp[in_off + c];
                double* gw = gwp + w_off + c * co;
                for (std::size_t o = 0; o < co; ++o) gw[o] += xv * gy[o];
              }
            }
          }
        }
      }
    }
  }
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0) || b.size() != w.dim(1)) {
    throw InputError("dense: input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(w.shape()));
  }
  const std::size_t n = x.dim(0), in = w.dim(0), out = w.dim(1);
  Tensor y({n, out});
  for (std::size_t s = 0; s < n; ++s) {
    double* yr = y.data() + s * out;
    std::copy(b.data(), b.data() + out, yr);
    const double* xr = x.data() + s * in;
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = xr[i];
      const double* wr = w.data() + i * out;
      for (std::size_t o = 0; o < out; ++o) yr[o] += xv * wr[o];
    }
  }
  return y;
}

void dense_backward(const Tensor& x, const Tensor& w, const Tensor& grad_y, Tensor* grad_x, Tensor* grad_w,
                    Tensor* grad_b) {
  const std::size_t n = x.dim(0), in = w.dim(0), out = w.dim(1);
  if (grad_x) *grad_x = Tensor(x.shape());
  for (std::size_t s = 0; s < n; ++s) {
    const double* gy = grad_y.data() + s * out;
    const double* xr = x.data() + s * in;
    if (grad_b) {
      for (std::size_t o = 0; o < out; ++o) (*grad_b)[o] += gy[o];
    }
    for (std::size_t i = 0; i < in; ++i) {
      const double* wr = w.data() + i * out;
      if (grad_x) {
        double acc = 0.0;
        for (std::size_t o = 0; o < out; ++o) acc += gy[o] * wr[o];
        (*grad_x)[s * in + i] = acc;
      }
      if (grad_w) {
        double* gw = grad_w->data() + i * out;
        const double xv = xr[i];
        for (std::size_t o = 0; o < out; ++o) gw[o] += xv * gy[o];
      }
    }
  }
}

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor y = x;
  for (auto& v : y.values()) v = v > 0.0 ? v : slope * v;
  return y;
}

Tensor leaky_relu_backward(const Tensor& x, const Tensor& grad_y, double slope) {
  Tensor g = grad_y;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(x[i] > 0.0)) g[i] *= slope;
  }
  return g;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.values()) v = 1.0 / (1.0 + std::exp(-v));
  return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_y) {
  Tensor g = grad_y;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= y[i] * (1.0 - y[i]);
  return g;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) throw InputError("softmax: expected [batch, classes], got " + shape_str(logits.shape()));
  Tensor p = logits;
  for (std::size_t s = 0; s < p.dim(0); ++s) {
    auto r = p.row(s);
    const double m = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (auto& v : r) {
      v = std::exp(v - m);
      z += v;
    }
    for (auto& v : r) v /= z;
  }
  return p;
}

Tensor softmax_backward(const Tensor& probs, const Tensor& grad_probs) {
  Tensor g(probs.shape());
  for (std::size_t s = 0; s < probs.dim(0); ++s) {
    auto p = probs.row(s);
    auto gp = grad_probs.row(s);
    double dot = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) dot += p[i] * gp[i];
    auto out = g.row(s);
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] * (gp[i] - dot);
  }
  return g;
}

Tensor concat_features(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    throw InputError("concat_features: incompatible " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), wa = a.dim(1), wb = b.dim(1);
  Tensor out({n, wa + wb});
  for (std::size_t s = 0; s < n; ++s) {
    std::copy(a.data() + s * wa, a.data() + (s + 1) * wa, out.data() + s * (wa + wb));
    std::copy(b.data() + s * wb, b.data() + (s + 1) * wb, out.data() + s * (wa + wb) + wa);
  }
  return out;
}

void split_features(const Tensor& ab, std::size_t a_width, Tensor& a, Tensor& b) {
  const std::size_t n = ab.dim(0), w = ab.dim(1), wb = w - a_width;
  a = Tensor({n, a_width});
  b = Tensor({n, wb});
  for (std::size_t s = 0; s < n; ++s) {
    std::copy(ab.data() + s * w, ab.data() + s * w + a_width, a.data() + s * a_width);
    std::copy(ab.data() + s * w + a_width, ab.data() + (s + 1) * w, b.data() + s * wb);
  }
}

}  // namespace disent::kernels
