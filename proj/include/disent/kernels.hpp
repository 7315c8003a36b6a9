#pragma once

#include "disent/tensor.hpp"

// Forward/backward kernels for the layers used by the model. All functions are
// pure; backward functions accumulate into the parameter gradients they are
// handed (which may be null when that gradient is not wanted).

namespace disent::kernels {

struct ConvGeometry {
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;

  std::size_t conv_out(std::size_t in) const { return (in + 2 * pad - kernel) / stride + 1; }
  std::size_t deconv_out(std::size_t in) const { return (in - 1) * stride + kernel - 2 * pad; }
};

/// x [N,H,W,Ci], w [K,K,Ci,Co], b [Co] -> [N,Ho,Wo,Co]
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, ConvGeometry g);
void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& grad_y, ConvGeometry g, Tensor* grad_x,
                     Tensor* grad_w, Tensor* grad_b);

/// Adjoint of conv2d in its data argument, plus bias. w [K,K,Ci,Co].
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, ConvGeometry g);
void conv_transpose2d_backward(const Tensor& x, const Tensor& w, const Tensor& grad_y, ConvGeometry g,
                               Tensor* grad_x, Tensor* grad_w, Tensor* grad_b);

/// x [N,In], w [In,Out], b [Out] -> [N,Out]
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);
void dense_backward(const Tensor& x, const Tensor& w, const Tensor& grad_y, Tensor* grad_x, Tensor* grad_w,
                    Tensor* grad_b);

Tensor leaky_relu(const Tensor& x, double slope);
Tensor leaky_relu_backward(const Tensor& x, const Tensor& grad_y, double slope);

Tensor sigmoid(const Tensor& x);
/// Takes the sigmoid output, not its input.
Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_y);

/// Row-wise softmax over the last axis of a [N,K] tensor, max-subtracted.
Tensor softmax(const Tensor& logits);
/// Vector-Jacobian product of softmax given its output probabilities.
Tensor softmax_backward(const Tensor& probs, const Tensor& grad_probs);

/// Concatenates two [N,A] and [N,B] tensors into [N,A+B].
Tensor concat_features(const Tensor& a, const Tensor& b);
/// Inverse of concat_features for gradients.
void split_features(const Tensor& ab, std::size_t a_width, Tensor& a, Tensor& b);

}  // namespace disent::kernels
