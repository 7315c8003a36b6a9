#pragma once

#include <span>

#include "disent/tensor.hpp"

namespace disent {

/// Clamp applied inside every logarithm.
inline constexpr double kLogEpsilon = 1e-7;

/// Weights of the reconstruction, expression and adversarial terms.
struct LossWeights {
  double beta1 = 0.0;
  double beta2 = 1.0;
  double beta3 = 1.0;

  void validate() const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossReport {
  double l_r = 0.0;
  double l_exp = 0.0;
  double l_adv_exp = 0.0;
  double l_adv_en = 0.0;
  double l_final = 0.0;
  // Identity-adversary terms; zero unless the identity adversary is enabled.
  double l_adv_id = 0.0;
  double l_adv_id_en = 0.0;

  bool all_finite() const;
};

/// One-hot encodes integer labels into [n, n_classes]; throws InputError when a label is out of range.
Tensor one_hot(std::span<const int> labels, std::size_t n_classes);

/// Mean over the batch of the per-sample squared L2 distance.
double reconstruction_loss(const Tensor& x, const Tensor& x_hat);
/// Gradient with respect to x_hat.
Tensor reconstruction_loss_grad(const Tensor& x, const Tensor& x_hat);

/// Mean cross-entropy -sum_i y_i log p_i against one-hot labels.
double expression_loss(const Tensor& probs, const Tensor& labels);
/// Gradient with respect to probs.
Tensor expression_loss_grad(const Tensor& probs, const Tensor& labels);

/// Same formula as expression_loss, applied to an adversary's output.
double adversary_classification_loss(const Tensor& probs, const Tensor& labels);
Tensor adversary_classification_loss_grad(const Tensor& probs, const Tensor& labels);

/// Mean over the batch of -(1/N) sum_i log p_i. Minimal (= ln N) at the uniform row.
double fooling_loss(const Tensor& probs);
Tensor fooling_loss_grad(const Tensor& probs);

/// beta1*l_r + beta2*l_exp + beta3*(l_adv_exp + l_adv_en), plus the identity
/// adversary terms under beta3 when present. Used for reporting only.
double total_loss(const LossReport& parts, const LossWeights& weights);

// Gradients of the softmax-composed losses with respect to the head logits.
// These are the exact (unclamped) derivatives, so saturated heads still
// receive signal.

/// d/dlogits of mean cross-entropy: (p - y) / batch.
Tensor cross_entropy_logit_grad(const Tensor& probs, const Tensor& labels);
/// d/dlogits of the fooling loss: (p - 1/N) / batch.
Tensor fooling_logit_grad(const Tensor& probs);

}  // namespace disent
