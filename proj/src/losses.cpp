#include "disent/losses.hpp"

#include <cmath>

#include "disent/error.hpp"

namespace disent {

namespace {

double clamped_log(double p) { return std::log(std::max(p, kLogEpsilon)); }

void check_probs(const Tensor& probs, const char* what) {
  if (probs.rank() != 2 || probs.dim(0) == 0 || probs.dim(1) == 0) {
    throw InputError(std::string(what) + ": expected non-empty [batch, classes], got " + shape_str(probs.shape()));
  }
}

void check_labels(const Tensor& probs, const Tensor& labels, const char* what) {
  check_probs(probs, what);
  require_same_shape(probs, labels, what);
  for (std::size_t s = 0; s < labels.dim(0); ++s) {
    int ones = 0;
    for (double v : labels.row(s)) {
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        ones = -1;
        break;
      }
    }
    if (ones != 1) throw InputError(std::string(what) + ": label row " + std::to_string(s) + " is not one-hot");
  }
}

}  // namespace

void LossWeights::validate() const {
  for (double b : {beta1, beta2, beta3}) {
    if (!std::isfinite(b) || b < 0.0) throw ConfigError("loss weights must be finite and non-negative");
  }
}

bool LossReport::all_finite() const {
  for (double v : {l_r, l_exp, l_adv_exp, l_adv_en, l_final, l_adv_id, l_adv_id_en}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor one_hot(std::span<const int> labels, std::size_t n_classes) {
  Tensor out({labels.size(), n_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n_classes) {
      throw InputError("label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(n_classes) + ")");
    }
    out[i * n_classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return out;
}

double reconstruction_loss(const Tensor& x, const Tensor& x_hat) {
  require_same_shape(x, x_hat, "reconstruction_loss");
  if (x.rank() == 0 || x.dim(0) == 0) throw InputError("reconstruction_loss: empty batch");
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - x_hat[i];
    sum += d * d;
  }
  return sum / static_cast<double>(x.dim(0));
}

Tensor reconstruction_loss_grad(const Tensor& x, const Tensor& x_hat) {
  require_same_shape(x, x_hat, "reconstruction_loss_grad");
  Tensor g(x.shape());
  const double scale = 2.0 / static_cast<double>(x.dim(0));
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = scale * (x_hat[i] - x[i]);
  return g;
}

double expression_loss(const Tensor& probs, const Tensor& labels) {
  check_labels(probs, labels, "expression_loss");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (labels[i] != 0.0) sum -= labels[i] * clamped_log(probs[i]);
  }
  return sum / static_cast<double>(probs.dim(0));
}

Tensor expression_loss_grad(const Tensor& probs, const Tensor& labels) {
  check_labels(probs, labels, "expression_loss_grad");
  Tensor g(probs.shape());
  const double inv_n = 1.0 / static_cast<double>(probs.dim(0));
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (labels[i] != 0.0 && probs[i] > kLogEpsilon) g[i] = -labels[i] * inv_n / probs[i];
  }
  return g;
}

double adversary_classification_loss(const Tensor& probs, const Tensor& labels) {
  return expression_loss(probs, labels);
}

Tensor adversary_classification_loss_grad(const Tensor& probs, const Tensor& labels) {
  return expression_loss_grad(probs, labels);
}

double fooling_loss(const Tensor& probs) {
  check_probs(probs, "fooling_loss");
  double sum = 0.0;
  for (double p : probs.values()) sum -= clamped_log(p);
  return sum / static_cast<double>(probs.dim(1)) / static_cast<double>(probs.dim(0));
}

Tensor fooling_loss_grad(const Tensor& probs) {
  check_probs(probs, "fooling_loss_grad");
  Tensor g(probs.shape());
  const double scale = 1.0 / (static_cast<double>(probs.dim(1)) * static_cast<double>(probs.dim(0)));
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > kLogEpsilon) g[i] = -scale / probs[i];
  }
  return g;
}

double total_loss(const LossReport& parts, const LossWeights& weights) {
  return weights.beta1 * parts.l_r + weights.beta2 * parts.l_exp +
         weights.beta3 * (parts.l_adv_exp + parts.l_adv_en + parts.l_adv_id + parts.l_adv_id_en);
}

Tensor cross_entropy_logit_grad(const Tensor& probs, const Tensor& labels) {
  check_labels(probs, labels, "cross_entropy_logit_grad");
  Tensor g(probs.shape());
  const double inv_n = 1.0 / static_cast<double>(probs.dim(0));
  for (std::size_t i = 0; i < probs.size(); ++i) g[i] = (probs[i] - labels[i]) * inv_n;
  return g;
}

Tensor fooling_logit_grad(const Tensor& probs) {
  check_probs(probs, "fooling_logit_grad");
  Tensor g(probs.shape());
  const double inv_n = 1.0 / static_cast<double>(probs.dim(0));
  const double uniform = 1.0 / static_cast<double>(probs.dim(1));
  for (std::size_t i = 0; i < probs.size(); ++i) g[i] = (probs[i] - uniform) * inv_n;
  return g;
}

}  // namespace disent
