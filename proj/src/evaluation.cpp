#include "disent/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "disent/error.hpp"
#include "disent/kernels.hpp"
#include "disent/losses.hpp"

namespace disent {

std::size_t argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

RepresentationPair encode_dataset(const Model& model, const ModelParams& params, const Dataset& dataset,
                                  std::size_t chunk) {
  const std::size_t n = dataset.size(), d = model.config().code_dim;
  RepresentationPair out{Tensor({n, d}), Tensor({n, d})};
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    const auto pair = model.encode(params, dataset.images.slice_rows(begin, end));
    std::copy(pair.code_exp.data(), pair.code_exp.data() + pair.code_exp.size(), out.code_exp.data() + begin * d);
    std::copy(pair.code_non_exp.data(), pair.code_non_exp.data() + pair.code_non_exp.size(),
              out.code_non_exp.data() + begin * d);
  }
  return out;
}

double head_accuracy(const Model& model, const ModelParams& params, const Dataset& dataset, Head head) {
  if (dataset.size() == 0) throw InputError("head_accuracy: empty dataset");
  const auto codes = encode_dataset(model, params, dataset);
  Tensor probs;
  const std::vector<int>* labels = &dataset.exp_labels;
  switch (head) {
    case Head::c_exp:
      probs = model.classify_expression(params, codes.code_exp);
      break;
    case Head::c_adv_exp:
      probs = model.adversary_predict(params, codes.code_non_exp);
      break;
    case Head::c_adv_id:
      probs = model.identity_adversary_predict(params, codes.code_exp);
      labels = &dataset.id_labels;
      break;
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (static_cast<int>(argmax(probs.row(i))) == (*labels)[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw InputError("cosine_similarity: vectors must have equal, nonzero length");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 && nb == 0.0) throw InputError("cosine_similarity: both vectors are zero");
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

SimilaritySummary class_similarity(const Tensor& codes, std::span<const int> labels) {
  if (codes.rank() != 2 || codes.dim(0) != labels.size()) throw InputError("class_similarity: codes/labels mismatch");
  SimilaritySummary s;
  double same = 0.0, cross = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      const double c = cosine_similarity(codes.row(i), codes.row(j));
      if (labels[i] == labels[j]) {
        same += c;
        ++s.same_pairs;
      } else {
        cross += c;
        ++s.cross_pairs;
      }
    }
  }
  if (s.same_pairs) s.same_class_mean = same / static_cast<double>(s.same_pairs);
  if (s.cross_pairs) s.cross_class_mean = cross / static_cast<double>(s.cross_pairs);
  return s;
}

std::vector<std::vector<std::size_t>> probe_folds(std::span<const int> labels, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("linear probe needs at least 2 folds");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> out(folds);
  std::size_t next = 0;
  for (auto& [_, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (auto i : members) out[next++ % folds].push_back(i);
  }
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

ProbeResult linear_probe(const Tensor& codes, std::span<const int> labels, const ProbeOptions& options) {
  if (codes.rank() != 2 || codes.dim(0) != labels.size()) throw InputError("linear_probe: codes/labels mismatch");
  std::map<int, std::size_t> counts;
  for (int l : labels) {
    if (l < 0) throw InputError("linear_probe: negative label");
    ++counts[l];
  }
  if (counts.size() < 2) throw InputError("linear_probe: labels contain a single class");
  const auto n_classes = static_cast<std::size_t>(counts.rbegin()->first) + 1;
  const std::size_t n = labels.size(), d = codes.dim(1);
  if (n < options.folds * counts.size()) {
    throw InputError("linear_probe: need at least folds * classes samples, got " + std::to_string(n));
  }

  ProbeResult result;
  std::size_t most = 0;
  for (const auto& [_, c] : counts) most = std::max(most, c);
  result.chance = static_cast<double>(most) / static_cast<double>(n);
  result.n_eval = n;

  const auto folds = probe_folds(labels, options.folds, options.seed);
  std::size_t correct_total = 0;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<char> held(n, 0);
    for (auto i : folds[f]) held[i] = 1;
    std::vector<std::size_t> train_idx;
    for (std::size_t i = 0; i < n; ++i) {
      if (!held[i]) train_idx.push_back(i);
    }

    // Standardize with training-fold statistics only.
    std::vector<double> mean(d, 0.0), inv_std(d, 0.0);
    for (auto i : train_idx) {
      for (std::size_t k = 0; k < d; ++k) mean[k] += codes[i * d + k];
    }
    for (auto& m : mean) m /= static_cast<double>(train_idx.size());
    for (auto i : train_idx) {
      for (std::size_t k = 0; k < d; ++k) {
        const double c = codes[i * d + k] - mean[k];
        inv_std[k] += c * c;
      }
    }
    for (auto& s : inv_std) {
      s = std::sqrt(s / static_cast<double>(train_idx.size()));
      s = s > 1e-12 ? 1.0 / s : 0.0;
    }
    auto standardized = [&](std::span<const std::size_t> idx) {
      Tensor x({idx.size(), d});
      for (std::size_t r = 0; r < idx.size(); ++r) {
        for (std::size_t k = 0; k < d; ++k) x[r * d + k] = (codes[idx[r] * d + k] - mean[k]) * inv_std[k];
      }
      return x;
    };
    const Tensor x_train = standardized(train_idx);
    std::vector<int> y_train;
    for (auto i : train_idx) y_train.push_back(labels[i]);
    const Tensor y = one_hot(y_train, n_classes);

    // Full-batch adaptive-moment descent on mean cross-entropy.
    Tensor w({d, n_classes}), b({n_classes});
    Tensor mw(w.shape()), vw(w.shape()), mb(b.shape()), vb(b.shape());
    for (std::size_t it = 1; it <= options.iterations; ++it) {
      const Tensor p = kernels::softmax(kernels::dense(x_train, w, b));
      const Tensor gz = cross_entropy_logit_grad(p, y);
      Tensor gw(w.shape()), gb(b.shape());
      kernels::dense_backward(x_train, w, gz, nullptr, &gw, &gb);
      const double c1 = 1.0 - std::pow(0.9, static_cast<double>(it));
      const double c2 = 1.0 - std::pow(0.999, static_cast<double>(it));
      auto step = [&](Tensor& p_, Tensor& m, Tensor& v, const Tensor& g) {
        for (std::size_t i = 0; i < p_.size(); ++i) {
          m[i] = 0.9 * m[i] + 0.1 * g[i];
          v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
          p_[i] -= options.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + 1e-8);
        }
      };
      step(w, mw, vw, gw);
      step(b, mb, vb, gb);
    }

    const Tensor x_eval = standardized(folds[f]);
    const Tensor logits = kernels::dense(x_eval, w, b);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < folds[f].size(); ++r) {
      if (static_cast<int>(argmax(logits.row(r))) == labels[folds[f][r]]) ++correct;
    }
    correct_total += correct;
    result.fold_accuracy.push_back(folds[f].empty() ? 0.0
                                                    : static_cast<double>(correct) / static_cast<double>(folds[f].size()));
  }
  result.accuracy = static_cast<double>(correct_total) / static_cast<double>(n);
  result.gap = result.accuracy - result.chance;
  return result;
}

SwapQuad swap_synthesis(const Model& model, const ModelParams& params, const Tensor& x1, const Tensor& x2) {
  if (!model.has_stack(Group::de)) throw ConfigError("swap synthesis requires the decoder");
  require_same_shape(x1, x2, "swap_synthesis");
  if (x1.rank() != 3) throw InputError("swap_synthesis: expected single [S,S,C] images");
  Shape batch_shape{2};
  batch_shape.insert(batch_shape.end(), x1.shape().begin(), x1.shape().end());
  Tensor batch(batch_shape);
  std::copy(x1.data(), x1.data() + x1.size(), batch.data());
  std::copy(x2.data(), x2.data() + x2.size(), batch.data() + x1.size());
  const auto codes = model.encode(params, batch);

  // Rows 0,1: reconstructions. Rows 2,3: code_exp of the other image with this image's code_non_exp.
  const std::size_t d = model.config().code_dim;
  Tensor exp4({4, d}), non4({4, d});
  const std::size_t exp_src[4] = {0, 1, 1, 0};
  const std::size_t non_src[4] = {0, 1, 0, 1};
  for (std::size_t r = 0; r < 4; ++r) {
    std::copy_n(codes.code_exp.data() + exp_src[r] * d, d, exp4.data() + r * d);
    std::copy_n(codes.code_non_exp.data() + non_src[r] * d, d, non4.data() + r * d);
  }
  const Tensor out = model.decode(params, {exp4, non4});
  auto image = [&](std::size_t r) { return out.slice_rows(r, r + 1).reshaped(x1.shape()); };
  return {x1, x2, image(0), image(1), image(2), image(3)};
}

std::vector<AblationRow> ablation_reconstruction(ModelConfig model_config, const TrainConfig& train_config,
                                                 const Dataset& train_set, const Dataset& eval,
                                                 const std::vector<double>& beta1_values) {
  if (beta1_values.empty()) throw ConfigError("ablation needs at least one beta1 value");
  for (double b : beta1_values) {
    if (!std::isfinite(b) || b < 0.0) throw ConfigError("beta1 values must be finite and non-negative");
  }
  model_config.enable_decoder = true;
  std::vector<AblationRow> rows;
  for (double b1 : beta1_values) {
    TrainConfig tc = train_config;
    tc.weights.beta1 = b1;
    const auto result = train(model_config, tc, train_set, eval);
    const Model model(model_config);
    rows.push_back({b1, head_accuracy(model, result.state.params, eval, Head::c_exp),
                    head_accuracy(model, result.state.params, eval, Head::c_adv_exp)});
  }
  return rows;
}

}  // namespace disent
