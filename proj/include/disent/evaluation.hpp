#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "disent/data.hpp"
#include "disent/model.hpp"
#include "disent/training.hpp"

namespace disent {

enum class Head { c_exp, c_adv_exp, c_adv_id };

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> row);

/// Encodes a dataset in fixed-size chunks.
RepresentationPair encode_dataset(const Model& model, const ModelParams& params, const Dataset& dataset,
                                  std::size_t chunk = 256);

/// Argmax accuracy of a head on its designated code: c_exp and c_adv_id read
/// code_exp, c_adv_exp reads code_non_exp. c_adv_id is scored against identity labels.
double head_accuracy(const Model& model, const ModelParams& params, const Dataset& dataset, Head head);

/// dot(a,b) / (|a| |b|). A single zero vector yields 0; two zero vectors are an InputError.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct SimilaritySummary {
  double same_class_mean = 0.0;
  double cross_class_mean = 0.0;
  std::size_t same_pairs = 0;
  std::size_t cross_pairs = 0;

  double gap() const { return same_class_mean - cross_class_mean; }
};

/// Mean pairwise cosine similarity of code rows, split by whether labels agree.
SimilaritySummary class_similarity(const Tensor& codes, std::span<const int> labels);

struct ProbeResult {
  double accuracy = 0.0;  // mean held-out accuracy over folds
  double chance = 0.0;    // frequency of the most common class
  double gap = 0.0;       // accuracy - chance
  std::size_t n_eval = 0;
  std::vector<double> fold_accuracy;
};

struct ProbeOptions {
  std::size_t folds = 5;
  std::size_t iterations = 300;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
};

/// Stratified fold assignment: folds are disjoint and cover every index.
std::vector<std::vector<std::size_t>> probe_folds(std::span<const int> labels, std::size_t folds, std::uint64_t seed);

/// Cross-validated affine+softmax probe on frozen codes. Each fold trains a
/// fresh probe on the other folds (standardized with training-fold statistics)
/// and is scored only on its own held-out indices.
ProbeResult linear_probe(const Tensor& codes, std::span<const int> labels, const ProbeOptions& options = {});

struct SwapQuad {
  Tensor x1, x2;
  Tensor x1_rec, x2_rec;
  Tensor x1_swap, x2_swap;  // expression of the other image, non-expression code of this one
};

/// x1, x2 are single [S,S,C] images.
SwapQuad swap_synthesis(const Model& model, const ModelParams& params, const Tensor& x1, const Tensor& x2);

struct AblationRow {
  double beta1 = 0.0;
  double acc_c_exp = 0.0;
  double acc_c_adv_exp = 0.0;
};

/// Trains one model per beta1 value with otherwise identical settings (the
/// decoder is enabled for every run) and reports held-out head accuracies on `eval`.
std::vector<AblationRow> ablation_reconstruction(ModelConfig model_config, const TrainConfig& train_config,
                                                 const Dataset& train, const Dataset& eval,
                                                 const std::vector<double>& beta1_values);

}  // namespace disent
