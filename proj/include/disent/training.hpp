#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "disent/data.hpp"
#include "disent/losses.hpp"
#include "disent/model.hpp"

namespace disent {

struct TrainConfig {
  LossWeights weights;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double learning_rate_main = 1e-4;
  double learning_rate_adv = 1e-4;
  std::size_t adv_steps_per_main = 1;
  std::uint64_t seed = 0;
  std::size_t log_every = 50;
  std::size_t checkpoint_every = 1000;
  std::array<double, 3> split = {0.8, 0.1, 0.1};

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Adaptive-moment state of one parameter group.
struct AdamState {
  std::uint64_t t = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

struct TrainState {
  ModelParams params;
  std::map<Group, AdamState> optimizer;
  std::uint64_t step = 0;
  /// Serialized engine that shuffles the epoch containing `step`.
  std::string rng_state;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

struct StepOutcome {
  LossReport report;
  bool applied = true;
  std::string diagnostics;
};

struct AdversaryOutcome {
  double loss = 0.0;  // adversary cross-entropy on the expression labels
  double identity_loss = 0.0;
  bool applied = true;
  std::string diagnostics;
};

/// Groups mutated by one main step under the given weights.
std::vector<Group> main_step_groups(const ModelConfig& config, const LossWeights& weights);
/// Groups mutated by one adversary step.
std::vector<Group> adversary_step_groups(const ModelConfig& config);

/// One gradient step applies adaptive-moment updates to `groups` only.
void adam_update(TrainState& state, const ModelParams& grads, const std::vector<Group>& groups, double learning_rate);

/// The alternating, parameter-partitioned optimization procedure.
class Trainer {
 public:
  Trainer(ModelConfig model_config, TrainConfig train_config);

  const Model& model() const { return model_; }
  const TrainConfig& config() const { return config_; }

  TrainState init_state() const;

  /// Gradients of beta1*L_r + beta2*L_exp + beta3*L_fool with the adversary heads
  /// detached: their parameters get no gradient, their inputs do.
  ModelParams main_gradients(const ModelParams& params, const Batch& batch, const LossWeights& weights,
                             LossReport* report) const;
  /// Gradients of the adversary cross-entropies with the codes held constant.
  ModelParams adversary_gradients(const ModelParams& params, const Batch& batch, AdversaryOutcome* outcome) const;
  /// Same, with codes already computed from the current encoder parameters.
  ModelParams adversary_gradients(const ModelParams& params, const Batch& batch, const RepresentationPair& codes,
                                  AdversaryOutcome* outcome) const;

  StepOutcome main_step(TrainState& state, const Batch& batch, const LossWeights& weights) const;
  StepOutcome main_step(TrainState& state, const Batch& batch) const { return main_step(state, batch, config_.weights); }
  AdversaryOutcome adversary_step(TrainState& state, const Batch& batch) const;
  AdversaryOutcome adversary_step(TrainState& state, const Batch& batch, const RepresentationPair& codes) const;

 private:
  Model model_;
  TrainConfig config_;
};

struct MetricsRow {
  std::uint64_t step = 0;
  LossReport report;
  double acc_c_exp = 0.0;
  double acc_c_adv = 0.0;
  double acc_c_adv_id = 0.0;
};

/// CSV header for the metrics file; identity-adversary runs append three columns.
std::string metrics_header(bool identity_adversary);
std::string metrics_line(const MetricsRow& row, bool identity_adversary);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows, bool identity_adversary);

struct TrainOptions {
  /// When set, metrics.csv is appended and checkpoints are written here.
  std::optional<std::filesystem::path> run_dir;
  /// Continue from this state instead of a fresh init.
  std::optional<TrainState> resume;
  /// Stop once the step counter reaches this value (before the epoch budget if smaller).
  std::optional<std::uint64_t> stop_at_step;
};

struct TrainResult {
  TrainState state;
  std::vector<MetricsRow> metrics;
};

/// Runs adv_steps_per_main adversary steps then one main step per round over
/// shuffled epochs of `train`, logging validation head accuracies on `val`.
TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config, const Dataset& train,
                  const Dataset& val, const TrainOptions& options = {});

struct Checkpoint {
  ModelConfig model_config;
  TrainConfig train_config;
  TrainState state;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace disent
