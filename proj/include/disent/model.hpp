#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "disent/kernels.hpp"
#include "disent/tensor.hpp"

namespace disent {

/// Learnable parameter groups. Each loss term updates a fixed subset of these.
enum class Group { en_base, b_exp, b_non_exp, de, c_exp, c_adv_exp, c_adv_id };

inline constexpr std::array<Group, 7> kAllGroups = {Group::en_base, Group::b_exp,     Group::b_non_exp, Group::de,
                                                    Group::c_exp,   Group::c_adv_exp, Group::c_adv_id};

std::string_view group_name(Group g);
std::optional<Group> group_from_name(std::string_view name);

struct ModelConfig {
  std::size_t image_size = 32;
  std::size_t channels = 1;
  std::size_t code_dim = 64;
  std::size_t n_exp_classes = 4;
  std::optional<std::size_t> n_id_classes;
  std::vector<std::size_t> encoder_widths = {16};
  std::size_t branch_width = 32;
  std::size_t branch_depth = 4;
  std::size_t decoder_width = 32;
  std::size_t decoder_depth = 6;
  double leaky_slope = 0.2;
  bool enable_decoder = false;
  bool enable_identity_adversary = false;

  /// Throws ConfigError on the first violated constraint.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ParamGroup {
  std::vector<std::string> names;
  std::vector<Tensor> arrays;

  friend bool operator==(const ParamGroup&, const ParamGroup&) = default;
};

/// All learnable arrays, partitioned by group. Membership is fixed at init.
class ModelParams {
 public:
  bool has(Group g) const { return groups_.count(g) != 0; }
  ParamGroup& group(Group g);
  const ParamGroup& group(Group g) const;
  std::vector<Group> groups() const;

  /// Appends an array to a group and returns its index within the group.
  std::size_t add(Group g, std::string name, Tensor value);
  /// Registers a (possibly empty) group.
  void ensure(Group g) { groups_[g]; }

  /// Same groups and shapes, all zeros.
  ModelParams zeros_like() const;
  std::uint64_t group_hash(Group g) const;
  bool all_finite() const;
  std::size_t parameter_count() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  std::map<Group, ParamGroup> groups_;
};

struct RepresentationPair {
  Tensor code_exp;      // [batch, code_dim]
  Tensor code_non_exp;  // [batch, code_dim]
};

/// A feed-forward chain of layers whose parameters live in one group.
class Stack {
 public:
  enum class Kind { conv, deconv, dense, leaky_relu, sigmoid, reshape };

  struct Layer {
    Kind kind;
    kernels::ConvGeometry geometry{};
    std::size_t weight = 0;  // bias is stored at weight + 1
    Shape sample_shape{};    // reshape target, excluding batch
  };

  Stack() = default;
  Stack(Group group, double slope) : group_(group), slope_(slope) {}

  Group group() const { return group_; }
  const std::vector<Layer>& layers() const { return layers_; }
  void push(Layer layer) { layers_.push_back(std::move(layer)); }

  /// When `trace` is given it receives the input of every layer followed by the output.
  Tensor forward(const ModelParams& params, const Tensor& x, std::vector<Tensor>* trace = nullptr) const;

  /// Back-propagates `grad_out` through the traced forward pass. Parameter
  /// gradients are accumulated into `grads` when it is non-null; the returned
  /// tensor is the gradient with respect to the stack input (empty when
  /// `want_input_grad` is false).
  Tensor backward(const ModelParams& params, const std::vector<Tensor>& trace, Tensor grad_out, ModelParams* grads,
                  bool want_input_grad = true) const;

 private:
  Group group_ = Group::en_base;
  double slope_ = 0.2;
  std::vector<Layer> layers_;
};

/// Network topology derived from a ModelConfig, plus the pure forward operations.
class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const Stack& stack(Group g) const;
  bool has_stack(Group g) const { return stacks_.count(g) != 0; }

  /// Deterministic in (config, seed).
  ModelParams init_params(std::uint64_t seed) const;

  /// Throws InputError unless x is [batch, S, S, C] with finite values.
  void check_images(const Tensor& x) const;
  /// Throws InputError unless params contain every group with matching shapes.
  void check_params(const ModelParams& params) const;

  RepresentationPair encode(const ModelParams& params, const Tensor& x) const;
  Tensor classify_expression(const ModelParams& params, const Tensor& code_exp) const;
  Tensor adversary_predict(const ModelParams& params, const Tensor& code_non_exp) const;
  /// Identity adversary applied to code_exp; requires the identity adversary.
  Tensor identity_adversary_predict(const ModelParams& params, const Tensor& code_exp) const;
  Tensor decode(const ModelParams& params, const RepresentationPair& pair) const;

  /// Softmax probabilities of a single-dense-layer head group.
  Tensor head_probs(const ModelParams& params, Group head, const Tensor& code) const;

  std::size_t decoder_grid() const { return decoder_grid_; }

 private:
  void check_code(const Tensor& code, const char* what) const;

  ModelConfig config_;
  std::map<Group, Stack> stacks_;
  struct ParamSpec {
    std::string name;
    Shape shape;
    std::size_t fan_in = 0;  // 0 marks a bias
  };

  void add_layer(Stack& stack, Stack::Kind kind, kernels::ConvGeometry g, std::size_t in, std::size_t out,
                 const std::string& name);

  // Shapes each group's arrays must have, in insertion order.
  std::map<Group, std::vector<ParamSpec>> layout_;
  std::size_t decoder_grid_ = 0;
};

}  // namespace disent
