#include "disent/model.hpp"

#include <cmath>
#include <random>

#include "disent/error.hpp"

namespace disent {

namespace {

constexpr std::array<std::string_view, 7> kGroupNames = {"en_base", "b_exp",     "b_non_exp", "de",
                                                         "c_exp",   "c_adv_exp", "c_adv_id"};

double truncated_normal(std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> normal(0.0, 1.0);
  double v = 0.0;
  do {
    v = normal(rng);
  } while (std::abs(v) > 2.0);
  return v * stddev;
}

}  // namespace

std::string_view group_name(Group g) { return kGroupNames[static_cast<std::size_t>(g)]; }

std::optional<Group> group_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kGroupNames.size(); ++i) {
    if (kGroupNames[i] == name) return static_cast<Group>(i);
  }
  return std::nullopt;
}

void ModelConfig::validate() const {
  if (image_size == 0) throw ConfigError("model.image_size must be positive");
  if (channels != 1 && channels != 3) throw ConfigError("model.channels must be 1 or 3");
  if (code_dim == 0) throw ConfigError("model.code_dim must be positive");
  if (n_exp_classes < 2) throw ConfigError("model.n_exp_classes must be at least 2");
  for (auto w : encoder_widths) {
    if (w == 0) throw ConfigError("model.encoder_widths entries must be positive");
  }
  if (branch_width == 0) throw ConfigError("model.branch_width must be positive");
  if (branch_depth == 0) throw ConfigError("model.branch_depth must be positive");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw ConfigError("model.leaky_slope must lie in (0, 1)");
  if (enable_decoder) {
    if (decoder_depth == 0) throw ConfigError("model.decoder_depth must be positive when the decoder is enabled");
    if (decoder_width == 0) throw ConfigError("model.decoder_width must be positive");
  }
  if (enable_identity_adversary) {
    if (!n_id_classes) throw ConfigError("identity adversary requires model.n_id_classes");
    if (*n_id_classes < 2) throw ConfigError("model.n_id_classes must be at least 2");
  }
}

ParamGroup& ModelParams::group(Group g) {
  auto it = groups_.find(g);
  if (it == groups_.end()) throw InputError("parameter group " + std::string(group_name(g)) + " is absent");
  return it->second;
}

const ParamGroup& ModelParams::group(Group g) const {
  auto it = groups_.find(g);
  if (it == groups_.end()) throw InputError("parameter group " + std::string(group_name(g)) + " is absent");
  return it->second;
}

std::vector<Group> ModelParams::groups() const {
  std::vector<Group> out;
  for (const auto& [g, _] : groups_) out.push_back(g);
  return out;
}

std::size_t ModelParams::add(Group g, std::string name, Tensor value) {
  auto& grp = groups_[g];
  grp.names.push_back(std::move(name));
  grp.arrays.push_back(std::move(value));
  return grp.arrays.size() - 1;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams out;
  for (const auto& [g, grp] : groups_) {
    out.ensure(g);
    for (std::size_t i = 0; i < grp.arrays.size(); ++i) out.add(g, grp.names[i], Tensor(grp.arrays[i].shape()));
  }
  return out;
}

std::uint64_t ModelParams::group_hash(Group g) const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& t : group(g).arrays) h = hash_tensor(t, h);
  return h;
}

bool ModelParams::all_finite() const {
  for (const auto& [_, grp] : groups_) {
    for (const auto& t : grp.arrays) {
      if (!t.all_finite()) return false;
    }
  }
  return true;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, grp] : groups_) {
    for (const auto& t : grp.arrays) n += t.size();
  }
  return n;
}

Tensor Stack::forward(const ModelParams& params, const Tensor& x, std::vector<Tensor>* trace) const {
  const ParamGroup* grp = params.has(group_) ? &params.group(group_) : nullptr;
  auto weight = [&](std::size_t i) -> const Tensor& { return grp->arrays.at(i); };
  if (trace) {
    trace->clear();
    trace->reserve(layers_.size() + 1);
  }
  Tensor cur = x;
  for (const auto& layer : layers_) {
    Tensor next;
    switch (layer.kind) {
      case Kind::conv:
        next = kernels::conv2d(cur, weight(layer.weight), weight(layer.weight + 1), layer.geometry);
        break;
      case Kind::deconv:
        next = kernels::conv_transpose2d(cur, weight(layer.weight), weight(layer.weight + 1), layer.geometry);
        break;
      case Kind::dense:
        next = kernels::dense(cur, weight(layer.weight), weight(layer.weight + 1));
        break;
      case Kind::leaky_relu:
        next = kernels::leaky_relu(cur, slope_);
        break;
      case Kind::sigmoid:
        next = kernels::sigmoid(cur);
        break;
      case Kind::reshape: {
        Shape s{cur.dim(0)};
        s.insert(s.end(), layer.sample_shape.begin(), layer.sample_shape.end());
        next = cur.reshaped(std::move(s));
        break;
      }
    }
    if (trace) trace->push_back(std::move(cur));
    cur = std::move(next);
  }
  if (trace) trace->push_back(cur);
  return cur;
}

Tensor Stack::backward(const ModelParams& params, const std::vector<Tensor>& trace, Tensor grad_out,
                       ModelParams* grads, bool want_input_grad) const {
  const ParamGroup& grp = params.group(group_);
  ParamGroup* ggrp = grads ? &grads->group(group_) : nullptr;
  Tensor g = std::move(grad_out);
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& layer = layers_[li];
    const Tensor& in = trace[li];
    const bool need_dx = want_input_grad || li > 0;
    Tensor gx;
    Tensor* gw = ggrp ? &ggrp->arrays[layer.weight] : nullptr;
    Tensor* gb = ggrp ? &ggrp->arrays[layer.weight + 1] : nullptr;
    switch (layer.kind) {
      case Kind::conv:
        kernels::conv2d_backward(in, grp.arrays[layer.weight], g, layer.geometry, need_dx ? &gx : nullptr, gw, gb);
        break;
      case Kind::deconv:
        kernels::conv_transpose2d_backward(in, grp.arrays[layer.weight], g, layer.geometry, need_dx ? &gx : nullptr,
                                           gw, gb);
        break;
      case Kind::dense:
        kernels::dense_backward(in, grp.arrays[layer.weight], g, need_dx ? &gx : nullptr, gw, gb);
        break;
      case Kind::leaky_relu:
        gx = kernels::leaky_relu_backward(in, g, slope_);
        break;
      case Kind::sigmoid:
        gx = kernels::sigmoid_backward(trace[li + 1], g);
        break;
      case Kind::reshape:
        gx = std::move(g).reshaped(in.shape());
        break;
    }
    g = std::move(gx);
  }
  return want_input_grad ? g : Tensor{};
}

void Model::add_layer(Stack& stack, Stack::Kind kind, kernels::ConvGeometry g, std::size_t in, std::size_t out,
                      const std::string& name) {
  auto& specs = layout_[stack.group()];
  const std::size_t index = specs.size();
  Shape wshape;
  std::size_t fan_in = 0;
  if (kind == Stack::Kind::dense) {
    wshape = {in, out};
    fan_in = in;
  } else {
    wshape = {g.kernel, g.kernel, in, out};
    fan_in = in * g.kernel * g.kernel;
    // A strided transposed conv sums roughly k*k/s^2 taps per output pixel.
    if (kind == Stack::Kind::deconv) fan_in = std::max<std::size_t>(1, fan_in / (g.stride * g.stride));
  }
  specs.push_back({name + ".w", wshape, fan_in});
  specs.push_back({name + ".b", Shape{out}, 0});
  stack.push({kind, g, index, {}});
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const double slope = config_.leaky_slope;
  const kernels::ConvGeometry down{3, 2, 1};

  // Shared encoder: strided conv + leaky-ReLU per width.
  Stack en(Group::en_base, slope);
  layout_[Group::en_base];
  std::size_t ch = config_.channels;
  std::size_t side = config_.image_size;
  for (std::size_t i = 0; i < config_.encoder_widths.size(); ++i) {
    add_layer(en, Stack::Kind::conv, down, ch, config_.encoder_widths[i], "conv" + std::to_string(i));
    en.push({Stack::Kind::leaky_relu});
    ch = config_.encoder_widths[i];
    side = down.conv_out(side);
  }
  stacks_[Group::en_base] = std::move(en);

  // Branches: branch_depth strided convs, flatten, linear projection to the code.
  for (Group g : {Group::b_exp, Group::b_non_exp}) {
    Stack b(g, slope);
    std::size_t bch = ch;
    std::size_t bside = side;
    for (std::size_t i = 0; i < config_.branch_depth; ++i) {
      add_layer(b, Stack::Kind::conv, down, bch, config_.branch_width, "conv" + std::to_string(i));
      b.push({Stack::Kind::leaky_relu});
      bch = config_.branch_width;
      bside = down.conv_out(bside);
    }
    b.push({Stack::Kind::reshape, {}, 0, Shape{bside * bside * bch}});
    add_layer(b, Stack::Kind::dense, {}, bside * bside * bch, config_.code_dim, "proj");
    stacks_[g] = std::move(b);
  }

  auto make_head = [&](Group g, std::size_t classes) {
    Stack h(g, slope);
    add_layer(h, Stack::Kind::dense, {}, config_.code_dim, classes, "linear");
    stacks_[g] = std::move(h);
  };
  make_head(Group::c_exp, config_.n_exp_classes);
  make_head(Group::c_adv_exp, config_.n_exp_classes);
  if (config_.enable_identity_adversary) make_head(Group::c_adv_id, *config_.n_id_classes);

  if (config_.enable_decoder) {
    // Upsampling layers double the side; the rest refine at the starting grid.
    std::size_t ups = 0;
    while (ups < config_.decoder_depth && (config_.image_size >> ups) % 2 == 0 &&
           (config_.image_size >> (ups + 1)) >= 2) {
      ++ups;
    }
    decoder_grid_ = config_.image_size >> ups;
    const std::size_t width = config_.decoder_width;
    Stack de(Group::de, slope);
    add_layer(de, Stack::Kind::dense, {}, 2 * config_.code_dim, decoder_grid_ * decoder_grid_ * width, "adapter");
    de.push({Stack::Kind::leaky_relu});
    de.push({Stack::Kind::reshape, {}, 0, Shape{decoder_grid_, decoder_grid_, width}});
    const std::size_t flat = config_.decoder_depth - ups;
    for (std::size_t i = 0; i < config_.decoder_depth; ++i) {
      const bool last = i + 1 == config_.decoder_depth;
      const kernels::ConvGeometry geom = i < flat ? kernels::ConvGeometry{3, 1, 1} : kernels::ConvGeometry{4, 2, 1};
      add_layer(de, Stack::Kind::deconv, geom, width, last ? config_.channels : width, "deconv" + std::to_string(i));
      de.push({last ? Stack::Kind::sigmoid : Stack::Kind::leaky_relu});
    }
    stacks_[Group::de] = std::move(de);
  }
}

const Stack& Model::stack(Group g) const {
  auto it = stacks_.find(g);
  if (it == stacks_.end()) {
    if (g == Group::de) throw ConfigError("decoder is disabled in this model configuration");
    if (g == Group::c_adv_id) throw ConfigError("identity adversary is disabled in this model configuration");
    throw ConfigError("model has no " + std::string(group_name(g)) + " component");
  }
  return it->second;
}

ModelParams Model::init_params(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  ModelParams params;
  for (Group g : kAllGroups) {
    auto it = layout_.find(g);
    if (it == layout_.end()) continue;
    params.ensure(g);
    for (const auto& spec : it->second) {
      Tensor t(spec.shape);
      if (spec.fan_in > 0) {
        const double stddev = std::sqrt(2.0 / static_cast<double>(spec.fan_in));
        for (auto& v : t.values()) v = truncated_normal(rng, stddev);
      }
      params.add(g, spec.name, std::move(t));
    }
  }
  return params;
}

void Model::check_images(const Tensor& x) const {
  const Shape want{config_.image_size, config_.image_size, config_.channels};
  if (x.rank() != 4 || x.dim(0) == 0 || Shape(x.shape().begin() + 1, x.shape().end()) != want) {
    throw InputError("expected image batch [batch," + std::to_string(config_.image_size) + "," +
                     std::to_string(config_.image_size) + "," + std::to_string(config_.channels) + "], got " +
                     shape_str(x.shape()));
  }
  if (!x.all_finite()) throw InputError("image batch contains non-finite values");
}

void Model::check_params(const ModelParams& params) const {
  for (const auto& [g, specs] : layout_) {
    if (!params.has(g)) throw InputError("parameter group " + std::string(group_name(g)) + " is missing");
    const auto& grp = params.group(g);
    if (grp.arrays.size() != specs.size()) {
      throw InputError("parameter group " + std::string(group_name(g)) + " has the wrong number of arrays");
    }
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (grp.arrays[i].shape() != specs[i].shape) {
        throw InputError("parameter " + std::string(group_name(g)) + "/" + specs[i].name + " has shape " +
                         shape_str(grp.arrays[i].shape()) + ", expected " + shape_str(specs[i].shape));
      }
    }
  }
}

void Model::check_code(const Tensor& code, const char* what) const {
  if (code.rank() != 2 || code.dim(1) != config_.code_dim) {
    throw InputError(std::string(what) + ": expected [batch," + std::to_string(config_.code_dim) + "], got " +
                     shape_str(code.shape()));
  }
}

RepresentationPair Model::encode(const ModelParams& params, const Tensor& x) const {
  check_images(x);
  const Tensor h = stack(Group::en_base).forward(params, x);
  return {stack(Group::b_exp).forward(params, h), stack(Group::b_non_exp).forward(params, h)};
}

Tensor Model::head_probs(const ModelParams& params, Group head, const Tensor& code) const {
  check_code(code, group_name(head).data());
  return kernels::softmax(stack(head).forward(params, code));
}

Tensor Model::classify_expression(const ModelParams& params, const Tensor& code_exp) const {
  return head_probs(params, Group::c_exp, code_exp);
}

Tensor Model::adversary_predict(const ModelParams& params, const Tensor& code_non_exp) const {
  return head_probs(params, Group::c_adv_exp, code_non_exp);
}

Tensor Model::identity_adversary_predict(const ModelParams& params, const Tensor& code_exp) const {
  return head_probs(params, Group::c_adv_id, code_exp);
}

Tensor Model::decode(const ModelParams& params, const RepresentationPair& pair) const {
  const Stack& de = stack(Group::de);
  check_code(pair.code_exp, "decode code_exp");
  check_code(pair.code_non_exp, "decode code_non_exp");
  if (pair.code_exp.dim(0) != pair.code_non_exp.dim(0)) throw InputError("decode: code batch sizes differ");
  return de.forward(params, kernels::concat_features(pair.code_exp, pair.code_non_exp));
}

}  // namespace disent
