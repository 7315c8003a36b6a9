#include "disent/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "disent/binary_io.hpp"
#include "disent/config.hpp"
#include "disent/error.hpp"
#include "disent/evaluation.hpp"
#include "disent/kernels.hpp"

namespace disent {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-8;
constexpr int kMaxNonFiniteRounds = 3;
constexpr char kCheckpointMagic[] = "DCKP";

std::string engine_state(const std::mt19937_64& engine) {
  std::ostringstream os;
  os << engine;
  return os.str();
}

std::mt19937_64 engine_from(const std::string& state) {
  std::mt19937_64 engine;
  std::istringstream is(state);
  is >> engine;
  if (!is) throw LoadError("invalid RNG state in training state");
  return engine;
}

void add_into(Tensor& acc, const Tensor& g) {
  if (acc.empty()) {
    acc = g;
    return;
  }
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

Tensor scaled(Tensor t, double s) {
  for (auto& v : t.values()) v *= s;
  return t;
}

bool grads_finite(const ModelParams& grads, const std::vector<Group>& groups) {
  for (Group g : groups) {
    for (const auto& t : grads.group(g).arrays) {
      if (!t.all_finite()) return false;
    }
  }
  return true;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  weights.validate();
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(learning_rate_main >= 0.0) || !(learning_rate_adv >= 0.0) || !std::isfinite(learning_rate_main) ||
      !std::isfinite(learning_rate_adv)) {
    throw ConfigError("learning rates must be finite and non-negative");
  }
  if (adv_steps_per_main == 0) throw ConfigError("train.adv_steps_per_main must be positive");
  if (log_every == 0) throw ConfigError("train.log_every must be positive");
  if (checkpoint_every == 0) throw ConfigError("train.checkpoint_every must be positive");
  double total = 0.0;
  for (double f : split) {
    if (!(f > 0.0)) throw ConfigError("train.split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("train.split fractions must sum to 1");
}

std::vector<Group> main_step_groups(const ModelConfig& config, const LossWeights& weights) {
  std::set<Group> groups;
  if (weights.beta1 > 0.0) groups.insert({Group::en_base, Group::b_exp, Group::b_non_exp, Group::de});
  if (weights.beta2 > 0.0) groups.insert({Group::en_base, Group::b_exp, Group::c_exp});
  if (weights.beta3 > 0.0) {
    groups.insert({Group::en_base, Group::b_non_exp});
    if (config.enable_identity_adversary) groups.insert(Group::b_exp);
  }
  return {groups.begin(), groups.end()};
}

std::vector<Group> adversary_step_groups(const ModelConfig& config) {
  if (config.enable_identity_adversary) return {Group::c_adv_exp, Group::c_adv_id};
  return {Group::c_adv_exp};
}

void adam_update(TrainState& state, const ModelParams& grads, const std::vector<Group>& groups, double learning_rate) {
  for (Group g : groups) {
    auto& params = state.params.group(g).arrays;
    const auto& gr = grads.group(g).arrays;
    auto& st = state.optimizer[g];
    if (st.m.size() != params.size()) {
      st.m.clear();
      st.v.clear();
      for (const auto& p : params) {
        st.m.emplace_back(p.shape());
        st.v.emplace_back(p.shape());
      }
    }
    ++st.t;
    const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(st.t));
    for (std::size_t a = 0; a < params.size(); ++a) {
      double* p = params[a].data();
      double* m = st.m[a].data();
      double* v = st.v[a].data();
      const double* gv = gr[a].data();
      for (std::size_t i = 0; i < params[a].size(); ++i) {
        m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * gv[i];
        v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * gv[i] * gv[i];
        p[i] -= learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + kAdamEpsilon);
      }
    }
  }
}

Trainer::Trainer(ModelConfig model_config, TrainConfig train_config)
    : model_(std::move(model_config)), config_(std::move(train_config)) {
  config_.validate();
  if (config_.weights.beta1 > 0.0 && !model_.config().enable_decoder) {
    throw ConfigError("beta1 > 0 requires the decoder (model.enable_decoder)");
  }
}

TrainState Trainer::init_state() const {
  TrainState state;
  state.params = model_.init_params(config_.seed);
  for (Group g : state.params.groups()) {
    auto& st = state.optimizer[g];
    for (const auto& p : state.params.group(g).arrays) {
      st.m.emplace_back(p.shape());
      st.v.emplace_back(p.shape());
    }
  }
  state.rng_state = engine_state(std::mt19937_64(config_.seed ^ 0x9e3779b97f4a7c15ULL));
  return state;
}

ModelParams Trainer::main_gradients(const ModelParams& params, const Batch& batch, const LossWeights& weights,
                                    LossReport* report) const {
  const ModelConfig& cfg = model_.config();
  model_.check_images(batch.images);
  const bool dual = cfg.enable_identity_adversary;
  const bool use_rec = weights.beta1 > 0.0;
  ModelParams grads = params.zeros_like();
  LossReport rep;

  std::vector<Tensor> tr_en, tr_exp, tr_non, tr_cexp, tr_cadv, tr_cid, tr_de;
  const Tensor h = model_.stack(Group::en_base).forward(params, batch.images, &tr_en);
  const Tensor code_exp = model_.stack(Group::b_exp).forward(params, h, &tr_exp);
  const Tensor code_non = model_.stack(Group::b_non_exp).forward(params, h, &tr_non);

  Tensor g_exp, g_non;

  const Tensor p_exp = kernels::softmax(model_.stack(Group::c_exp).forward(params, code_exp, &tr_cexp));
  rep.l_exp = expression_loss(p_exp, batch.exp_one_hot);
  if (weights.beta2 > 0.0) {
    Tensor gz = scaled(cross_entropy_logit_grad(p_exp, batch.exp_one_hot), weights.beta2);
    add_into(g_exp, model_.stack(Group::c_exp).backward(params, tr_cexp, std::move(gz), &grads));
  }

  // The adversary heads are detached: gradient reaches the codes, never the head weights.
  const Tensor p_adv = kernels::softmax(model_.stack(Group::c_adv_exp).forward(params, code_non, &tr_cadv));
  rep.l_adv_exp = adversary_classification_loss(p_adv, batch.exp_one_hot);
  rep.l_adv_en = fooling_loss(p_adv);
  if (weights.beta3 > 0.0) {
    Tensor gz = scaled(fooling_logit_grad(p_adv), weights.beta3);
    add_into(g_non, model_.stack(Group::c_adv_exp).backward(params, tr_cadv, std::move(gz), nullptr));
  }

  if (dual) {
    const Tensor p_id = kernels::softmax(model_.stack(Group::c_adv_id).forward(params, code_exp, &tr_cid));
    rep.l_adv_id = adversary_classification_loss(p_id, batch.id_one_hot);
    rep.l_adv_id_en = fooling_loss(p_id);
    if (weights.beta3 > 0.0) {
      Tensor gz = scaled(fooling_logit_grad(p_id), weights.beta3);
      add_into(g_exp, model_.stack(Group::c_adv_id).backward(params, tr_cid, std::move(gz), nullptr));
    }
  }

  if (cfg.enable_decoder) {
    const Stack& de = model_.stack(Group::de);
    const Tensor joint = kernels::concat_features(code_exp, code_non);
    const Tensor x_hat = de.forward(params, joint, use_rec ? &tr_de : nullptr);
    rep.l_r = reconstruction_loss(batch.images, x_hat);
    if (use_rec) {
      Tensor g = scaled(reconstruction_loss_grad(batch.images, x_hat), weights.beta1);
      const Tensor g_joint = de.backward(params, tr_de, std::move(g), &grads);
      Tensor ga, gb;
      kernels::split_features(g_joint, cfg.code_dim, ga, gb);
      add_into(g_exp, ga);
      add_into(g_non, gb);
    }
  }

  Tensor g_h;
  if (!g_exp.empty()) add_into(g_h, model_.stack(Group::b_exp).backward(params, tr_exp, std::move(g_exp), &grads));
  if (!g_non.empty()) {
    add_into(g_h, model_.stack(Group::b_non_exp).backward(params, tr_non, std::move(g_non), &grads));
  }
  if (!g_h.empty()) model_.stack(Group::en_base).backward(params, tr_en, std::move(g_h), &grads, false);

  rep.l_final = total_loss(rep, weights);
  if (report) *report = rep;
  return grads;
}

ModelParams Trainer::adversary_gradients(const ModelParams& params, const Batch& batch,
                                         AdversaryOutcome* outcome) const {
  // Codes are computed without a trace: the adversary sees them as constants.
  return adversary_gradients(params, batch, model_.encode(params, batch.images), outcome);
}

ModelParams Trainer::adversary_gradients(const ModelParams& params, const Batch& batch, const RepresentationPair& pair,
                                         AdversaryOutcome* outcome) const {
  ModelParams grads = params.zeros_like();
  AdversaryOutcome out;
  std::vector<Tensor> trace;
  const Stack& adv = model_.stack(Group::c_adv_exp);
  const Tensor p = kernels::softmax(adv.forward(params, pair.code_non_exp, &trace));
  out.loss = adversary_classification_loss(p, batch.exp_one_hot);
  adv.backward(params, trace, cross_entropy_logit_grad(p, batch.exp_one_hot), &grads, false);
  if (model_.config().enable_identity_adversary) {
    const Stack& adv_id = model_.stack(Group::c_adv_id);
    const Tensor pid = kernels::softmax(adv_id.forward(params, pair.code_exp, &trace));
    out.identity_loss = adversary_classification_loss(pid, batch.id_one_hot);
    adv_id.backward(params, trace, cross_entropy_logit_grad(pid, batch.id_one_hot), &grads, false);
  }
  if (outcome) *outcome = out;
  return grads;
}

StepOutcome Trainer::main_step(TrainState& state, const Batch& batch, const LossWeights& weights) const {
  weights.validate();
  if (weights.beta1 > 0.0 && !model_.config().enable_decoder) {
    throw ConfigError("beta1 > 0 requires the decoder (model.enable_decoder)");
  }
  StepOutcome out;
  const ModelParams grads = main_gradients(state.params, batch, weights, &out.report);
  const auto groups = main_step_groups(model_.config(), weights);
  if (!out.report.all_finite() || !grads_finite(grads, groups)) {
    out.applied = false;
    out.diagnostics = "non-finite main-step loss or gradient at step " + std::to_string(state.step) +
                      " (l_r=" + fmt(out.report.l_r) + ", l_exp=" + fmt(out.report.l_exp) +
                      ", l_adv_en=" + fmt(out.report.l_adv_en) + ")";
    return out;
  }
  adam_update(state, grads, groups, config_.learning_rate_main);
  return out;
}

AdversaryOutcome Trainer::adversary_step(TrainState& state, const Batch& batch) const {
  return adversary_step(state, batch, model_.encode(state.params, batch.images));
}

AdversaryOutcome Trainer::adversary_step(TrainState& state, const Batch& batch, const RepresentationPair& codes) const {
  AdversaryOutcome out;
  const ModelParams grads = adversary_gradients(state.params, batch, codes, &out);
  const auto groups = adversary_step_groups(model_.config());
  if (!std::isfinite(out.loss) || !std::isfinite(out.identity_loss) || !grads_finite(grads, groups)) {
    out.applied = false;
    out.diagnostics = "non-finite adversary loss or gradient at step " + std::to_string(state.step) +
                      " (l_adv_exp=" + fmt(out.loss) + ")";
    return out;
  }
  adam_update(state, grads, groups, config_.learning_rate_adv);
  return out;
}

std::string metrics_header(bool identity_adversary) {
  std::string h = "step,l_r,l_exp,l_adv_exp,l_adv_en,l_final,acc_c_exp,acc_c_adv";
  if (identity_adversary) h += ",l_adv_id,l_adv_id_en,acc_c_adv_id";
  return h;
}

std::string metrics_line(const MetricsRow& row, bool identity_adversary) {
  std::string line = std::to_string(row.step);
  for (double v : {row.report.l_r, row.report.l_exp, row.report.l_adv_exp, row.report.l_adv_en, row.report.l_final,
                   row.acc_c_exp, row.acc_c_adv}) {
    line += ',' + fmt(v);
  }
  if (identity_adversary) {
    for (double v : {row.report.l_adv_id, row.report.l_adv_id_en, row.acc_c_adv_id}) line += ',' + fmt(v);
  }
  return line;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows,
                       bool identity_adversary) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << metrics_header(identity_adversary) << '\n';
  for (const auto& r : rows) out << metrics_line(r, identity_adversary) << '\n';
}

TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config, const Dataset& train_set,
                  const Dataset& val_set, const TrainOptions& options) {
  const Trainer trainer(model_config, train_config);
  const Model& model = trainer.model();
  const bool dual = model_config.enable_identity_adversary;
  if (train_set.size() == 0) throw ConfigError("training dataset is empty");
  if (train_set.n_exp_classes != model_config.n_exp_classes) {
    throw ConfigError("dataset has " + std::to_string(train_set.n_exp_classes) + " expression classes, model expects " +
                      std::to_string(model_config.n_exp_classes));
  }
  if (dual && train_set.n_id_classes != *model_config.n_id_classes) {
    throw ConfigError("dataset identity classes do not match model.n_id_classes");
  }
  if (train_set.image_size() != model_config.image_size || train_set.channels() != model_config.channels) {
    throw ConfigError("dataset image geometry does not match the model configuration");
  }

  TrainResult result;
  result.state = options.resume ? *options.resume : trainer.init_state();
  TrainState& state = result.state;
  model.check_params(state.params);

  const std::size_t per_epoch = (train_set.size() + train_config.batch_size - 1) / train_config.batch_size;
  std::uint64_t total = static_cast<std::uint64_t>(train_config.epochs) * per_epoch;
  if (options.stop_at_step) total = std::min(total, *options.stop_at_step);

  std::optional<std::filesystem::path> metrics_path;
  if (options.run_dir) {
    std::filesystem::create_directories(*options.run_dir);
    metrics_path = *options.run_dir / "metrics.csv";
    if (!options.resume || !std::filesystem::exists(*metrics_path)) {
      std::ofstream(*metrics_path, std::ios::trunc) << metrics_header(dual) << '\n';
    }
  }
  auto save = [&](const std::filesystem::path& path) {
    save_checkpoint({model_config, train_config, state}, path);
  };

  std::vector<std::size_t> order;
  std::uint64_t order_epoch = std::numeric_limits<std::uint64_t>::max();
  std::string next_rng;
  int bad_rounds = 0;

  while (state.step < total) {
    const std::uint64_t epoch = state.step / per_epoch;
    const std::size_t pos = static_cast<std::size_t>(state.step % per_epoch);
    if (order_epoch != epoch) {
      std::mt19937_64 engine = engine_from(state.rng_state);
      order.resize(train_set.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), engine);
      next_rng = engine_state(engine);
      order_epoch = epoch;
    }
    const std::size_t begin = pos * train_config.batch_size;
    const std::size_t end = std::min(begin + train_config.batch_size, order.size());
    const Batch batch = make_batch(train_set, std::span<const std::size_t>(order).subspan(begin, end - begin));

    AdversaryOutcome adv;
    bool ok = true;
    std::string diagnostics;
    // Adversary steps leave the encoder untouched, so one encoding serves all of them.
    const RepresentationPair codes = trainer.model().encode(state.params, batch.images);
    for (std::size_t k = 0; k < train_config.adv_steps_per_main; ++k) {
      adv = trainer.adversary_step(state, batch, codes);
      if (!adv.applied) {
        ok = false;
        diagnostics = adv.diagnostics;
      }
    }
    StepOutcome main = trainer.main_step(state, batch);
    if (!main.applied) {
      ok = false;
      diagnostics = main.diagnostics;
    }
    bad_rounds = ok ? 0 : bad_rounds + 1;
    if (bad_rounds >= kMaxNonFiniteRounds) {
      throw NumericError("training aborted after " + std::to_string(bad_rounds) +
                         " consecutive non-finite rounds: " + diagnostics);
    }

    ++state.step;
    if (pos + 1 == per_epoch) state.rng_state = next_rng;

    if (state.step % train_config.log_every == 0 || state.step == total) {
      MetricsRow row;
      row.step = state.step;
      row.report = main.report;
      if (val_set.size() > 0) {
        row.acc_c_exp = head_accuracy(model, state.params, val_set, Head::c_exp);
        row.acc_c_adv = head_accuracy(model, state.params, val_set, Head::c_adv_exp);
        if (dual) row.acc_c_adv_id = head_accuracy(model, state.params, val_set, Head::c_adv_id);
      }
      result.metrics.push_back(row);
      if (metrics_path) std::ofstream(*metrics_path, std::ios::app) << metrics_line(row, dual) << '\n';
    }
    if (options.run_dir && state.step % train_config.checkpoint_every == 0) {
      save(*options.run_dir / ("checkpoint_" + std::to_string(state.step) + ".ckpt"));
    }
  }
  if (options.run_dir) save(*options.run_dir / "final.ckpt");
  return result;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  io::Writer w(kCheckpointMagic, kCheckpointVersion);
  w.str(nlohmann::json(ck.model_config).dump());
  w.str(nlohmann::json(ck.train_config).dump());
  const auto groups = ck.state.params.groups();
  w.u32(static_cast<std::uint32_t>(groups.size()));
  for (Group g : groups) {
    const auto& grp = ck.state.params.group(g);
    w.str(group_name(g));
    w.u32(static_cast<std::uint32_t>(grp.arrays.size()));
    for (std::size_t i = 0; i < grp.arrays.size(); ++i) {
      w.str(grp.names[i]);
      w.tensor(grp.arrays[i]);
    }
  }
  w.u32(static_cast<std::uint32_t>(ck.state.optimizer.size()));
  for (const auto& [g, st] : ck.state.optimizer) {
    w.str(group_name(g));
    w.u64(st.t);
    w.u32(static_cast<std::uint32_t>(st.m.size()));
    for (std::size_t i = 0; i < st.m.size(); ++i) {
      w.tensor(st.m[i]);
      w.tensor(st.v[i]);
    }
  }
  w.u64(ck.state.step);
  w.str(ck.state.rng_state);
  w.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  io::Reader r(path, kCheckpointMagic, kCheckpointVersion, "checkpoint");
  Checkpoint ck;
  auto group_of = [&](const std::string& name) {
    auto g = group_from_name(name);
    if (!g) throw LoadError("checkpoint (format version " + std::to_string(kCheckpointVersion) +
                            "): unknown parameter group " + name);
    return *g;
  };
  try {
    ck.model_config = nlohmann::json::parse(r.str()).get<ModelConfig>();
    ck.train_config = nlohmann::json::parse(r.str()).get<TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("checkpoint configuration is unreadable: ") + e.what());
  }
  const auto n_groups = r.u32();
  for (std::uint32_t gi = 0; gi < n_groups; ++gi) {
    const Group g = group_of(r.str());
    ck.state.params.ensure(g);
    const auto n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
      std::string name = r.str();
      ck.state.params.add(g, std::move(name), r.tensor());
    }
  }
  const auto n_opt = r.u32();
  for (std::uint32_t gi = 0; gi < n_opt; ++gi) {
    auto& st = ck.state.optimizer[group_of(r.str())];
    st.t = r.u64();
    const auto n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
      st.m.push_back(r.tensor());
      st.v.push_back(r.tensor());
    }
  }
  ck.state.step = r.u64();
  ck.state.rng_state = r.str();
  r.finish();
  try {
    Model(ck.model_config).check_params(ck.state.params);
  } catch (const Error& e) {
    throw LoadError(std::string("checkpoint parameters do not match its model configuration: ") + e.what());
  }
  return ck;
}

}  // namespace disent
