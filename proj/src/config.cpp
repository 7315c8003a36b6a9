#include "disent/config.hpp"

#include <fstream>
#include <initializer_list>

#include "disent/error.hpp"

namespace disent {

using nlohmann::json;

namespace {

// Unknown keys are almost always typos in hand-written configs.
void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const char* section) {
  if (!j.is_object()) throw ConfigError(std::string(section) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + section);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

}  // namespace

void to_json(json& j, const ModelConfig& c) {
  j = json{{"image_size", c.image_size},
           {"channels", c.channels},
           {"code_dim", c.code_dim},
           {"n_exp_classes", c.n_exp_classes},
           {"n_id_classes", c.n_id_classes ? json(*c.n_id_classes) : json(nullptr)},
           {"encoder_widths", c.encoder_widths},
           {"branch_width", c.branch_width},
           {"branch_depth", c.branch_depth},
           {"decoder_width", c.decoder_width},
           {"decoder_depth", c.decoder_depth},
           {"leaky_slope", c.leaky_slope},
           {"enable_decoder", c.enable_decoder},
           {"enable_identity_adversary", c.enable_identity_adversary}};
}

void from_json(const json& j, ModelConfig& c) {
  reject_unknown(j,
                 {"image_size", "channels", "code_dim", "n_exp_classes", "n_id_classes", "encoder_widths",
                  "branch_width", "branch_depth", "decoder_width", "decoder_depth", "leaky_slope", "enable_decoder",
                  "enable_identity_adversary"},
                 "model");
  read(j, "image_size", c.image_size);
  read(j, "channels", c.channels);
  read(j, "code_dim", c.code_dim);
  read(j, "n_exp_classes", c.n_exp_classes);
  if (auto it = j.find("n_id_classes"); it != j.end()) {
    c.n_id_classes = it->is_null() ? std::nullopt : std::optional<std::size_t>(it->get<std::size_t>());
  }
  read(j, "encoder_widths", c.encoder_widths);
  read(j, "branch_width", c.branch_width);
  read(j, "branch_depth", c.branch_depth);
  read(j, "decoder_width", c.decoder_width);
  read(j, "decoder_depth", c.decoder_depth);
  read(j, "leaky_slope", c.leaky_slope);
  read(j, "enable_decoder", c.enable_decoder);
  read(j, "enable_identity_adversary", c.enable_identity_adversary);
}

void to_json(json& j, const LossWeights& w) { j = json{{"beta1", w.beta1}, {"beta2", w.beta2}, {"beta3", w.beta3}}; }

void from_json(const json& j, LossWeights& w) {
  reject_unknown(j, {"beta1", "beta2", "beta3"}, "train.weights");
  read(j, "beta1", w.beta1);
  read(j, "beta2", w.beta2);
  read(j, "beta3", w.beta3);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"weights", c.weights},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"learning_rate_main", c.learning_rate_main},
           {"learning_rate_adv", c.learning_rate_adv},
           {"adv_steps_per_main", c.adv_steps_per_main},
           {"seed", c.seed},
           {"log_every", c.log_every},
           {"checkpoint_every", c.checkpoint_every},
           {"split", c.split}};
}

void from_json(const json& j, TrainConfig& c) {
  reject_unknown(j,
                 {"weights", "epochs", "batch_size", "learning_rate_main", "learning_rate_adv", "adv_steps_per_main",
                  "seed", "log_every", "checkpoint_every", "split"},
                 "train");
  read(j, "weights", c.weights);
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "learning_rate_main", c.learning_rate_main);
  read(j, "learning_rate_adv", c.learning_rate_adv);
  read(j, "adv_steps_per_main", c.adv_steps_per_main);
  read(j, "seed", c.seed);
  read(j, "log_every", c.log_every);
  read(j, "checkpoint_every", c.checkpoint_every);
  read(j, "split", c.split);
}

void to_json(json& j, const SyntheticSpec& s) {
  j = json{{"n_exp_classes", s.n_exp_classes},         {"n_id_classes", s.n_id_classes}, {"image_size", s.image_size},
           {"channels", s.channels},                   {"samples_per_combo", s.samples_per_combo},
           {"jitter", s.jitter},                       {"seed", s.seed}};
}

void from_json(const json& j, SyntheticSpec& s) {
  reject_unknown(j, {"n_exp_classes", "n_id_classes", "image_size", "channels", "samples_per_combo", "jitter", "seed"},
                 "data.synthetic");
  read(j, "n_exp_classes", s.n_exp_classes);
  read(j, "n_id_classes", s.n_id_classes);
  read(j, "image_size", s.image_size);
  read(j, "channels", s.channels);
  read(j, "samples_per_combo", s.samples_per_combo);
  read(j, "jitter", s.jitter);
  read(j, "seed", s.seed);
}

void to_json(json& j, const RunConfig& c) {
  json data{{"synthetic", c.synthetic}};
  data["path"] = c.dataset ? json(c.dataset->generic_string()) : json(nullptr);
  j = json{{"model", c.model}, {"train", c.train}, {"data", data}, {"output_dir", c.output_dir.generic_string()}};
}

void from_json(const json& j, RunConfig& c) {
  reject_unknown(j, {"model", "train", "data", "output_dir"}, "run configuration");
  read(j, "model", c.model);
  read(j, "train", c.train);
  if (auto it = j.find("data"); it != j.end()) {
    reject_unknown(*it, {"synthetic", "path"}, "data");
    read(*it, "synthetic", c.synthetic);
    if (auto p = it->find("path"); p != it->end() && !p->is_null()) c.dataset = p->get<std::string>();
  }
  if (auto it = j.find("output_dir"); it != j.end()) c.output_dir = it->get<std::string>();
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return json::parse(in).get<RunConfig>();
  } catch (const json::exception& e) {
    throw ConfigError("invalid config " + path.string() + ": " + e.what());
  }
}

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << json(config).dump(2) << '\n';
}

}  // namespace disent
