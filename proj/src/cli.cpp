#include "disent/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "disent/config.hpp"
#include "disent/data.hpp"
#include "disent/error.hpp"
#include "disent/evaluation.hpp"
#include "disent/raster.hpp"
#include "disent/training.hpp"

namespace disent {
namespace {

namespace fs = std::filesystem;

// Flag values that override the config file when given.
struct Overrides {
  std::string config;
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> beta1, beta2, beta3;
  std::optional<std::size_t> epochs;
  std::optional<std::string> dataset;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr_main, lr_adv;
  std::optional<std::size_t> adv_steps;
  std::optional<std::size_t> code_dim;
  bool decoder = false;
  bool dual = false;
};

void add_run_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON run configuration");
  cmd->add_option("--output-dir", o.output_dir, "Directory for all outputs");
  cmd->add_option("--seed", o.seed, "Training seed (also selects the data split)");
  cmd->add_option("--beta1", o.beta1, "Reconstruction loss weight");
  cmd->add_option("--beta2", o.beta2, "Expression loss weight");
  cmd->add_option("--beta3", o.beta3, "Fooling loss weight");
  cmd->add_option("--epochs", o.epochs, "Number of training epochs");
  cmd->add_option("--dataset", o.dataset, "Dataset cache file or image-folder root");
  cmd->add_option("--batch-size", o.batch_size, "Minibatch size");
  cmd->add_option("--lr", o.lr_main, "Learning rate of the main step");
  cmd->add_option("--lr-adv", o.lr_adv, "Learning rate of the adversary step");
  cmd->add_option("--adv-steps", o.adv_steps, "Adversary steps per main step");
  cmd->add_option("--code-dim", o.code_dim, "Length of each code vector");
  cmd->add_flag("--decoder", o.decoder, "Build the decoder even when beta1 is 0");
  cmd->add_flag("--dual", o.dual, "Add the identity adversary on the expression code");
}

RunConfig resolve_config(const Overrides& o) {
  RunConfig rc = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.output_dir) rc.output_dir = *o.output_dir;
  if (o.seed) rc.train.seed = *o.seed;
  if (o.beta1) rc.train.weights.beta1 = *o.beta1;
  if (o.beta2) rc.train.weights.beta2 = *o.beta2;
  if (o.beta3) rc.train.weights.beta3 = *o.beta3;
  if (o.epochs) rc.train.epochs = *o.epochs;
  if (o.dataset) rc.dataset = *o.dataset;
  if (o.batch_size) rc.train.batch_size = *o.batch_size;
  if (o.lr_main) rc.train.learning_rate_main = *o.lr_main;
  if (o.lr_adv) rc.train.learning_rate_adv = *o.lr_adv;
  if (o.adv_steps) rc.train.adv_steps_per_main = *o.adv_steps;
  if (o.code_dim) rc.model.code_dim = *o.code_dim;
  if (o.decoder) rc.model.enable_decoder = true;
  if (o.dual) rc.model.enable_identity_adversary = true;
  // Reconstruction needs a decoder; asking for beta1 > 0 implies one.
  if (rc.train.weights.beta1 > 0.0) rc.model.enable_decoder = true;
  rc.train.validate();
  return rc;
}

Dataset obtain_dataset(const RunConfig& rc, std::ostream& out) {
  if (!rc.dataset) {
    rc.synthetic.validate();
    return generate_synthetic_dataset(rc.synthetic);
  }
  const fs::path& p = *rc.dataset;
  if (!fs::exists(p)) throw ConfigError("dataset not found: " + p.string());
  if (fs::is_directory(p)) {
    FolderLoad load = load_image_folder(p, rc.model.image_size, rc.model.channels);
    for (const auto& w : load.warnings) out << "warning: " << w << '\n';
    return std::move(load.dataset);
  }
  return load_dataset(p);
}

// The model's data-facing fields always follow the dataset actually used.
void sync_model(ModelConfig& m, const Dataset& d) {
  m.image_size = d.image_size();
  m.channels = d.channels();
  m.n_exp_classes = d.n_exp_classes;
  m.n_id_classes = d.n_id_classes >= 2 ? std::optional<std::size_t>(d.n_id_classes) : std::nullopt;
  m.validate();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
}

void write_curves(const fs::path& path, const std::vector<MetricsRow>& rows, bool with_reconstruction) {
  std::vector<raster::Series> series{{"l_exp", {}}, {"l_adv_exp", {}}, {"l_adv_en", {}}, {"l_final", {}}};
  if (with_reconstruction) series.push_back({"l_r", {}});
  for (const auto& r : rows) {
    series[0].values.push_back(r.report.l_exp);
    series[1].values.push_back(r.report.l_adv_exp);
    series[2].values.push_back(r.report.l_adv_en);
    series[3].values.push_back(r.report.l_final);
    if (with_reconstruction) series[4].values.push_back(r.report.l_r);
  }
  raster::write_png(path, raster::line_plot(series));
}

int cmd_gen_data(const Overrides& o, std::optional<std::size_t> n_exp, std::optional<std::size_t> n_id,
                 std::optional<std::size_t> per_combo, std::optional<std::size_t> image_size,
                 std::optional<std::size_t> channels, std::optional<double> jitter, std::ostream& out) {
  RunConfig rc = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.output_dir) rc.output_dir = *o.output_dir;
  SyntheticSpec& s = rc.synthetic;
  if (o.seed) s.seed = *o.seed;
  if (n_exp) s.n_exp_classes = *n_exp;
  if (n_id) s.n_id_classes = *n_id;
  if (per_combo) s.samples_per_combo = *per_combo;
  if (image_size) s.image_size = *image_size;
  if (channels) s.channels = *channels;
  if (jitter) s.jitter = *jitter;
  s.validate();

  const Dataset ds = generate_synthetic_dataset(s);
  fs::create_directories(rc.output_dir);
  const fs::path path = rc.output_dir / "dataset.bin";
  save_dataset(ds, path);
  rc.dataset = path;
  save_run_config(rc, rc.output_dir / "config.json");
  out << "wrote " << path.string() << ": " << ds.size() << " samples (" << s.n_exp_classes << " expression x "
      << s.n_id_classes << " identity x " << s.samples_per_combo << " per combination)\n";
  return 0;
}

int cmd_train(const Overrides& o, const std::optional<std::string>& resume_path, std::ostream& out) {
  RunConfig rc = resolve_config(o);
  TrainOptions options;
  if (resume_path) {
    Checkpoint ck = load_checkpoint(*resume_path);
    rc.model = ck.model_config;
    const std::size_t epochs = rc.train.epochs;
    rc.train = ck.train_config;
    if (o.epochs) rc.train.epochs = epochs;
    options.resume = std::move(ck.state);
  }
  const Dataset ds = obtain_dataset(rc, out);
  sync_model(rc.model, ds);
  const Splits sp = split(ds, rc.train.split, rc.train.seed);

  fs::create_directories(rc.output_dir);
  save_run_config(rc, rc.output_dir / "config.json");
  options.run_dir = rc.output_dir;
  out << "training on " << sp.train.size() << " samples, validating on " << sp.val.size() << '\n';
  const TrainResult result = train(rc.model, rc.train, sp.train, sp.val, options);
  write_curves(rc.output_dir / "curves.png", result.metrics, rc.train.weights.beta1 > 0.0);
  if (!result.metrics.empty()) {
    const MetricsRow& last = result.metrics.back();
    out << "step " << last.step << ": l_final=" << fmt(last.report.l_final) << " acc_c_exp=" << fmt(last.acc_c_exp)
        << " acc_c_adv=" << fmt(last.acc_c_adv) << '\n';
  }
  out << "wrote " << (rc.output_dir / "final.ckpt").string() << '\n';
  return 0;
}

int cmd_eval(const Overrides& o, const std::string& checkpoint, std::ostream& out) {
  RunConfig rc = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.output_dir) rc.output_dir = *o.output_dir;
  if (o.dataset) rc.dataset = *o.dataset;
  const Checkpoint ck = load_checkpoint(checkpoint);
  rc.model = ck.model_config;
  rc.train = ck.train_config;
  if (o.seed) rc.train.seed = *o.seed;

  const Dataset ds = obtain_dataset(rc, out);
  if (ds.image_size() != ck.model_config.image_size || ds.channels() != ck.model_config.channels ||
      ds.n_exp_classes != ck.model_config.n_exp_classes) {
    throw ConfigError("dataset does not match the checkpoint's model configuration");
  }
  const Dataset test = split(ds, rc.train.split, rc.train.seed).test;
  const Model model(ck.model_config);
  const ModelParams& params = ck.state.params;
  const bool dual = ck.model_config.enable_identity_adversary;

  const double acc_exp = head_accuracy(model, params, test, Head::c_exp);
  const double acc_adv = head_accuracy(model, params, test, Head::c_adv_exp);
  const double acc_id = dual ? head_accuracy(model, params, test, Head::c_adv_id) : 0.0;
  const RepresentationPair codes = encode_dataset(model, params, test);
  ProbeOptions po;
  po.seed = rc.train.seed;
  const ProbeResult probe_non = linear_probe(codes.code_non_exp, test.exp_labels, po);
  const ProbeResult probe_exp = linear_probe(codes.code_exp, test.exp_labels, po);
  const SimilaritySummary sim = class_similarity(codes.code_exp, test.exp_labels);

  std::ostringstream csv;
  csv << "split,n,acc_c_exp,acc_c_adv_exp,acc_c_adv_id,probe_non_exp_acc,probe_non_exp_chance,probe_non_exp_gap,"
         "probe_exp_acc,cos_same,cos_cross,cos_gap\n";
  csv << "test," << test.size() << ',' << fmt(acc_exp) << ',' << fmt(acc_adv) << ',' << (dual ? fmt(acc_id) : "")
      << ',' << fmt(probe_non.accuracy) << ',' << fmt(probe_non.chance) << ',' << fmt(probe_non.gap) << ','
      << fmt(probe_exp.accuracy) << ',' << fmt(sim.same_class_mean) << ',' << fmt(sim.cross_class_mean) << ','
      << fmt(sim.gap()) << '\n';
  fs::create_directories(rc.output_dir);
  write_text(rc.output_dir / "report.csv", csv.str());

  out << "test samples: " << test.size() << '\n'
      << "C_exp accuracy: " << fmt(acc_exp) << '\n'
      << "C_adv_exp accuracy: " << fmt(acc_adv) << '\n';
  if (dual) out << "C_adv_id accuracy: " << fmt(acc_id) << '\n';
  out << "probe on code_non_exp: " << fmt(probe_non.accuracy) << " (chance " << fmt(probe_non.chance) << ")\n"
      << "probe on code_exp: " << fmt(probe_exp.accuracy) << '\n'
      << "cosine same/cross: " << fmt(sim.same_class_mean) << " / " << fmt(sim.cross_class_mean) << '\n'
      << "wrote " << (rc.output_dir / "report.csv").string() << '\n';
  return 0;
}

int cmd_swap(const Overrides& o, const std::string& checkpoint, const std::string& image_a, const std::string& image_b,
             std::ostream& out) {
  RunConfig rc = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.output_dir) rc.output_dir = *o.output_dir;
  const Checkpoint ck = load_checkpoint(checkpoint);
  if (!ck.model_config.enable_decoder) throw ConfigError("checkpoint has no decoder; swap synthesis needs one");
  const Model model(ck.model_config);
  auto load = [&](const std::string& path) {
    if (!fs::exists(path)) throw InputError("image not found: " + path);
    return raster::resize(raster::read_image(path), ck.model_config.image_size, ck.model_config.channels);
  };
  const SwapQuad q = swap_synthesis(model, ck.state.params, load(image_a), load(image_b));
  fs::create_directories(rc.output_dir);
  const fs::path path = rc.output_dir / "swap.png";
  raster::write_png(path, raster::tile_grid({q.x1, q.x1_rec, q.x1_swap, q.x2, q.x2_rec, q.x2_swap}, 2, 3));
  out << "wrote " << path.string() << '\n';
  return 0;
}

int cmd_ablate(const Overrides& o, const std::vector<double>& beta1_list, std::ostream& out) {
  for (double b : beta1_list) {
    if (!std::isfinite(b) || b < 0.0) throw ConfigError("beta1 values must be finite and non-negative, got " + fmt(b));
  }
  RunConfig rc = resolve_config(o);
  rc.model.enable_decoder = true;
  const Dataset ds = obtain_dataset(rc, out);
  sync_model(rc.model, ds);
  const Splits sp = split(ds, rc.train.split, rc.train.seed);
  fs::create_directories(rc.output_dir);
  save_run_config(rc, rc.output_dir / "config.json");

  const auto rows = ablation_reconstruction(rc.model, rc.train, sp.train, sp.test, beta1_list);
  std::ostringstream csv;
  csv << "beta1,acc_c_exp,acc_c_adv_exp\n";
  std::vector<std::string> labels;
  raster::Series exp{"acc_c_exp", {}}, adv{"acc_c_adv_exp", {}};
  for (const auto& r : rows) {
    csv << fmt(r.beta1) << ',' << fmt(r.acc_c_exp) << ',' << fmt(r.acc_c_adv_exp) << '\n';
    out << "beta1=" << fmt(r.beta1) << " acc_c_exp=" << fmt(r.acc_c_exp) << " acc_c_adv_exp=" << fmt(r.acc_c_adv_exp)
        << '\n';
    labels.push_back(fmt(r.beta1));
    exp.values.push_back(r.acc_c_exp);
    adv.values.push_back(r.acc_c_adv_exp);
  }
  write_text(rc.output_dir / "ablation.csv", csv.str());
  raster::write_png(rc.output_dir / "ablation.png", raster::bar_plot(labels, {exp, adv}, 1.0));
  out << "wrote " << (rc.output_dir / "ablation.csv").string() << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarial expression disentanglement: data generation, training and evaluation"};
  app.require_subcommand(1);

  Overrides o;
  std::optional<std::size_t> n_exp, n_id, per_combo, image_size, channels;
  std::optional<double> jitter;
  std::optional<std::string> resume;
  std::string checkpoint, image_a, image_b;
  std::vector<double> beta1_list{1.0, 0.001, 0.0};

  auto* gen = app.add_subcommand("gen-data", "Render the synthetic dataset to a cache file");
  gen->add_option("--config", o.config, "JSON run configuration");
  gen->add_option("--output-dir", o.output_dir, "Directory for dataset.bin");
  gen->add_option("--seed", o.seed, "Generator seed");
  gen->add_option("--n-exp", n_exp, "Expression classes");
  gen->add_option("--n-id", n_id, "Identity classes");
  gen->add_option("--per-combo", per_combo, "Samples per (expression, identity) pair");
  gen->add_option("--image-size", image_size, "Image side in pixels");
  gen->add_option("--channels", channels, "1 (gray) or 3 (RGB)");
  gen->add_option("--jitter", jitter, "Position/brightness jitter amplitude");

  auto* tr = app.add_subcommand("train", "Train a model and write a run directory");
  add_run_flags(tr, o);
  tr->add_option("--resume", resume, "Continue from a checkpoint");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--config", o.config, "JSON run configuration (dataset source)");
  ev->add_option("--output-dir", o.output_dir, "Directory for report.csv");
  ev->add_option("--dataset", o.dataset, "Dataset cache file or image-folder root");
  ev->add_option("--seed", o.seed, "Split seed (defaults to the training seed)");

  auto* sw = app.add_subcommand("swap", "Swap expression codes between two images");
  sw->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  sw->add_option("--image-a", image_a, "First image")->required();
  sw->add_option("--image-b", image_b, "Second image")->required();
  sw->add_option("--config", o.config, "JSON run configuration");
  sw->add_option("--output-dir", o.output_dir, "Directory for swap.png");

  auto* ab = app.add_subcommand("ablate", "Train once per beta1 value and compare head accuracies");
  add_run_flags(ab, o);
  ab->add_option("--beta1-list", beta1_list, "Comma-separated beta1 values")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen_data(o, n_exp, n_id, per_combo, image_size, channels, jitter, out);
    if (*tr) return cmd_train(o, resume, out);
    if (*ev) return cmd_eval(o, checkpoint, out);
    if (*sw) return cmd_swap(o, checkpoint, image_a, image_b, out);
    if (*ab) return cmd_ablate(o, beta1_list, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return 1;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
    return 1;
  } catch (const LoadError& e) {
    err << "load error: " << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace disent
