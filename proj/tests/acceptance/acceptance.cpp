// Acceptance runner: one PASS/FAIL line per criterion.
//
// Usage: acceptance [--report-only] [criterion ...]
// With no criterion numbers all ten run. The exit code is 0 only when every
// selected criterion passes, unless --report-only is given, in which case it
// is 0 whenever the runner completes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "disent/evaluation.hpp"
#include "disent/losses.hpp"
#include "disent/training.hpp"
#include "oracles.hpp"

using namespace disent;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Shared adversarial-training setup for criteria 5, 6 and 8.
ModelConfig disentangle_model() {
  ModelConfig m;
  m.code_dim = 4;
  m.n_id_classes = 6;
  return m;
}

TrainConfig disentangle_train() {
  TrainConfig t;
  t.weights = {0.0, 1.0, 1.0};
  t.epochs = 40;
  t.learning_rate_main = 3e-4;
  t.learning_rate_adv = 3e-2;
  t.adv_steps_per_main = 10;
  t.log_every = 60;
  t.checkpoint_every = 100000;
  return t;
}

struct DisentangleRuns {
  Splits splits;
  Dataset held_out;  // val + test, never seen by the optimizer
  TrainResult adversarial;
  std::string metrics_a, metrics_b;
  TrainResult baseline;
};

// Criteria 5, 6 and 8 share these three runs; they are computed once.
const DisentangleRuns& disentangle_runs() {
  static std::optional<DisentangleRuns> cache;
  if (cache) return *cache;
  DisentangleRuns r;
  const Dataset data = generate_synthetic_dataset(SyntheticSpec{});
  const TrainConfig t = disentangle_train();
  r.splits = split(data, t.split, t.seed);
  const auto idx = split_indices(data, t.split, t.seed);
  std::vector<std::size_t> held = idx[1];
  held.insert(held.end(), idx[2].begin(), idx[2].end());
  r.held_out = data.subset(held);

  oracle::TempDir dir_a("accept_a"), dir_b("accept_b");
  TrainOptions oa, ob;
  oa.run_dir = dir_a.path();
  ob.run_dir = dir_b.path();
  r.adversarial = train(disentangle_model(), t, r.splits.train, r.splits.val, oa);
  train(disentangle_model(), t, r.splits.train, r.splits.val, ob);
  r.metrics_a = read_bytes(dir_a.path() / "metrics.csv");
  r.metrics_b = read_bytes(dir_b.path() / "metrics.csv");

  TrainConfig base = t;
  base.weights.beta3 = 0.0;
  r.baseline = train(disentangle_model(), base, r.splits.train, r.splits.val);
  cache = std::move(r);
  return *cache;
}

Tensor uniform_row(std::size_t n) {
  Tensor p({1, n});
  for (std::size_t i = 0; i < n; ++i) p[i] = 1.0 / static_cast<double>(n);
  return p;
}

Verdict criterion1() {
  const double fool = fooling_loss(uniform_row(8));
  Tensor probs({1, 3});
  probs[0] = 0.5;
  probs[1] = 0.25;
  probs[2] = 0.25;
  const double ce = expression_loss(probs, one_hot(std::vector<int>{0}, 3));
  std::mt19937_64 rng(1);
  const Tensor x = oracle::random_tensor({2, 4, 4, 1}, rng, 0.0, 1.0);
  const double rec = reconstruction_loss(x, x);
  const bool ok = std::abs(fool - std::log(8.0)) <= 1e-9 && std::abs(ce - std::log(2.0)) <= 1e-9 && rec == 0.0;
  return {ok, fmt("fool(uniform,8)-ln8=%.2e ce-ln2=%.2e rec(x,x)=%g", fool - std::log(8.0), ce - std::log(2.0), rec)};
}

Verdict criterion2() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> classes(2, 16);
  std::exponential_distribution<double> gamma1(1.0);  // Dirichlet(1) via normalized exponentials
  std::size_t below = 0, near_equal = 0;
  constexpr std::size_t kRows = 20000;
  for (std::size_t r = 0; r < kRows; ++r) {
    const std::size_t n = classes(rng);
    Tensor p({1, n});
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += p[i] = gamma1(rng);
    for (std::size_t i = 0; i < n; ++i) p[i] /= sum;
    const double excess = fooling_loss(p) - std::log(static_cast<double>(n));
    if (excess < -1e-12) ++below;
    if (std::abs(excess) <= 1e-9) ++near_equal;
  }
  bool uniform_ok = true;
  for (std::size_t n = 2; n <= 16; ++n) {
    uniform_ok &= std::abs(fooling_loss(uniform_row(n)) - std::log(static_cast<double>(n))) <= 1e-9;
  }
  return {below == 0 && near_equal == 0 && uniform_ok,
          fmt("%zu random rows: %zu below ln N, %zu within 1e-9 of ln N; uniform rows equal ln N: %s", kRows, below,
              near_equal, uniform_ok ? "yes" : "no")};
}

Verdict criterion3() {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  auto random_probs = [&](std::size_t b, std::size_t n) {
    Tensor p = oracle::random_tensor({b, n}, rng, 0.05, 1.0);
    for (std::size_t r = 0; r < b; ++r) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += p[r * n + i];
      for (std::size_t i = 0; i < n; ++i) p[r * n + i] /= s;
    }
    return p;
  };
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = oracle::random_tensor({3, 4, 4, 2}, rng, 0.0, 1.0);
    Tensor x_hat = oracle::random_tensor({3, 4, 4, 2}, rng, 0.0, 1.0);
    worst = std::max(worst, oracle::rel_error(reconstruction_loss_grad(x, x_hat),
                                              oracle::numeric_grad(x_hat, [&] { return reconstruction_loss(x, x_hat); })));

    const std::size_t n = 3 + static_cast<std::size_t>(trial % 6);
    std::vector<int> labels;
    for (int r = 0; r < 4; ++r) labels.push_back(static_cast<int>(rng() % n));
    const Tensor y = one_hot(labels, n);
    Tensor p = random_probs(4, n);
    worst = std::max(worst, oracle::rel_error(expression_loss_grad(p, y),
                                              oracle::numeric_grad(p, [&] { return expression_loss(p, y); })));
    worst = std::max(worst,
                     oracle::rel_error(adversary_classification_loss_grad(p, y),
                                       oracle::numeric_grad(p, [&] { return adversary_classification_loss(p, y); })));
    worst = std::max(worst, oracle::rel_error(fooling_loss_grad(p), oracle::numeric_grad(p, [&] { return fooling_loss(p); })));
  }
  return {worst < 1e-4, fmt("max relative error %.2e over 20 randomized trials of 4 losses", worst)};
}

Verdict criterion4() {
  const Dataset data = generate_synthetic_dataset(SyntheticSpec{.samples_per_combo = 10});
  ModelConfig m;
  m.code_dim = 8;
  m.n_id_classes = 6;
  m.enable_decoder = true;
  m.enable_identity_adversary = true;
  m.branch_depth = 2;
  m.decoder_depth = 3;

  std::size_t violations = 0;
  std::string first;
  auto check = [&](const char* what, const TrainState& before, const TrainState& after, const std::vector<Group>& allowed,
                   const std::vector<Group>& forbidden) {
    for (Group g : kAllGroups) {
      if (!before.params.has(g)) continue;
      const bool changed = before.params.group_hash(g) != after.params.group_hash(g);
      const bool may = std::find(allowed.begin(), allowed.end(), g) != allowed.end();
      const bool must_not = std::find(forbidden.begin(), forbidden.end(), g) != forbidden.end();
      if (changed && (!may || must_not)) {
        if (first.empty()) first = fmt("%s mutated %s", what, std::string(group_name(g)).c_str());
        ++violations;
      }
    }
  };

  for (double beta1 : {0.0, 1.0}) {
    TrainConfig t;
    t.weights = {beta1, 1.0, 1.0};
    t.learning_rate_main = t.learning_rate_adv = 1e-3;
    const Trainer trainer(m, t);
    TrainState state = trainer.init_state();
    BatchStream stream(data, 16, 4, true);
    const std::vector<Group> adv_allowed = {Group::c_adv_exp, Group::c_adv_id};
    const std::vector<Group> main_allowed = main_step_groups(m, t.weights);
    const std::vector<Group> main_forbidden =
        beta1 == 0.0 ? std::vector<Group>{Group::c_adv_exp, Group::de} : std::vector<Group>{Group::c_adv_exp};
    for (int step = 0; step < 50; ++step) {
      auto batch = stream.next();
      if (!batch) {
        stream = BatchStream(data, 16, 5 + static_cast<std::uint64_t>(step), true);
        batch = stream.next();
      }
      TrainState before = state;
      trainer.adversary_step(state, *batch);
      check("adversary_step", before, state, adv_allowed, {});
      before = state;
      trainer.main_step(state, *batch);
      check(beta1 == 0.0 ? "main_step(beta1=0)" : "main_step(beta1>0)", before, state, main_allowed, main_forbidden);
    }
  }
  return {violations == 0, violations == 0 ? std::string("2 x 50 rounds in dual mode, all group hashes respect routing")
                                           : fmt("%zu violations, first: %s", violations, first.c_str())};
}

Verdict criterion5() {
  const auto& r = disentangle_runs();
  const bool same = !r.metrics_a.empty() && r.metrics_a == r.metrics_b;
  return {same, fmt("metrics.csv %zu vs %zu bytes, identical: %s", r.metrics_a.size(), r.metrics_b.size(),
                    same ? "yes" : "no")};
}

Verdict criterion6() {
  const auto& r = disentangle_runs();
  const Model model(disentangle_model());
  const double acc = head_accuracy(model, r.adversarial.state.params, r.splits.test, Head::c_exp);
  const auto adv_codes = encode_dataset(model, r.adversarial.state.params, r.held_out);
  const auto base_codes = encode_dataset(model, r.baseline.state.params, r.held_out);
  const ProbeResult adv_probe = linear_probe(adv_codes.code_non_exp, r.held_out.exp_labels);
  const ProbeResult base_probe = linear_probe(base_codes.code_non_exp, r.held_out.exp_labels);
  const bool ok = acc >= 0.95 && adv_probe.accuracy <= adv_probe.chance + 0.10 &&
                  base_probe.accuracy - adv_probe.accuracy >= 0.15;
  return {ok, fmt("C_exp test acc %.3f (>=0.95); probe on code_non_exp %.3f (<= chance %.3f + 0.10); baseline probe %.3f, "
                  "margin %.3f (>=0.15)",
                  acc, adv_probe.accuracy, adv_probe.chance, base_probe.accuracy,
                  base_probe.accuracy - adv_probe.accuracy)};
}

Verdict criterion7() {
  const Dataset data = generate_synthetic_dataset(SyntheticSpec{});
  TrainConfig t = disentangle_train();
  t.epochs = 15;
  const Splits s = split(data, t.split, t.seed);
  const auto rows = ablation_reconstruction(disentangle_model(), t, s.train, s.test, {1.0, 0.001, 0.0});
  const AblationRow& with = rows.front();
  const AblationRow& without = rows.back();
  const bool ok = with.acc_c_adv_exp - without.acc_c_adv_exp >= 0.10 && without.acc_c_exp >= with.acc_c_exp;
  return {ok, fmt("beta1=1: C_exp %.3f C_adv %.3f | beta1=0.001: C_exp %.3f C_adv %.3f | beta1=0: C_exp %.3f C_adv %.3f",
                  with.acc_c_exp, with.acc_c_adv_exp, rows[1].acc_c_exp, rows[1].acc_c_adv_exp, without.acc_c_exp,
                  without.acc_c_adv_exp)};
}

Verdict criterion8() {
  const auto& r = disentangle_runs();
  const Model model(disentangle_model());
  const auto codes = encode_dataset(model, r.adversarial.state.params, r.splits.test);
  const SimilaritySummary sim = class_similarity(codes.code_exp, r.splits.test.exp_labels);
  return {sim.gap() >= 0.05, fmt("same-class cos %.3f, cross-class cos %.3f, gap %.3f (>=0.05)", sim.same_class_mean,
                                 sim.cross_class_mean, sim.gap())};
}

Verdict criterion9() {
  SyntheticSpec spec;
  spec.jitter = 0.0;
  spec.samples_per_combo = 20;
  const Dataset data = generate_synthetic_dataset(spec);
  ModelConfig m;
  m.code_dim = 16;
  m.n_id_classes = spec.n_id_classes;
  m.enable_decoder = true;
  m.enable_identity_adversary = true;
  TrainConfig t;
  t.weights = {1.0, 1.0, 1.0};
  t.epochs = 40;
  t.learning_rate_main = 1e-3;
  t.learning_rate_adv = 3e-2;
  t.adv_steps_per_main = 5;
  t.log_every = 1000;
  t.checkpoint_every = 100000;
  const TrainResult r = train(m, t, data, Dataset{});
  const Model model(m);

  // Every ordered pair of (expression, identity) combinations with different expressions.
  std::size_t pairs = 0, closer = 0;
  for (int e1 = 0; e1 < static_cast<int>(spec.n_exp_classes); ++e1) {
    for (int i1 = 0; i1 < static_cast<int>(spec.n_id_classes); ++i1) {
      for (int e2 = 0; e2 < static_cast<int>(spec.n_exp_classes); ++e2) {
        if (e2 == e1) continue;
        const int i2 = (i1 + 1 + e2) % static_cast<int>(spec.n_id_classes);
        const SwapQuad q = swap_synthesis(model, r.state.params, render(spec, e1, i1), render(spec, e2, i2));
        const Tensor target = render(spec, e2, i1);
        const Tensor source = render(spec, e1, i1);
        double d_target = 0.0, d_source = 0.0;
        for (std::size_t k = 0; k < target.size(); ++k) {
          d_target += (q.x1_swap[k] - target[k]) * (q.x1_swap[k] - target[k]);
          d_source += (q.x1_swap[k] - source[k]) * (q.x1_swap[k] - source[k]);
        }
        ++pairs;
        if (d_target < d_source) ++closer;
      }
    }
  }
  const double frac = static_cast<double>(closer) / static_cast<double>(pairs);
  return {frac >= 0.80, fmt("%zu of %zu swaps closer to render(exp(x2), id(x1)) (%.3f, >=0.80)", closer, pairs, frac)};
}

Verdict criterion10() {
  const Dataset data = generate_synthetic_dataset(SyntheticSpec{.samples_per_combo = 4});
  ModelConfig m;
  m.code_dim = 8;
  m.n_id_classes = 6;
  m.enable_decoder = true;
  m.enable_identity_adversary = true;
  m.branch_depth = 2;
  m.decoder_depth = 3;
  TrainConfig t;
  t.weights = {1.0, 1.0, 1.0};
  t.epochs = 3;
  t.batch_size = 16;
  t.log_every = 1;
  t.checkpoint_every = 100000;

  oracle::TempDir dir("accept_ckpt");
  TrainOptions first;
  first.stop_at_step = 5;
  const TrainResult part = train(m, t, data, data, first);
  save_checkpoint({m, t, part.state}, dir.path() / "a.ckpt");
  const Checkpoint loaded = load_checkpoint(dir.path() / "a.ckpt");
  save_checkpoint(loaded, dir.path() / "b.ckpt");
  const std::string a = read_bytes(dir.path() / "a.ckpt"), b = read_bytes(dir.path() / "b.ckpt");
  const bool bytes_equal = !a.empty() && a == b;

  TrainOptions resumed_opts, full_opts;
  resumed_opts.resume = loaded.state;
  resumed_opts.stop_at_step = 15;
  full_opts.stop_at_step = 15;
  const TrainResult resumed = train(m, t, data, data, resumed_opts);
  const TrainResult full = train(m, t, data, data, full_opts);
  bool metrics_equal = resumed.metrics.size() == 10;
  for (std::size_t i = 0; metrics_equal && i < resumed.metrics.size(); ++i) {
    metrics_equal = metrics_line(resumed.metrics[i], true) == metrics_line(full.metrics[5 + i], true);
  }
  const bool ok = bytes_equal && metrics_equal && resumed.state == full.state;
  return {ok, fmt("save-load-save bytes identical: %s; 10 resumed steps match: %s", bytes_equal ? "yes" : "no",
                  metrics_equal && resumed.state == full.state ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::function<Verdict()>> criteria = {
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
      {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}};
  bool report_only = false;
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--report-only") {
      report_only = true;
    } else {
      const int n = std::atoi(arg.c_str());
      if (!criteria.count(n)) {
        std::fprintf(stderr, "unknown criterion '%s'\n", arg.c_str());
        return 64;
      }
      selected.insert(n);
    }
  }
  if (selected.empty()) {
    for (const auto& [n, _] : criteria) selected.insert(n);
  }

  std::size_t failed = 0;
  for (int n : selected) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria.at(n)();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d: %s  %s  [%.1fs]\n", n, v.pass ? "PASS" : "FAIL", v.detail.c_str(), secs);
    std::fflush(stdout);
    if (!v.pass) ++failed;
  }
  std::printf("%zu of %zu criteria passed\n", selected.size() - failed, selected.size());
  return failed == 0 || report_only ? 0 : 1;
}
