#include <doctest.h>

#include <cmath>
#include <random>

#include "disent/error.hpp"
#include "disent/losses.hpp"
#include "disent/model.hpp"
#include "disent/training.hpp"
#include "oracles.hpp"

using namespace disent;

namespace {

ModelConfig tiny_config(bool decoder = true, bool dual = true) {
  ModelConfig c;
  c.image_size = 8;
  c.channels = 1;
  c.code_dim = 3;
  c.n_exp_classes = 4;
  c.n_id_classes = 3;
  c.encoder_widths = {2};
  c.branch_width = 3;
  c.branch_depth = 2;
  c.decoder_width = 2;
  c.decoder_depth = 3;
  c.enable_decoder = decoder;
  c.enable_identity_adversary = dual;
  return c;
}

Tensor random_images(std::size_t n, const ModelConfig& c, std::mt19937_64& rng) {
  return oracle::random_tensor({n, c.image_size, c.image_size, c.channels}, rng, 0.0, 1.0);
}

Batch random_batch(const ModelConfig& c, std::size_t n, std::mt19937_64& rng) {
  Batch b;
  b.images = random_images(n, c, rng);
  std::vector<int> e, id;
  for (std::size_t i = 0; i < n; ++i) {
    e.push_back(static_cast<int>(i % c.n_exp_classes));
    id.push_back(static_cast<int>((i * 7 + 1) % *c.n_id_classes));
  }
  b.exp_one_hot = one_hot(e, c.n_exp_classes);
  b.id_one_hot = one_hot(id, *c.n_id_classes);
  return b;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("initialization is deterministic and seed dependent") {
    const Model m(ModelConfig{});
    CHECK(m.init_params(7) == m.init_params(7));
    CHECK_FALSE(m.init_params(7) == m.init_params(8));
    CHECK(m.init_params(7).all_finite());
  }

  TEST_CASE("head shapes follow the linear-classifier definition") {
    ModelConfig c;
    c.n_exp_classes = 8;
    c.code_dim = 64;
    const ModelParams p = Model(c).init_params(0);
    CHECK(p.group(Group::c_exp).arrays.at(0).shape() == Shape{64, 8});
    CHECK(p.group(Group::c_exp).arrays.at(1).shape() == Shape{8});
    CHECK_FALSE(p.has(Group::c_adv_id));
    CHECK_FALSE(p.has(Group::de));
    for (const auto& b : p.group(Group::c_exp).arrays.at(1).values()) CHECK(b == 0.0);
  }

  TEST_CASE("optional components appear only when configured") {
    const ModelParams p = Model(tiny_config(true, true)).init_params(0);
    CHECK(p.has(Group::de));
    CHECK(p.has(Group::c_adv_id));
    CHECK(p.group(Group::c_adv_id).arrays.at(0).shape() == Shape{3, 3});
  }

  TEST_CASE("configuration validation") {
    ModelConfig c = tiny_config();
    c.decoder_depth = 0;
    CHECK_THROWS_AS(Model{c}, ConfigError);
    c = tiny_config();
    c.n_id_classes.reset();
    CHECK_THROWS_AS(Model{c}, ConfigError);
    c = tiny_config();
    c.channels = 2;
    CHECK_THROWS_AS(Model{c}, ConfigError);
    c = tiny_config();
    c.leaky_slope = 1.0;
    CHECK_THROWS_AS(Model{c}, ConfigError);
  }

  TEST_CASE("zero heads give uniform rows and an affine shift gives the analytic softmax") {
    ModelConfig c = tiny_config(false, false);
    c.n_exp_classes = 3;
    const Model m(c);
    ModelParams p = m.init_params(1);
    for (Group g : {Group::c_exp, Group::c_adv_exp}) {
      for (auto& a : p.group(g).arrays) a.fill(0.0);
    }
    std::mt19937_64 rng(2);
    const Tensor code = oracle::random_tensor({5, 3}, rng);
    for (const Tensor& probs : {m.classify_expression(p, code), m.adversary_predict(p, code)}) {
      for (double v : probs.values()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
    }
    p.group(Group::c_exp).arrays[1][0] = std::log(2.0);
    const Tensor q = m.classify_expression(p, code);
    CHECK(q[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(q[1] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(q[2] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK_THROWS_AS(m.classify_expression(p, Tensor({5, 4})), InputError);
  }

  TEST_CASE("encode shape, purity and per-sample independence") {
    const ModelConfig c = tiny_config();
    const Model m(c);
    const ModelParams p = m.init_params(3);
    std::mt19937_64 rng(4);
    Tensor x = random_images(4, c, rng);
    // Make rows 1 and 3 identical.
    std::copy_n(x.data() + 64, 64, x.data() + 192);
    const RepresentationPair a = m.encode(p, x), b = m.encode(p, x);
    CHECK(a.code_exp.shape() == Shape{4, 3});
    CHECK(a.code_non_exp.shape() == Shape{4, 3});
    CHECK(a.code_exp == b.code_exp);
    CHECK(a.code_non_exp == b.code_non_exp);
    for (std::size_t k = 0; k < 3; ++k) CHECK(a.code_exp[3 + k] == a.code_exp[9 + k]);

    const std::vector<std::size_t> perm{2, 0, 3, 1};
    const RepresentationPair pa = m.encode(p, x.gather_rows(perm));
    CHECK(pa.code_exp == a.code_exp.gather_rows(perm));
    CHECK(pa.code_non_exp == a.code_non_exp.gather_rows(perm));
  }

  TEST_CASE("input validation") {
    const ModelConfig c = tiny_config();
    const Model m(c);
    const ModelParams p = m.init_params(3);
    CHECK_THROWS_AS(m.encode(p, Tensor({2, 8, 8, 3})), InputError);
    CHECK_THROWS_AS(m.encode(p, Tensor({2, 9, 8, 1})), InputError);
    Tensor bad({1, 8, 8, 1});
    bad[5] = NAN;
    CHECK_THROWS_AS(m.encode(p, bad), InputError);
    ModelParams missing = p;
    missing.group(Group::b_exp).arrays.pop_back();
    CHECK_THROWS_AS(m.check_params(missing), InputError);
  }

  TEST_CASE("decode round-trips shapes across small configurations") {
    std::mt19937_64 rng(5);
    for (std::size_t size : {8u, 12u, 16u, 20u, 32u}) {
      for (std::size_t ch : {1u, 3u}) {
        for (std::size_t depth : {1u, 3u, 6u}) {
          ModelConfig c = tiny_config(true, false);
          c.image_size = size;
          c.channels = ch;
          c.decoder_depth = depth;
          c.branch_depth = 3;
          const Model m(c);
          const ModelParams p = m.init_params(size + ch + depth);
          const Tensor x = random_images(2, c, rng);
          const Tensor y = m.decode(p, m.encode(p, x));
          REQUIRE(y.shape() == x.shape());
          for (double v : y.values()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
          }
        }
      }
    }
  }

  TEST_CASE("decoder-less models refuse to decode") {
    const ModelConfig c = tiny_config(false, false);
    const Model m(c);
    const ModelParams p = m.init_params(0);
    std::mt19937_64 rng(6);
    CHECK_THROWS_AS(m.decode(p, m.encode(p, random_images(1, c, rng))), ConfigError);
  }

  TEST_CASE("main-step gradients match finite differences of the encoder objective") {
    const ModelConfig c = tiny_config(true, true);
    const LossWeights w{0.7, 1.3, 0.9};
    const Trainer trainer(c, TrainConfig{});
    const Model& m = trainer.model();
    ModelParams p = m.init_params(11);
    std::mt19937_64 rng(12);
    const Batch batch = random_batch(c, 5, rng);

    // Forward-only objective the encoder side minimizes: heads are treated as fixed.
    auto objective = [&] {
      const RepresentationPair codes = m.encode(p, batch.images);
      const double l_r = reconstruction_loss(batch.images, m.decode(p, codes));
      const double l_exp = expression_loss(m.classify_expression(p, codes.code_exp), batch.exp_one_hot);
      const double fool = fooling_loss(m.adversary_predict(p, codes.code_non_exp)) +
                          fooling_loss(m.identity_adversary_predict(p, codes.code_exp));
      return w.beta1 * l_r + w.beta2 * l_exp + w.beta3 * fool;
    };

    LossReport report;
    const ModelParams grads = trainer.main_gradients(p, batch, w, &report);
    CHECK(report.all_finite());
    for (Group g : {Group::en_base, Group::b_exp, Group::b_non_exp, Group::de, Group::c_exp}) {
      auto& arrays = p.group(g).arrays;
      for (std::size_t i = 0; i < arrays.size(); ++i) {
        const Tensor numeric = oracle::numeric_grad(arrays[i], objective);
        CAPTURE(group_name(g));
        CAPTURE(i);
        CHECK(oracle::rel_error(grads.group(g).arrays[i], numeric) < 1e-5);
      }
    }
    for (Group g : {Group::c_adv_exp, Group::c_adv_id}) {
      for (const auto& a : grads.group(g).arrays) {
        for (double v : a.values()) CHECK(v == 0.0);
      }
    }
  }

  TEST_CASE("adversary gradients match finite differences of the adversary losses") {
    const ModelConfig c = tiny_config(false, true);
    const Trainer trainer(c, TrainConfig{});
    const Model& m = trainer.model();
    ModelParams p = m.init_params(13);
    std::mt19937_64 rng(14);
    const Batch batch = random_batch(c, 6, rng);
    auto objective = [&] {
      const RepresentationPair codes = m.encode(p, batch.images);
      return adversary_classification_loss(m.adversary_predict(p, codes.code_non_exp), batch.exp_one_hot) +
             adversary_classification_loss(m.identity_adversary_predict(p, codes.code_exp), batch.id_one_hot);
    };
    AdversaryOutcome out;
    const ModelParams grads = trainer.adversary_gradients(p, batch, &out);
    for (Group g : {Group::c_adv_exp, Group::c_adv_id}) {
      auto& arrays = p.group(g).arrays;
      for (std::size_t i = 0; i < arrays.size(); ++i) {
        CHECK(oracle::rel_error(grads.group(g).arrays[i], oracle::numeric_grad(arrays[i], objective)) < 1e-6);
      }
    }
    for (Group g : {Group::en_base, Group::b_exp, Group::b_non_exp, Group::c_exp}) {
      for (const auto& a : grads.group(g).arrays) {
        for (double v : a.values()) CHECK(v == 0.0);
      }
    }
  }
}
