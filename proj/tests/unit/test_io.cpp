#include <doctest.h>

#include <fstream>
#include <iterator>

#include "disent/binary_io.hpp"
#include "disent/config.hpp"
#include "disent/error.hpp"
#include "disent/raster.hpp"
#include "oracles.hpp"

using namespace disent;

TEST_SUITE("io") {
  TEST_CASE("binary container round-trip") {
    oracle::TempDir dir("bin");
    io::Writer w("TEST", 3);
    w.u32(7);
    w.u64(1ull << 40);
    w.i32(-5);
    w.f64(0.1);
    w.str("hello");
    w.tensor(Tensor({2, 2}, std::vector<double>{1, 2, 3, 4}));
    w.i32s({1, -2, 3});
    w.save(dir / "x.bin");
    CHECK_FALSE(std::filesystem::exists(dir / "x.bin.tmp"));

    io::Reader r(dir / "x.bin", "TEST", 3, "test file");
    CHECK(r.u32() == 7);
    CHECK(r.u64() == (1ull << 40));
    CHECK(r.i32() == -5);
    CHECK(r.f64() == 0.1);
    CHECK(r.str() == "hello");
    CHECK(r.tensor() == Tensor({2, 2}, std::vector<double>{1, 2, 3, 4}));
    CHECK(r.i32s() == std::vector<int>{1, -2, 3});
    r.finish();

    CHECK_THROWS_AS(io::Reader(dir / "x.bin", "NOPE", 3, "test file"), LoadError);
    CHECK_THROWS_AS(io::Reader(dir / "x.bin", "TEST", 4, "test file"), LoadError);
    io::Reader partial(dir / "x.bin", "TEST", 3, "test file");
    partial.u32();
    CHECK_THROWS_AS(partial.finish(), LoadError);
  }

  TEST_CASE("reads past the payload fail cleanly") {
    oracle::TempDir dir("bin2");
    io::Writer w("TEST", 1);
    w.u32(1);
    w.save(dir / "x.bin");
    io::Reader r(dir / "x.bin", "TEST", 1, "test file");
    r.u32();
    CHECK_THROWS_AS(r.u64(), LoadError);
  }

  TEST_CASE("png and netpbm round-trips") {
    oracle::TempDir dir("img");
    std::mt19937_64 rng(1);
    for (std::size_t c : {1u, 3u}) {
      const Tensor img = oracle::random_tensor({5, 7, c}, rng, 0, 1);
      raster::write_png(dir / "a.png", img);
      raster::write_pnm(dir / "a.pnm", img);
      for (const char* name : {"a.png", "a.pnm"}) {
        const Tensor back = raster::read_image(dir / name);
        REQUIRE(back.shape() == img.shape());
        CHECK(oracle::rel_error(back, img) <= 0.5 / 255 + 1e-12);
      }
    }
    std::ofstream(dir / "ascii.pgm") << "P2\n# comment\n2 1\n255\n0 255\n";
    const Tensor a = raster::read_image(dir / "ascii.pgm");
    CHECK(a.shape() == Shape{1, 2, 1});
    CHECK(a[1] == 1.0);
    std::ofstream(dir / "bad.png") << "nope";
    CHECK_THROWS_AS(raster::read_image(dir / "bad.png"), InputError);
  }

  TEST_CASE("resize and channel conversion") {
    const Tensor flat({4, 4, 3}, 0.5);
    const Tensor r = raster::resize(flat, 9, 1);
    CHECK(r.shape() == Shape{9, 9, 1});
    for (double v : r.values()) CHECK(v == doctest::Approx(0.5));
    const Tensor g = raster::resize(Tensor({2, 2, 1}, 0.25), 2, 3);
    CHECK(g.shape() == Shape{2, 2, 3});
    for (double v : g.values()) CHECK(v == 0.25);
  }

  TEST_CASE("tile grid layout") {
    std::vector<Tensor> tiles;
    for (int i = 0; i < 6; ++i) tiles.emplace_back(Shape{4, 5, 1}, i / 10.0);
    const Tensor grid = raster::tile_grid(tiles, 2, 3, 2);
    CHECK(grid.shape() == Shape{2 * 4 + 3 * 2, 3 * 5 + 4 * 2, 1});
    // Top-left pixel of the tile in row 1, column 2 (index 5).
    const std::size_t y = 2 + 4 + 2, x = 2 + 2 * (5 + 2);
    CHECK(grid[(y * grid.dim(1) + x)] == doctest::Approx(0.5));
    tiles[3] = Tensor({3, 5, 1});
    CHECK_THROWS_AS(raster::tile_grid(tiles, 2, 3), InputError);
  }

  TEST_CASE("plots render onto RGB canvases") {
    const Tensor lp = raster::line_plot({{"a", {3, 2, 1}}, {"b", {1, 1.5, 2}}}, 200, 100);
    CHECK(lp.shape() == Shape{100, 200, 3});
    const Tensor bp = raster::bar_plot({"x", "y"}, {{"s", {0.2, 0.9}}}, 1.0, 120, 80);
    CHECK(bp.shape() == Shape{80, 120, 3});
    bool non_white = false;
    for (double v : bp.values()) non_white = non_white || v < 0.99;
    CHECK(non_white);
  }

  TEST_CASE("run configuration JSON round-trip and strictness") {
    oracle::TempDir dir("cfg");
    RunConfig rc;
    rc.model.code_dim = 12;
    rc.model.n_id_classes = 5;
    rc.train.weights = {0.5, 1, 2};
    rc.train.split = {0.7, 0.2, 0.1};
    rc.synthetic.jitter = 0.0;
    rc.dataset = "data/set.bin";
    rc.output_dir = "out";
    save_run_config(rc, dir / "c.json");
    const RunConfig back = load_run_config(dir / "c.json");
    CHECK(back.model == rc.model);
    CHECK(back.train == rc.train);
    CHECK(back.synthetic == rc.synthetic);
    CHECK(back.dataset == rc.dataset);
    CHECK(back.output_dir == rc.output_dir);

    std::ofstream(dir / "partial.json") << R"({"train": {"epochs": 3}})";
    const RunConfig partial = load_run_config(dir / "partial.json");
    CHECK(partial.train.epochs == 3);
    CHECK(partial.train.batch_size == TrainConfig{}.batch_size);
    CHECK(partial.model == ModelConfig{});

    std::ofstream(dir / "typo.json") << R"({"train": {"epoch": 3}})";
    CHECK_THROWS_AS(load_run_config(dir / "typo.json"), ConfigError);
    std::ofstream(dir / "broken.json") << "{";
    CHECK_THROWS_AS(load_run_config(dir / "broken.json"), ConfigError);
    CHECK_THROWS_AS(load_run_config(dir / "absent.json"), ConfigError);
  }
}
