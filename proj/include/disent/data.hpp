#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <span>
#include <vector>

#include "disent/tensor.hpp"

namespace disent {

/// Parameters of the procedural two-factor face renderer.
struct SyntheticSpec {
  std::size_t n_exp_classes = 4;
  std::size_t n_id_classes = 6;
  std::size_t image_size = 32;
  std::size_t channels = 1;
  std::size_t samples_per_combo = 100;
  double jitter = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t total_samples() const { return n_exp_classes * n_id_classes * samples_per_combo; }
  friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

/// Nuisance perturbation of one rendered sample. Offsets are in units of the image side.
struct JitterDraw {
  double dx = 0.0;
  double dy = 0.0;
  double brightness = 0.0;
};

/// Draws a jitter sample with amplitude `jitter` (0 yields the identity draw).
JitterDraw draw_jitter(std::mt19937_64& rng, double jitter);

/// Pure renderer: the image [S,S,C] for expression level `exp` and identity `id`.
///
/// The expression factor sets mouth curvature (evenly spaced in [-1, 1]) and eye
/// openness; the identity factor sets head aspect ratio, head tone and the
/// background texture. Jitter moves the face and shifts brightness only.
Tensor render(const SyntheticSpec& spec, int exp, int id, const JitterDraw& jitter = {});

struct Dataset {
  Tensor images;  // [n, S, S, C] in [0,1]
  std::vector<int> exp_labels;
  std::vector<int> id_labels;
  std::size_t n_exp_classes = 0;
  std::size_t n_id_classes = 0;
  std::vector<std::string> exp_class_names;
  std::optional<SyntheticSpec> spec;  // set for generated datasets

  std::size_t size() const { return exp_labels.size(); }
  std::size_t image_size() const { return images.rank() == 4 ? images.dim(1) : 0; }
  std::size_t channels() const { return images.rank() == 4 ? images.dim(3) : 0; }

  Dataset subset(std::span<const std::size_t> indices) const;
  /// Throws InputError unless labels are in range and images are finite and in [0,1].
  void validate() const;
};

Dataset generate_synthetic_dataset(const SyntheticSpec& spec);

struct FolderLoad {
  Dataset dataset;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;
};

/// Reads <root>/<class_name>/<image> into a dataset resized to `image_size`.
/// Class ids follow sorted directory names. Identity labels come from an
/// optional <root>/identities.csv ("relative/path,id" rows) and default to 0.
FolderLoad load_image_folder(const std::filesystem::path& root, std::size_t image_size, std::size_t channels);

struct Splits {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Stratified by expression label; deterministic for a fixed seed.
Splits split(const Dataset& dataset, std::array<double, 3> fractions, std::uint64_t seed);
/// Index form of split(), for bookkeeping checks.
std::array<std::vector<std::size_t>, 3> split_indices(const Dataset& dataset, std::array<double, 3> fractions,
                                                      std::uint64_t seed);

struct Batch {
  Tensor images;
  Tensor exp_one_hot;
  Tensor id_one_hot;
  std::vector<std::size_t> indices;
};

/// Yields consecutive batches over a fixed order; the last one may be partial.
class BatchStream {
 public:
  BatchStream(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed, bool shuffle);
  BatchStream(const Dataset& dataset, std::size_t batch_size, std::vector<std::size_t> order);

  std::optional<Batch> next();
  std::size_t batch_count() const;
  const std::vector<std::size_t>& order() const { return order_; }

 private:
  const Dataset* dataset_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices);

/// Binary dataset cache with the generating spec embedded.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace disent
