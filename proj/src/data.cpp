#include "disent/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "disent/binary_io.hpp"
#include "disent/error.hpp"
#include "disent/losses.hpp"
#include "disent/raster.hpp"

namespace disent {

namespace {

constexpr std::size_t kMinRenderSize = 16;
constexpr char kDatasetMagic[] = "DSET";
constexpr std::uint32_t kDatasetVersion = 1;

// Soft coverage of a signed distance measured in pixels (positive inside).
double coverage(double inside_px) { return std::clamp(inside_px + 0.5, 0.0, 1.0); }

double background(int texture, double u, double v) {
  constexpr double kPi = 3.14159265358979323846;
  switch (texture % 3) {
    case 0:
      return std::sin(2 * kPi * 6 * v);
    case 1:
      return std::sin(2 * kPi * 6 * u);
    default:
      return std::sin(2 * kPi * 4 * u) * std::sin(2 * kPi * 4 * v);
  }
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_exp_classes < 2) throw ConfigError("synthetic n_exp_classes must be at least 2");
  if (n_id_classes < 2) throw ConfigError("synthetic n_id_classes must be at least 2");
  if (image_size < kMinRenderSize) {
    throw ConfigError("renderer needs image_size >= " + std::to_string(kMinRenderSize) + ", got " +
                      std::to_string(image_size));
  }
  if (channels != 1 && channels != 3) throw ConfigError("synthetic channels must be 1 or 3");
  if (samples_per_combo == 0) throw ConfigError("synthetic samples_per_combo must be at least 1");
  if (!(jitter >= 0.0) || !std::isfinite(jitter)) throw ConfigError("synthetic jitter must be finite and >= 0");
}

JitterDraw draw_jitter(std::mt19937_64& rng, double jitter) {
  if (jitter == 0.0) return {};
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  JitterDraw d;
  d.dx = 0.06 * jitter * unit(rng);
  d.dy = 0.06 * jitter * unit(rng);
  d.brightness = 0.1 * jitter * unit(rng);
  return d;
}

Tensor render(const SyntheticSpec& spec, int exp, int id, const JitterDraw& jitter) {
  spec.validate();
  if (exp < 0 || static_cast<std::size_t>(exp) >= spec.n_exp_classes || id < 0 ||
      static_cast<std::size_t>(id) >= spec.n_id_classes) {
    throw InputError("render: factor level out of range");
  }
  const std::size_t s = spec.image_size;
  const double side = static_cast<double>(s);
  const double te = static_cast<double>(exp) / static_cast<double>(spec.n_exp_classes - 1);
  const double ti = static_cast<double>(id) / static_cast<double>(spec.n_id_classes - 1);

  const double curvature = -1.0 + 2.0 * te;
  const double openness = 0.25 + 0.75 * te;

  const double aspect = 0.70 + 0.35 * ti;
  // Tones are a permutation of evenly spaced levels so they do not track aspect.
  const auto tone_rank = static_cast<double>((static_cast<std::size_t>(id) * 5) % spec.n_id_classes);
  const double tone = 0.50 + 0.40 * tone_rank / static_cast<double>(spec.n_id_classes - 1);
  const double bg_level = 0.12 + 0.10 * static_cast<double>(id % 2);

  const double cx = 0.5 + jitter.dx, cy = 0.5 + jitter.dy;
  const double ry = 0.40, rx = ry * aspect;
  const double eye_dx = 0.15, eye_y = cy - 0.08, eye_rx = 0.065, eye_ry = 0.012 + 0.05 * openness;
  const double mouth_y = cy + 0.17, mouth_w = 0.16, mouth_bend = 0.07, mouth_half = 0.035;
  constexpr double kFeature = 0.05;

  Tensor img({s, s, spec.channels});
  for (std::size_t py = 0; py < s; ++py) {
    for (std::size_t px = 0; px < s; ++px) {
      const double u = (static_cast<double>(px) + 0.5) / side;
      const double v = (static_cast<double>(py) + 0.5) / side;
      double value = bg_level + 0.06 * background(id, u, v);

      const double head_d = std::hypot((u - cx) / rx, (v - cy) / ry);
      const double head = coverage((1.0 - head_d) * ry * side);
      value = value * (1.0 - head) + tone * head;

      for (double sign : {-1.0, 1.0}) {
        const double d = std::hypot((u - (cx + sign * eye_dx)) / eye_rx, (v - eye_y) / eye_ry);
        const double eye = coverage((1.0 - d) * eye_ry * side);
        value = value * (1.0 - eye) + kFeature * eye;
      }

      const double t = (u - cx) / mouth_w;
      const double curve_v = mouth_y + curvature * mouth_bend * (1.0 - t * t);
      const double along = coverage((1.0 - std::abs(t)) * mouth_w * side);
      const double across = coverage((mouth_half - std::abs(v - curve_v)) * side);
      const double mouth = along * across;
      value = value * (1.0 - mouth) + kFeature * mouth;

      value = std::clamp(value + jitter.brightness, 0.0, 1.0);
      double* out = img.data() + (py * s + px) * spec.channels;
      if (spec.channels == 1) {
        out[0] = value;
      } else {
        for (std::size_t c = 0; c < 3; ++c) {
          const double tint = 1.0 - 0.25 * static_cast<double>((static_cast<std::size_t>(id) + c) % 3) / 2.0;
          out[c] = std::clamp(value * tint, 0.0, 1.0);
        }
      }
    }
  }
  return img;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.images = images.gather_rows(indices);
  out.exp_labels.reserve(indices.size());
  out.id_labels.reserve(indices.size());
  for (auto i : indices) {
    out.exp_labels.push_back(exp_labels.at(i));
    out.id_labels.push_back(id_labels.at(i));
  }
  out.n_exp_classes = n_exp_classes;
  out.n_id_classes = n_id_classes;
  out.exp_class_names = exp_class_names;
  out.spec = spec;
  return out;
}

void Dataset::validate() const {
  if (images.rank() != 4 || images.dim(0) != exp_labels.size() || exp_labels.size() != id_labels.size()) {
    throw InputError("dataset arrays disagree on sample count");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    if (exp_labels[i] < 0 || static_cast<std::size_t>(exp_labels[i]) >= n_exp_classes) {
      throw InputError("expression label out of range at sample " + std::to_string(i));
    }
    if (id_labels[i] < 0 || static_cast<std::size_t>(id_labels[i]) >= std::max<std::size_t>(n_id_classes, 1)) {
      throw InputError("identity label out of range at sample " + std::to_string(i));
    }
  }
  for (double v : images.values()) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) throw InputError("dataset image values must lie in [0,1]");
  }
}

Dataset generate_synthetic_dataset(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t s = spec.image_size, c = spec.channels;
  const std::size_t per_image = s * s * c;
  Dataset ds;
  ds.n_exp_classes = spec.n_exp_classes;
  ds.n_id_classes = spec.n_id_classes;
  ds.spec = spec;
  for (std::size_t e = 0; e < spec.n_exp_classes; ++e) ds.exp_class_names.push_back("level" + std::to_string(e));
  ds.images = Tensor({spec.total_samples(), s, s, c});
  std::mt19937_64 rng(spec.seed);
  std::size_t k = 0;
  for (std::size_t e = 0; e < spec.n_exp_classes; ++e) {
    for (std::size_t i = 0; i < spec.n_id_classes; ++i) {
      const Tensor clean = spec.jitter == 0.0 ? render(spec, static_cast<int>(e), static_cast<int>(i)) : Tensor{};
      for (std::size_t r = 0; r < spec.samples_per_combo; ++r, ++k) {
        const Tensor img =
            spec.jitter == 0.0 ? clean : render(spec, static_cast<int>(e), static_cast<int>(i), draw_jitter(rng, spec.jitter));
        std::copy(img.data(), img.data() + per_image, ds.images.data() + k * per_image);
        ds.exp_labels.push_back(static_cast<int>(e));
        ds.id_labels.push_back(static_cast<int>(i));
      }
    }
  }
  ds.validate();
  return ds;
}

FolderLoad load_image_folder(const std::filesystem::path& root, std::size_t image_size, std::size_t channels) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw ConfigError("dataset not found: " + root.string());
  if (image_size == 0 || (channels != 1 && channels != 3)) throw ConfigError("invalid ingestion image geometry");
  std::vector<std::string> classes;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) classes.push_back(entry.path().filename().string());
  }
  std::sort(classes.begin(), classes.end());
  if (classes.empty()) throw ConfigError("image folder " + root.string() + " has no class directories");

  std::map<std::string, int> identities;
  if (std::ifstream ids(root / "identities.csv"); ids) {
    std::string line;
    while (std::getline(ids, line)) {
      const auto comma = line.rfind(',');
      if (comma == std::string::npos) continue;
      try {
        identities[line.substr(0, comma)] = std::stoi(line.substr(comma + 1));
      } catch (const std::exception&) {
        // header or malformed row
      }
    }
  }

  FolderLoad result;
  Dataset& ds = result.dataset;
  ds.n_exp_classes = classes.size();
  ds.exp_class_names = classes;
  std::vector<double> pixels;
  int max_id = 0;
  for (std::size_t label = 0; label < classes.size(); ++label) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(root / classes[label])) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ConfigError("class directory " + classes[label] + " is empty");
    for (const auto& file : files) {
      Tensor img;
      try {
        img = raster::resize(raster::read_image(file), image_size, channels);
      } catch (const Error& e) {
        ++result.skipped;
        result.warnings.push_back(std::string("skipped ") + file.string() + ": " + e.what());
        continue;
      }
      pixels.insert(pixels.end(), img.values().begin(), img.values().end());
      ds.exp_labels.push_back(static_cast<int>(label));
      const auto rel = (fs::path(classes[label]) / file.filename()).generic_string();
      const auto it = identities.find(rel);
      const int id = it == identities.end() ? 0 : it->second;
      max_id = std::max(max_id, id);
      ds.id_labels.push_back(id);
    }
  }
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
  if (ds.exp_labels.empty()) throw ConfigError("image folder " + root.string() + " contains no readable images");
  ds.n_id_classes = static_cast<std::size_t>(max_id) + 1;
  ds.images = Tensor({ds.exp_labels.size(), image_size, image_size, channels}, std::move(pixels));
  ds.validate();
  return result;
}

std::array<std::vector<std::size_t>, 3> split_indices(const Dataset& dataset, std::array<double, 3> fractions,
                                                      std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ConfigError("split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

  std::vector<std::vector<std::size_t>> strata(dataset.n_exp_classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) strata.at(static_cast<std::size_t>(dataset.exp_labels[i])).push_back(i);

  std::mt19937_64 rng(seed);
  std::array<std::vector<std::size_t>, 3> out;
  for (std::size_t c = 0; c < strata.size(); ++c) {
    auto& members = strata[c];
    if (members.empty()) continue;
    if (members.size() < fractions.size()) {
      throw ConfigError("expression class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                        " samples, fewer than the number of splits");
    }
    std::shuffle(members.begin(), members.end(), rng);
    // Largest-remainder apportionment keeps the split exhaustive.
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> rem{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double exact = fractions[k] * static_cast<double>(members.size());
      counts[k] = static_cast<std::size_t>(std::floor(exact));
      rem[k] = exact - static_cast<double>(counts[k]);
      assigned += counts[k];
    }
    while (assigned < members.size()) {
      const auto k = static_cast<std::size_t>(std::max_element(rem.begin(), rem.end()) - rem.begin());
      ++counts[k];
      rem[k] = -1.0;
      ++assigned;
    }
    std::size_t pos = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      out[k].insert(out[k].end(), members.begin() + static_cast<std::ptrdiff_t>(pos),
                    members.begin() + static_cast<std::ptrdiff_t>(pos + counts[k]));
      pos += counts[k];
    }
  }
  for (auto& part : out) std::sort(part.begin(), part.end());
  return out;
}

Splits split(const Dataset& dataset, std::array<double, 3> fractions, std::uint64_t seed) {
  auto idx = split_indices(dataset, fractions, seed);
  return {dataset.subset(idx[0]), dataset.subset(idx[1]), dataset.subset(idx[2])};
}

Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices) {
  Batch b;
  b.images = dataset.images.gather_rows(indices);
  std::vector<int> exp, id;
  for (auto i : indices) {
    exp.push_back(dataset.exp_labels[i]);
    id.push_back(dataset.id_labels[i]);
  }
  b.exp_one_hot = one_hot(exp, dataset.n_exp_classes);
  b.id_one_hot = one_hot(id, std::max<std::size_t>(dataset.n_id_classes, 1));
  b.indices.assign(indices.begin(), indices.end());
  return b;
}

BatchStream::BatchStream(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed, bool shuffle)
    : dataset_(&dataset), batch_size_(batch_size), order_(dataset.size()) {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (shuffle) {
    std::mt19937_64 rng(seed);
    std::shuffle(order_.begin(), order_.end(), rng);
  }
}

BatchStream::BatchStream(const Dataset& dataset, std::size_t batch_size, std::vector<std::size_t> order)
    : dataset_(&dataset), batch_size_(batch_size), order_(std::move(order)) {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
}

std::size_t BatchStream::batch_count() const { return (order_.size() + batch_size_ - 1) / batch_size_; }

std::optional<Batch> BatchStream::next() {
  if (pos_ >= order_.size()) return std::nullopt;
  const std::size_t end = std::min(pos_ + batch_size_, order_.size());
  Batch b = make_batch(*dataset_, std::span<const std::size_t>(order_).subspan(pos_, end - pos_));
  pos_ = end;
  return b;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  io::Writer w(kDatasetMagic, kDatasetVersion);
  w.u64(dataset.n_exp_classes);
  w.u64(dataset.n_id_classes);
  w.u64(dataset.exp_class_names.size());
  for (const auto& name : dataset.exp_class_names) w.str(name);
  w.u32(dataset.spec ? 1 : 0);
  if (dataset.spec) {
    const auto& s = *dataset.spec;
    for (auto v : {s.n_exp_classes, s.n_id_classes, s.image_size, s.channels, s.samples_per_combo}) w.u64(v);
    w.f64(s.jitter);
    w.u64(s.seed);
  }
  w.tensor(dataset.images);
  w.i32s(dataset.exp_labels);
  w.i32s(dataset.id_labels);
  w.save(path);
}

Dataset load_dataset(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("dataset not found: " + path.string());
  io::Reader r(path, kDatasetMagic, kDatasetVersion, "dataset cache");
  Dataset ds;
  ds.n_exp_classes = r.u64();
  ds.n_id_classes = r.u64();
  const auto n_names = r.u64();
  for (std::uint64_t i = 0; i < n_names; ++i) ds.exp_class_names.push_back(r.str());
  if (r.u32() != 0) {
    SyntheticSpec s;
    s.n_exp_classes = r.u64();
    s.n_id_classes = r.u64();
    s.image_size = r.u64();
    s.channels = r.u64();
    s.samples_per_combo = r.u64();
    s.jitter = r.f64();
    s.seed = r.u64();
    ds.spec = s;
  }
  ds.images = r.tensor();
  ds.exp_labels = r.i32s();
  ds.id_labels = r.i32s();
  r.finish();
  try {
    ds.validate();
  } catch (const InputError& e) {
    throw LoadError(std::string("dataset cache is inconsistent: ") + e.what());
  }
  return ds;
}

}  // namespace disent
