#include "disent/raster.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "disent/error.hpp"

namespace disent::raster {

namespace {

bool has_png_signature(const std::string& bytes) {
  static constexpr unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return bytes.size() >= 8 && std::memcmp(bytes.data(), sig, 8) == 0;
}

Tensor read_png(const std::filesystem::path& path, const std::string& bytes) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw InputError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  const bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
  img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const std::size_t c = gray ? 1 : 3;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw InputError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  Tensor out({img.height, img.width, c});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = buf[i] / 255.0;
  return out;
}

class PnmParser {
 public:
  PnmParser(const std::string& bytes, std::string name) : b_(bytes), name_(std::move(name)) {}

  Tensor parse() {
    if (b_.size() < 2 || b_[0] != 'P') fail("not a netpbm file");
    const char kind = b_[1];
    pos_ = 2;
    if (kind != '2' && kind != '3' && kind != '5' && kind != '6') fail("unsupported netpbm variant");
    const bool ascii = kind == '2' || kind == '3';
    const std::size_t c = (kind == '3' || kind == '6') ? 3 : 1;
    const std::size_t w = number(), h = number(), maxval = number();
    if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) fail("bad header");
    Tensor out({h, w, c});
    if (ascii) {
      for (auto& v : out.values()) v = static_cast<double>(number()) / static_cast<double>(maxval);
    } else {
      ++pos_;  // single whitespace after maxval
      const std::size_t bytes_per = maxval > 255 ? 2 : 1;
      if (b_.size() < pos_ + out.size() * bytes_per) fail("truncated pixel data");
      for (std::size_t i = 0; i < out.size(); ++i) {
        unsigned v = static_cast<unsigned char>(b_[pos_ + i * bytes_per]);
        if (bytes_per == 2) v = (v << 8) | static_cast<unsigned char>(b_[pos_ + i * 2 + 1]);
        out[i] = static_cast<double>(v) / static_cast<double>(maxval);
      }
    }
    for (auto& v : out.values()) v = std::min(v, 1.0);
    return out;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw InputError("cannot decode " + name_ + ": " + msg); }

  void skip_space() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(b_[pos_]))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number() {
    skip_space();
    if (pos_ >= b_.size() || !std::isdigit(static_cast<unsigned char>(b_[pos_]))) fail("expected a number");
    std::size_t v = 0;
    while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(b_[pos_++] - '0');
      if (v > (std::size_t{1} << 31)) fail("number out of range");
    }
    return v;
  }

  const std::string& b_;
  std::string name_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> to_bytes(const Tensor& image) {
  std::vector<unsigned char> out(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    out[i] = static_cast<unsigned char>(std::lround(std::clamp(image[i], 0.0, 1.0) * 255.0));
  }
  return out;
}

void check_image(const Tensor& image, const char* what) {
  if (image.rank() != 3 || (image.dim(2) != 1 && image.dim(2) != 3) || image.empty()) {
    throw InputError(std::string(what) + ": expected [H,W,1|3], got " + shape_str(image.shape()));
  }
}

using Rgb = std::array<double, 3>;

void put_pixel(Tensor& canvas, long x, long y, const Rgb& color) {
  const long h = static_cast<long>(canvas.dim(0)), w = static_cast<long>(canvas.dim(1));
  if (x < 0 || y < 0 || x >= w || y >= h) return;
  double* p = canvas.data() + (static_cast<std::size_t>(y) * canvas.dim(1) + static_cast<std::size_t>(x)) * 3;
  for (int c = 0; c < 3; ++c) p[c] = color[c];
}

void draw_line(Tensor& canvas, double x0, double y0, double x1, double y1, const Rgb& color) {
  const double steps = std::max({std::abs(x1 - x0), std::abs(y1 - y0), 1.0});
  for (int i = 0; i <= static_cast<int>(steps); ++i) {
    const double t = i / steps;
    const long x = std::lround(x0 + t * (x1 - x0)), y = std::lround(y0 + t * (y1 - y0));
    put_pixel(canvas, x, y, color);
    put_pixel(canvas, x, y + 1, color);
  }
}

void fill_rect(Tensor& canvas, long x0, long y0, long x1, long y1, const Rgb& color) {
  for (long y = y0; y < y1; ++y) {
    for (long x = x0; x < x1; ++x) put_pixel(canvas, x, y, color);
  }
}

constexpr std::array<Rgb, 6> kPalette = {{{0.12, 0.47, 0.71},
                                          {0.84, 0.15, 0.16},
                                          {0.17, 0.63, 0.17},
                                          {1.00, 0.50, 0.05},
                                          {0.58, 0.40, 0.74},
                                          {0.55, 0.34, 0.29}}};

constexpr long kMargin = 24;

Tensor blank_canvas(std::size_t width, std::size_t height) {
  Tensor canvas({height, width, 3}, 1.0);
  const Rgb black{0, 0, 0};
  const double h = static_cast<double>(height), w = static_cast<double>(width);
  draw_line(canvas, kMargin, h - kMargin, w - kMargin / 2.0, h - kMargin, black);
  draw_line(canvas, kMargin, kMargin / 2.0, kMargin, h - kMargin, black);
  return canvas;
}

}  // namespace

Tensor read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open image " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (has_png_signature(bytes)) return read_png(path, bytes);
  return PnmParser(bytes, path.string()).parse();
}

void write_png(const std::filesystem::path& path, const Tensor& image) {
  check_image(image, "write_png");
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.dim(1));
  img.height = static_cast<png_uint_32>(image.dim(0));
  img.format = image.dim(2) == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const auto bytes = to_bytes(image);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!png_image_write_to_file(&img, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw Error("cannot write PNG " + path.string() + ": " + img.message);
  }
}

void write_pnm(const std::filesystem::path& path, const Tensor& image) {
  check_image(image, "write_pnm");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << (image.dim(2) == 1 ? "P5" : "P6") << '\n' << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
  const auto bytes = to_bytes(image);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Tensor resize(const Tensor& image, std::size_t side, std::size_t channels) {
  check_image(image, "resize");
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  Tensor out({side, side, channels});
  const double sy = static_cast<double>(h) / static_cast<double>(side);
  const double sx = static_cast<double>(w) / static_cast<double>(side);
  for (std::size_t y = 0; y < side; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < side; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - static_cast<double>(x0);
      std::array<double, 3> px{};
      for (std::size_t k = 0; k < c; ++k) {
        auto at = [&](std::size_t yy, std::size_t xx) { return image[(yy * w + xx) * c + k]; };
        px[k] = (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x1)) + ty * ((1 - tx) * at(y1, x0) + tx * at(y1, x1));
      }
      double* dst = out.data() + (y * side + x) * channels;
      if (channels == c) {
        for (std::size_t k = 0; k < c; ++k) dst[k] = px[k];
      } else if (channels == 1) {
        dst[0] = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
      } else {
        for (std::size_t k = 0; k < channels; ++k) dst[k] = px[0];
      }
    }
  }
  return out;
}

Tensor tile_grid(const std::vector<Tensor>& tiles, std::size_t rows, std::size_t cols, std::size_t pad) {
  if (tiles.size() != rows * cols || tiles.empty()) throw InputError("tile_grid: tile count does not match layout");
  const Shape& s = tiles.front().shape();
  for (const auto& t : tiles) {
    check_image(t, "tile_grid");
    if (t.shape() != s) throw InputError("tile_grid: tiles must share one shape");
  }
  const std::size_t th = s[0], tw = s[1], c = s[2];
  const std::size_t gh = rows * th + (rows + 1) * pad, gw = cols * tw + (cols + 1) * pad;
  Tensor grid({gh, gw, c}, 1.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < cols; ++k) {
      const Tensor& t = tiles[r * cols + k];
      const std::size_t oy = pad + r * (th + pad), ox = pad + k * (tw + pad);
      for (std::size_t y = 0; y < th; ++y) {
        std::copy(t.data() + y * tw * c, t.data() + (y + 1) * tw * c, grid.data() + ((oy + y) * gw + ox) * c);
      }
    }
  }
  return grid;
}

Tensor line_plot(const std::vector<Series>& series, std::size_t width, std::size_t height) {
  Tensor canvas = blank_canvas(width, height);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t longest = 0;
  for (const auto& s : series) {
    longest = std::max(longest, s.values.size());
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (longest < 2 || !std::isfinite(lo)) return canvas;
  if (hi - lo < 1e-12) hi = lo + 1.0;
  const double x_span = static_cast<double>(width) - 1.5 * kMargin;
  const double y_span = static_cast<double>(height) - 1.5 * kMargin;
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& v = series[si].values;
    const Rgb& color = kPalette[si % kPalette.size()];
    auto px = [&](std::size_t i) { return kMargin + x_span * static_cast<double>(i) / static_cast<double>(longest - 1); };
    auto py = [&](double val) { return static_cast<double>(height) - kMargin - y_span * (val - lo) / (hi - lo); };
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (std::isfinite(v[i - 1]) && std::isfinite(v[i])) draw_line(canvas, px(i - 1), py(v[i - 1]), px(i), py(v[i]), color);
    }
    // Legend swatch in the top-right corner.
    const long ly = 6 + static_cast<long>(si) * 8;
    fill_rect(canvas, static_cast<long>(width) - 30, ly, static_cast<long>(width) - 10, ly + 5, color);
  }
  return canvas;
}

Tensor bar_plot(const std::vector<std::string>& labels, const std::vector<Series>& series, double y_max,
                std::size_t width, std::size_t height) {
  Tensor canvas = blank_canvas(width, height);
  if (labels.empty() || series.empty() || !(y_max > 0)) return canvas;
  const double group_w = (static_cast<double>(width) - 1.5 * kMargin) / static_cast<double>(labels.size());
  const double bar_w = group_w * 0.8 / static_cast<double>(series.size());
  const double y_span = static_cast<double>(height) - 1.5 * kMargin;
  for (std::size_t g = 0; g < labels.size(); ++g) {
    for (std::size_t si = 0; si < series.size(); ++si) {
      if (g >= series[si].values.size()) continue;
      const double v = std::clamp(series[si].values[g], 0.0, y_max);
      const double x0 = kMargin + g * group_w + group_w * 0.1 + si * bar_w;
      const double top = static_cast<double>(height) - kMargin - y_span * v / y_max;
      fill_rect(canvas, std::lround(x0), std::lround(top), std::lround(x0 + bar_w - 1),
                static_cast<long>(height) - kMargin, kPalette[si % kPalette.size()]);
    }
  }
  return canvas;
}

}  // namespace disent::raster
