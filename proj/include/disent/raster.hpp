#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "disent/tensor.hpp"

namespace disent::raster {

/// Decodes a PNG or netpbm (P2/P3/P5/P6) file into [H,W,C] with values in [0,1].
/// C is 1 for grayscale sources and 3 otherwise (alpha is dropped).
Tensor read_image(const std::filesystem::path& path);

/// Writes an [H,W,C] image (C in {1,3}) as PNG; values are clamped to [0,1].
void write_png(const std::filesystem::path& path, const Tensor& image);
/// Binary PGM/PPM writer.
void write_pnm(const std::filesystem::path& path, const Tensor& image);

/// Bilinear resize to side x side and conversion to `channels` (luma or replicate).
Tensor resize(const Tensor& image, std::size_t side, std::size_t channels);

/// Lays out equally sized [H,W,C] tiles into a rows x cols grid with `pad` pixel gutters.
Tensor tile_grid(const std::vector<Tensor>& tiles, std::size_t rows, std::size_t cols, std::size_t pad = 2);

struct Series {
  std::string name;
  std::vector<double> values;
};

/// Renders line series on a white RGB canvas with axes; each series gets its own color.
Tensor line_plot(const std::vector<Series>& series, std::size_t width = 480, std::size_t height = 320);

/// Grouped bar chart: one group per label, one bar per series entry.
Tensor bar_plot(const std::vector<std::string>& labels, const std::vector<Series>& series, double y_max,
                std::size_t width = 480, std::size_t height = 320);

}  // namespace disent::raster
