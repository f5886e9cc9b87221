// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#include "sparselab/heatmap.hpp"

#include <cmath>

#include "sparselab/errors.hpp"
#include "sparselab/io.hpp"

namespace sparselab {

std::string_view to_string(HeatmapFormat f) { return f == HeatmapFormat::csv ? "csv" : "pgm"; }

HeatmapFormat parse_heatmap_format(std::string_view name) {
  if (name == "csv") return HeatmapFormat::csv;
  if (name == "pgm") return HeatmapFormat::pgm;
  throw ConfigError("unknown heatmap format '" + std::string(name) + "'");
}

template <std::floating_point T>
std::string render_heatmap(const Tensor<T>& weights, HeatmapFormat format) {
  if (weights.rank() != 2) throw DimensionError("heatmap needs a matrix");
  for (T v : weights.values()) {
    if (!(v >= T(0) && v <= T(1))) throw DimensionError("attention weights must lie in [0, 1]");
  }
  std::string out;
  if (format == HeatmapFormat::pgm) {
    out = "P2\n" + std::to_string(weights.cols()) + " " + std::to_string(weights.rows()) + "\n255\n";
  }
  for (std::size_t i = 0; i < weights.rows(); ++i) {
    for (std::size_t j = 0; j < weights.cols(); ++j) {
      if (j > 0) out += format == HeatmapFormat::pgm ? ' ' : ',';
      const T v = weights(i, j);
      out += format == HeatmapFormat::pgm
                 ? std::to_string(std::lround(255.0 * static_cast<double>(v)))
                 : format_real(v);
    }
    out += '\n';
  }
  return out;
}

template <std::floating_point T>
void export_heatmap(const Tensor<T>& weights, const std::filesystem::path& path,
                    HeatmapFormat format) {
  write_file_atomic(path, render_heatmap(weights, format));
}

template std::string render_heatmap(const Tensor<float>&, HeatmapFormat);
template std::string render_heatmap(const Tensor<double>&, HeatmapFormat);
template void export_heatmap(const Tensor<float>&, const std::filesystem::path&, HeatmapFormat);
template void export_heatmap(const Tensor<double>&, const std::filesystem::path&, HeatmapFormat);

}  // namespace sparselab
