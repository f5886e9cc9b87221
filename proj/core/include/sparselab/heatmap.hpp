// Copyright 2026 The sparselab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "sparselab/tensor.hpp"

namespace sparselab {

enum class HeatmapFormat { csv, pgm };

std::string_view to_string(HeatmapFormat f);
HeatmapFormat parse_heatmap_format(std::string_view name);

/// Renders an attention matrix (rows = query positions). PGM is plain P2
/// with maxval 255 and pixel round(255 * A_ij); CSV has one decimal row per
/// query. Throws DimensionError unless every entry lies in [0, 1].
template <std::floating_point T>
std::string render_heatmap(const Tensor<T>& weights, HeatmapFormat format);

/// render_heatmap written atomically to `path`.
template <std::floating_point T>
void export_heatmap(const Tensor<T>& weights, const std::filesystem::path& path,
                    HeatmapFormat format);

}  // namespace sparselab
