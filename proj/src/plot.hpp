#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "core_types.hpp"

namespace rdi {

// Minimal PNG line plot: axes, series polyline, digit-only tick labels.
void plot_series(const std::filesystem::path& out_png, const std::string& title,
                 const std::vector<double>& xs, const std::vector<double>& ys,
                 int width = 640, int height = 360);

// Renders every numeric column of a metrics CSV (first column = x) into
// <out_dir>/plot_<column>.png. Returns the written files.
std::vector<std::filesystem::path> plot_csv(const std::filesystem::path& csv,
                                            const std::filesystem::path& out_dir);

// Side-by-side grid (rows of frames); frames must share dimensions.
void write_image_grid(const std::filesystem::path& out_png,
                      const std::vector<std::vector<RgbFrame>>& rows);

}  // namespace rdi
