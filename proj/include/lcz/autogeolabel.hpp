#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "lcz/rasterizer.hpp"

namespace lcz::label {

enum class Label : std::uint8_t { Background = 0, Building = 1, Vegetation = 2 };

/// Thresholds in physical units (de-normalized channels).
struct LabelRules {
  double veg_zstd_min = 0.5;      // m
  double veg_multiret_min = 0.3;  // fraction
  double bld_height_min = 3.0;    // m above ground
  double bld_zstd_max = 0.4;      // m

  /// Throws UsageError on negative thresholds or bld_zstd_max >= veg_zstd_min.
  void validate() const;
};

struct SegmentationMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Label> labels;  // row-major

  Label at(std::size_t row, std::size_t col) const { return labels[row * width + col]; }
  /// Cell counts indexed by Label value.
  std::array<std::size_t, 3> counts() const;
};

/// vegetation if z_std ≥ veg_zstd_min and multi_return_fraction ≥ veg_multiret_min;
/// else building if z_mean ≥ bld_height_min and z_std ≤ bld_zstd_max;
/// else background.
Label classify_cell(double z_std, double multi_return_fraction, double z_mean, const LabelRules& rules);

SegmentationMap segment(const raster::RasterStack& stack, const LabelRules& rules);

double vegetation_fraction(const SegmentationMap& map);

/// Mean fraction per distinct Δt, ascending in Δt. Throws UsageError when empty.
std::vector<std::pair<double, double>> aggregate_fractions(std::span<const std::pair<double, double>> tuples);

/// Binary PGM (P5), 0 / 128 / 255 for background / building / vegetation.
void write_pgm(std::ostream& out, const SegmentationMap& map);

/// Header line plus one row of label counts.
void write_counts_csv(std::ostream& out, const SegmentationMap& map);

}  // namespace lcz::label
