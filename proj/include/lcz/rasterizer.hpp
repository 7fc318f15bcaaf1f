#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "lcz/io.hpp"

namespace lcz::raster {

inline constexpr std::size_t kChannelCount = 13;

enum Channel : std::size_t {
  kZMin,
  kZMax,
  kZMean,
  kZStd,
  kZRange,
  kIMean,
  kIStd,
  kIMin,
  kIMax,
  kPointCount,
  kMeanReturnNumber,
  kMultiReturnFraction,
  kLastReturnFraction,
};

inline constexpr std::array<std::string_view, kChannelCount> kChannelNames = {
    "z_min", "z_max", "z_mean", "z_std", "z_range", "i_mean", "i_std", "i_min", "i_max",
    "point_count", "mean_return_number", "multi_return_fraction", "last_return_fraction"};

/// Grid geometry. (origin_x, origin_y) is the lower-left corner; row 0 is
/// the top (northernmost) row, as in ASCII Grid files.
struct GridSpec {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double cell_size = 0.3;
  std::size_t width = 128;
  std::size_t height = 128;

  void validate() const;
  std::size_t cells() const { return width * height; }
  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// The 13-channel statistics stack, channel-major: value(c, row, col) is at
/// values[(c * height + row) * width + col].
struct RasterStack {
  GridSpec spec;
  std::vector<double> values;

  RasterStack() = default;
  explicit RasterStack(const GridSpec& s) : spec(s), values(kChannelCount * s.cells(), 0.0) {}

  double& at(std::size_t c, std::size_t row, std::size_t col) { return values[(c * spec.height + row) * spec.width + col]; }
  double at(std::size_t c, std::size_t row, std::size_t col) const {
    return values[(c * spec.height + row) * spec.width + col];
  }
  std::span<double> channel(std::size_t c) { return {values.data() + c * spec.cells(), spec.cells()}; }
  std::span<const double> channel(std::size_t c) const { return {values.data() + c * spec.cells(), spec.cells()}; }

  friend bool operator==(const RasterStack&, const RasterStack&) = default;
};

struct RasterizeResult {
  RasterStack stack;
  std::size_t points_outside = 0;
  double ground_z = 0.0;
};

/// Bins points into cells and computes the canonical statistics. Elevation
/// channels are relative to the scene's 2nd-percentile z; empty cells are 0.
/// Output is bit-identical for any point order and any worker count.
RasterizeResult rasterize(const io::PointCloud& cloud, const GridSpec& spec, unsigned threads = 1);

/// Linear-interpolated percentile (q in [0, 1]) of the given values.
double percentile(std::vector<double> values, double q);

inline constexpr double kStdFloor = 1e-6;

struct NormStats {
  std::array<double, kChannelCount> mean{};
  std::array<double, kChannelCount> std{};
};

NormStats compute_norm_stats(std::span<const RasterStack> stacks);
RasterStack normalize(const RasterStack& stack, const NormStats& stats);
RasterStack denormalize(const RasterStack& stack, const NormStats& stats);

// Persistence in the LCZM container.
std::vector<io::NamedTensor> to_tensors(const RasterStack& stack);
RasterStack from_tensors(const std::vector<io::NamedTensor>& tensors);
std::vector<io::NamedTensor> to_tensors(const NormStats& stats);
NormStats norm_stats_from_tensors(const std::vector<io::NamedTensor>& tensors);

/// One channel as an ASCII-Grid raster (nodata unused).
io::Raster2D channel_raster(const RasterStack& stack, std::size_t channel);

}  // namespace lcz::raster
