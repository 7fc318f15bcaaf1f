#include "lcz/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "lcz/error.hpp"
#include "lcz/parallel.hpp"

namespace lcz::raster {

void GridSpec::validate() const {
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) throw UsageError("grid: cell_size must be positive");
  if (width < 1 || height < 1) throw UsageError("grid: width and height must be >= 1");
  if (!std::isfinite(origin_x) || !std::isfinite(origin_y)) throw UsageError("grid: origin must be finite");
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

namespace {

bool point_less(const io::PointRecord& a, const io::PointRecord& b) {
  return std::tie(a.x, a.y, a.z, a.intensity, a.return_number, a.num_returns) <
         std::tie(b.x, b.y, b.z, b.intensity, b.return_number, b.num_returns);
}

void cell_statistics(std::span<const io::PointRecord> pts, double ground, RasterStack& out, std::size_t row,
                     std::size_t col) {
  if (pts.empty()) return;  // stack is zero-initialized
  const double n = static_cast<double>(pts.size());
  double zsum = 0.0, isum = 0.0, rsum = 0.0;
  double zmin = pts[0].z, zmax = pts[0].z, imin = pts[0].intensity, imax = pts[0].intensity;
  std::size_t multi = 0, last = 0;
  for (const auto& p : pts) {
    zsum += p.z;
    isum += p.intensity;
    rsum += p.return_number;
    zmin = std::min(zmin, p.z);
    zmax = std::max(zmax, p.z);
    imin = std::min(imin, p.intensity);
    imax = std::max(imax, p.intensity);
    if (p.num_returns > 1) ++multi;
    if (p.return_number == p.num_returns) ++last;
  }
  const double zmean = zsum / n;
  const double imean = isum / n;
  double zvar = 0.0, ivar = 0.0;
  for (const auto& p : pts) {
    zvar += (p.z - zmean) * (p.z - zmean);
    ivar += (p.intensity - imean) * (p.intensity - imean);
  }
  out.at(kZMin, row, col) = zmin - ground;
  out.at(kZMax, row, col) = zmax - ground;
  // Clamp against rounding so z_min <= z_mean <= z_max holds exactly.
  out.at(kZMean, row, col) = std::clamp(zmean, zmin, zmax) - ground;
  out.at(kZStd, row, col) = std::sqrt(zvar / n);
  out.at(kZRange, row, col) = zmax - zmin;
  out.at(kIMean, row, col) = std::clamp(imean, imin, imax);
  out.at(kIStd, row, col) = std::sqrt(ivar / n);
  out.at(kIMin, row, col) = imin;
  out.at(kIMax, row, col) = imax;
  out.at(kPointCount, row, col) = n;
  out.at(kMeanReturnNumber, row, col) = rsum / n;
  out.at(kMultiReturnFraction, row, col) = static_cast<double>(multi) / n;
  out.at(kLastReturnFraction, row, col) = static_cast<double>(last) / n;
}

}  // namespace

RasterizeResult rasterize(const io::PointCloud& cloud, const GridSpec& spec, unsigned threads) {
  spec.validate();
  RasterizeResult result{RasterStack(spec), 0, 0.0};

  // Cell index per point, or cells() for points outside the extent.
  const std::size_t outside = spec.cells();
  std::vector<std::size_t> cell_of(cloud.size(), outside);
  std::vector<std::size_t> counts(spec.cells() + 1, 0);
  std::vector<double> inside_z;
  inside_z.reserve(cloud.size());
  for (std::size_t k = 0; k < cloud.size(); ++k) {
    const auto& p = cloud[k];
    const double fx = std::floor((p.x - spec.origin_x) / spec.cell_size);
    const double fy = std::floor((p.y - spec.origin_y) / spec.cell_size);
    if (!(fx >= 0.0 && fy >= 0.0 && fx < static_cast<double>(spec.width) && fy < static_cast<double>(spec.height))) {
      ++result.points_outside;
      continue;
    }
    const auto col = static_cast<std::size_t>(fx);
    const auto row = spec.height - 1 - static_cast<std::size_t>(fy);
    cell_of[k] = row * spec.width + col;
    ++counts[cell_of[k]];
    inside_z.push_back(p.z);
  }
  result.ground_z = percentile(std::move(inside_z), 0.02);

  // Bucket points by cell (counting sort), then order each bucket canonically.
  std::vector<std::size_t> start(spec.cells() + 1, 0);
  for (std::size_t c = 0; c < spec.cells(); ++c) start[c + 1] = start[c] + counts[c];
  std::vector<io::PointRecord> bucketed(start.back());
  {
    auto cursor = start;
    for (std::size_t k = 0; k < cloud.size(); ++k)
      if (cell_of[k] != outside) bucketed[cursor[cell_of[k]]++] = cloud[k];
  }

  const double ground = result.ground_z;
  auto& stack = result.stack;
  parallel_for(
      spec.height,
      [&](std::size_t row) {
        for (std::size_t col = 0; col < spec.width; ++col) {
          const std::size_t c = row * spec.width + col;
          auto first = bucketed.begin() + static_cast<std::ptrdiff_t>(start[c]);
          auto last = bucketed.begin() + static_cast<std::ptrdiff_t>(start[c + 1]);
          std::sort(first, last, point_less);
          cell_statistics({bucketed.data() + start[c], start[c + 1] - start[c]}, ground, stack, row, col);
        }
      },
      threads);
  return result;
}

NormStats compute_norm_stats(std::span<const RasterStack> stacks) {
  if (stacks.empty()) throw UsageError("compute_norm_stats: empty collection");
  NormStats s;
  for (std::size_t c = 0; c < kChannelCount; ++c) {
    // Welford, in stack order then cell order.
    double mean = 0.0, m2 = 0.0, n = 0.0;
    for (const auto& st : stacks) {
      if (st.values.size() != kChannelCount * st.spec.cells()) throw UsageError("compute_norm_stats: malformed stack");
      for (double v : st.channel(c)) {
        n += 1.0;
        const double d = v - mean;
        mean += d / n;
        m2 += d * (v - mean);
      }
    }
    s.mean[c] = mean;
    s.std[c] = std::max(kStdFloor, std::sqrt(m2 / n));
  }
  return s;
}

RasterStack normalize(const RasterStack& stack, const NormStats& stats) {
  RasterStack out = stack;
  for (std::size_t c = 0; c < kChannelCount; ++c)
    for (double& v : out.channel(c)) v = (v - stats.mean[c]) / stats.std[c];
  return out;
}

RasterStack denormalize(const RasterStack& stack, const NormStats& stats) {
  RasterStack out = stack;
  for (std::size_t c = 0; c < kChannelCount; ++c)
    for (double& v : out.channel(c)) v = v * stats.std[c] + stats.mean[c];
  return out;
}

std::vector<io::NamedTensor> to_tensors(const RasterStack& stack) {
  const auto& s = stack.spec;
  std::vector<io::NamedTensor> out;
  // Geometry is split into an f32 value plus its f32 residual so projected
  // coordinates survive the f32 container.
  auto hi = [](double v) { return static_cast<float>(v); };
  auto lo = [](double v) { return static_cast<float>(v - static_cast<double>(static_cast<float>(v))); };
  out.push_back({"grid/origin", {2}, {hi(s.origin_x), hi(s.origin_y)}});
  out.push_back({"grid/origin_residual", {2}, {lo(s.origin_x), lo(s.origin_y)}});
  out.push_back({"grid/cell_size", {1}, {hi(s.cell_size)}});
  out.push_back({"grid/cell_size_residual", {1}, {lo(s.cell_size)}});
  for (std::size_t c = 0; c < kChannelCount; ++c) {
    io::NamedTensor t{"channel/" + std::string(kChannelNames[c]),
                      {static_cast<std::uint32_t>(s.height), static_cast<std::uint32_t>(s.width)},
                      {}};
    t.values.reserve(s.cells());
    for (double v : stack.channel(c)) t.values.push_back(static_cast<float>(v));
    out.push_back(std::move(t));
  }
  return out;
}

RasterStack from_tensors(const std::vector<io::NamedTensor>& tensors) {
  const auto& origin = io::find_tensor(tensors, "grid/origin");
  const auto& cell = io::find_tensor(tensors, "grid/cell_size");
  if (origin.values.size() != 2 || cell.values.size() != 1) throw FormatError("raster stack: malformed grid tensors");
  const auto& first = io::find_tensor(tensors, "channel/" + std::string(kChannelNames[0]));
  if (first.dims.size() != 2) throw FormatError("raster stack: channels must be rank 2");
  GridSpec spec{origin.values[0], origin.values[1], cell.values[0], first.dims[1], first.dims[0]};
  const auto& origin_lo = io::find_tensor(tensors, "grid/origin_residual");
  const auto& cell_lo = io::find_tensor(tensors, "grid/cell_size_residual");
  if (origin_lo.values.size() != 2 || cell_lo.values.size() != 1) throw FormatError("raster stack: malformed grid tensors");
  spec.origin_x += origin_lo.values[0];
  spec.origin_y += origin_lo.values[1];
  spec.cell_size += cell_lo.values[0];
  spec.validate();
  RasterStack stack(spec);
  for (std::size_t c = 0; c < kChannelCount; ++c) {
    const auto& t = io::find_tensor(tensors, "channel/" + std::string(kChannelNames[c]));
    if (t.dims != first.dims) throw FormatError("raster stack: channel '" + t.name + "' has inconsistent dims");
    std::copy(t.values.begin(), t.values.end(), stack.channel(c).begin());
  }
  return stack;
}

std::vector<io::NamedTensor> to_tensors(const NormStats& stats) {
  io::NamedTensor mean{"norm/mean", {kChannelCount}, {}};
  io::NamedTensor std{"norm/std", {kChannelCount}, {}};
  for (std::size_t c = 0; c < kChannelCount; ++c) {
    mean.values.push_back(static_cast<float>(stats.mean[c]));
    std.values.push_back(static_cast<float>(stats.std[c]));
  }
  return {mean, std};
}

NormStats norm_stats_from_tensors(const std::vector<io::NamedTensor>& tensors) {
  const auto& mean = io::find_tensor(tensors, "norm/mean");
  const auto& std = io::find_tensor(tensors, "norm/std");
  if (mean.values.size() != kChannelCount || std.values.size() != kChannelCount)
    throw FormatError("norm stats: expected 13 channels");
  NormStats s;
  for (std::size_t c = 0; c < kChannelCount; ++c) {
    s.mean[c] = mean.values[c];
    s.std[c] = std::max(kStdFloor, static_cast<double>(std.values[c]));
  }
  return s;
}

io::Raster2D channel_raster(const RasterStack& stack, std::size_t channel) {
  if (channel >= kChannelCount) throw UsageError("channel index out of range");
  const auto& s = stack.spec;
  io::Raster2D r;
  r.width = s.width;
  r.height = s.height;
  r.cell_size = s.cell_size;
  r.origin_x = s.origin_x;
  r.origin_y = s.origin_y;
  const auto ch = stack.channel(channel);
  r.values.assign(ch.begin(), ch.end());
  return r;
}

}  // namespace lcz::raster
