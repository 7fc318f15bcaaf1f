#include "lcz/autogeolabel.hpp"

#include <map>
#include <ostream>

#include "lcz/error.hpp"

namespace lcz::label {

void LabelRules::validate() const {
  if (veg_zstd_min < 0.0 || veg_multiret_min < 0.0 || bld_height_min < 0.0 || bld_zstd_max < 0.0)
    throw UsageError("label rules: thresholds must be >= 0");
  if (!(bld_zstd_max < veg_zstd_min)) throw UsageError("label rules: bld_zstd_max must be below veg_zstd_min");
}

std::array<std::size_t, 3> SegmentationMap::counts() const {
  std::array<std::size_t, 3> c{};
  for (auto l : labels) ++c[static_cast<std::size_t>(l)];
  return c;
}

Label classify_cell(double z_std, double multi_return_fraction, double z_mean, const LabelRules& r) {
  if (z_std >= r.veg_zstd_min && multi_return_fraction >= r.veg_multiret_min) return Label::Vegetation;
  if (z_mean >= r.bld_height_min && z_std <= r.bld_zstd_max) return Label::Building;
  return Label::Background;
}

SegmentationMap segment(const raster::RasterStack& stack, const LabelRules& rules) {
  rules.validate();
  const auto& spec = stack.spec;
  if (stack.values.size() != raster::kChannelCount * spec.cells())
    throw UsageError("segment: stack does not carry the 13 canonical channels");
  SegmentationMap map{spec.width, spec.height, std::vector<Label>(spec.cells(), Label::Background)};
  for (std::size_t r = 0; r < spec.height; ++r)
    for (std::size_t c = 0; c < spec.width; ++c)
      map.labels[r * spec.width + c] =
          classify_cell(stack.at(raster::kZStd, r, c), stack.at(raster::kMultiReturnFraction, r, c),
                        stack.at(raster::kZMean, r, c), rules);
  return map;
}

double vegetation_fraction(const SegmentationMap& map) {
  if (map.labels.empty()) return 0.0;
  return static_cast<double>(map.counts()[static_cast<std::size_t>(Label::Vegetation)]) /
         static_cast<double>(map.labels.size());
}

std::vector<std::pair<double, double>> aggregate_fractions(std::span<const std::pair<double, double>> tuples) {
  if (tuples.empty()) throw UsageError("aggregate_fractions: no tuples");
  std::map<double, std::pair<double, std::size_t>> groups;
  for (const auto& [dt, v] : tuples) {
    auto& g = groups[dt == 0.0 ? 0.0 : dt];  // fold -0 into 0
    g.first += v;
    ++g.second;
  }
  std::vector<std::pair<double, double>> out;
  out.reserve(groups.size());
  for (const auto& [dt, g] : groups) out.emplace_back(dt, g.first / static_cast<double>(g.second));
  return out;
}

void write_pgm(std::ostream& out, const SegmentationMap& map) {
  out << "P5\n" << map.width << ' ' << map.height << "\n255\n";
  for (auto l : map.labels) {
    const unsigned char v = l == Label::Vegetation ? 255 : (l == Label::Building ? 128 : 0);
    out.put(static_cast<char>(v));
  }
}

void write_counts_csv(std::ostream& out, const SegmentationMap& map) {
  const auto c = map.counts();
  out << "background,building,vegetation\n" << c[0] << ',' << c[1] << ',' << c[2] << '\n';
}

}  // namespace lcz::label
