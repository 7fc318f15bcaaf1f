#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace lcz::io {

struct PointRecord {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;
  int return_number = 1;
  int num_returns = 1;

  friend bool operator==(const PointRecord&, const PointRecord&) = default;
};

using PointCloud = std::vector<PointRecord>;

/// Whitespace-separated "x y z intensity return_number num_returns" per line.
/// '#' starts a comment line; blank lines are skipped.
PointCloud parse_point_cloud(std::istream& in);
void write_point_cloud(std::ostream& out, const PointCloud& cloud);
PointCloud read_point_cloud_file(const std::filesystem::path& path);
void write_point_cloud_file(const std::filesystem::path& path, const PointCloud& cloud);

struct Raster2D {
  std::size_t width = 0;
  std::size_t height = 0;
  double cell_size = 1.0;
  double origin_x = 0.0;  // lower-left corner
  double origin_y = 0.0;
  double nodata = -9999.0;
  std::vector<double> values;  // row-major, top row first

  double at(std::size_t row, std::size_t col) const { return values[row * width + col]; }
  bool is_nodata(std::size_t row, std::size_t col) const { return at(row, col) == nodata; }

  friend bool operator==(const Raster2D&, const Raster2D&) = default;
};

/// ESRI ASCII Grid. Header keys are case-insensitive; xllcenter/yllcenter
/// are accepted and converted to corner coordinates.
Raster2D import_ascii_grid(std::istream& in);
/// Values are written in shortest round-trip form so import(export(r)) == r.
void export_ascii_grid(std::ostream& out, const Raster2D& raster);

/// A named, row-major tensor of arbitrary rank as stored in an LCZM file.
struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t element_count() const;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

inline constexpr char kModelMagic[4] = {'L', 'C', 'Z', 'M'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

/// LCZM layout, all integers and reals little-endian:
///   "LCZM" | u32 version | u32 count | count × (u16 name_len, name bytes,
///   u8 rank, rank × u32 dims, product(dims) × f32 values)
void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(std::istream& in);
void save_model(const std::vector<NamedTensor>& tensors, const std::filesystem::path& path);
std::vector<NamedTensor> load_model(const std::filesystem::path& path);

/// Lookup by name; throws FormatError naming the missing tensor.
const NamedTensor& find_tensor(const std::vector<NamedTensor>& tensors, std::string_view name);

struct ManifestEntry {
  std::string scene_id;
  std::string raster_path;
  double temperature_kelvin = 0.0;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct SceneManifest {
  std::vector<ManifestEntry> entries;
  friend bool operator==(const SceneManifest&, const SceneManifest&) = default;
};

/// CSV with header "scene_id,raster_path,temperature_kelvin".
SceneManifest parse_manifest(std::istream& in);
void write_manifest(std::ostream& out, const SceneManifest& manifest);
SceneManifest read_manifest_file(const std::filesystem::path& path);
void write_manifest_file(const std::filesystem::path& path, const SceneManifest& manifest);

/// Minimal CSV: comma-separated, no quoting. Used for the small index files
/// the pipeline writes between stages.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
};
CsvTable read_csv_file(const std::filesystem::path& path);
void write_csv_file(const std::filesystem::path& path, const CsvTable& table);

/// Shortest round-trippable decimal form of a double.
std::string format_real(double v);
/// Strict full-token parse; throws ParseError.
double parse_real(std::string_view token, std::size_t line = 0);

}  // namespace lcz::io
