#include "lcz/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "lcz/error.hpp"

namespace lcz::io {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string> split_commas(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_blank_or_comment(std::string_view line) {
  const auto t = trim(line);
  return t.empty() || t.front() == '#';
}

long long parse_integer(std::string_view token, std::size_t line) {
  long long v = 0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ParseError("expected integer, got '" + std::string(token) + "'", line);
  return v;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream f(path, mode);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  return f;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, mode | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  return f;
}

// Little-endian primitives.
template <class T>
void put_le(std::ostream& out, T v) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(v);
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((u >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

template <class T>
T get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw IoError(std::string("truncated LCZM file while reading ") + what);
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(bytes[i]) << (8 * i);
  return static_cast<T>(u);
}

}  // namespace

std::string format_real(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

double parse_real(std::string_view token, std::size_t line) {
  double v = 0.0;
  const auto* begin = token.data();
  const auto* end = begin + token.size();
  if (begin != end && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end || begin == end)
    throw ParseError("expected number, got '" + std::string(token) + "'", line);
  return v;
}

// ---------------------------------------------------------------- points

PointCloud parse_point_cloud(std::istream& in) {
  PointCloud cloud;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank_or_comment(line)) continue;
    const auto tok = split_ws(line);
    if (tok.size() != 6) throw ParseError("expected 6 fields, got " + std::to_string(tok.size()), lineno);
    PointRecord p;
    p.x = parse_real(tok[0], lineno);
    p.y = parse_real(tok[1], lineno);
    p.z = parse_real(tok[2], lineno);
    p.intensity = parse_real(tok[3], lineno);
    const auto rn = parse_integer(tok[4], lineno);
    const auto nr = parse_integer(tok[5], lineno);
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
      throw ParseError("non-finite coordinate", lineno);
    if (!(p.intensity >= 0.0 && p.intensity <= 65535.0)) throw ParseError("intensity outside [0, 65535]", lineno);
    if (rn < 1) throw ParseError("return_number must be >= 1", lineno);
    if (rn > nr) throw ParseError("return_number exceeds num_returns", lineno);
    if (nr > 255) throw ParseError("num_returns exceeds 255", lineno);
    p.return_number = static_cast<int>(rn);
    p.num_returns = static_cast<int>(nr);
    cloud.push_back(p);
  }
  return cloud;
}

void write_point_cloud(std::ostream& out, const PointCloud& cloud) {
  for (const auto& p : cloud) {
    out << format_real(p.x) << ' ' << format_real(p.y) << ' ' << format_real(p.z) << ' ' << format_real(p.intensity)
        << ' ' << p.return_number << ' ' << p.num_returns << '\n';
  }
}

PointCloud read_point_cloud_file(const std::filesystem::path& path) {
  auto f = open_in(path);
  return parse_point_cloud(f);
}

void write_point_cloud_file(const std::filesystem::path& path, const PointCloud& cloud) {
  auto f = open_out(path);
  write_point_cloud(f, cloud);
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------- ascii grid

Raster2D import_ascii_grid(std::istream& in) {
  static const std::array<std::string, 6> required = {"ncols", "nrows", "xllcorner", "yllcorner", "cellsize",
                                                      "nodata_value"};
  std::map<std::string, double> header;
  std::string line;
  std::size_t lineno = 0;
  bool center = false;
  std::vector<std::string_view> first_data;
  std::string first_data_line;

  while (std::getline(in, line)) {
    ++lineno;
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    const bool keyword = std::isalpha(static_cast<unsigned char>(tok[0].front())) != 0;
    if (!keyword) {
      first_data_line = line;
      break;
    }
    if (tok.size() != 2) throw ParseError("header line must be 'key value'", lineno);
    auto key = lower(tok[0]);
    if (key == "xllcenter" || key == "yllcenter") {
      center = true;
      key = key.substr(0, 3) + "corner";
    }
    if (std::find(required.begin(), required.end(), key) == required.end())
      throw ParseError("unknown header key '" + std::string(tok[0]) + "'", lineno);
    header[key] = parse_real(tok[1], lineno);
  }
  for (const auto& key : required) {
    if (!header.count(key)) throw ParseError("missing header key '" + key + "'");
  }

  Raster2D r;
  const double ncols = header["ncols"];
  const double nrows = header["nrows"];
  if (!(ncols >= 1 && nrows >= 1 && ncols == std::floor(ncols) && nrows == std::floor(nrows) && ncols * nrows <= 1e9))
    throw ParseError("ncols/nrows must be positive integers");
  r.width = static_cast<std::size_t>(ncols);
  r.height = static_cast<std::size_t>(nrows);
  r.cell_size = header["cellsize"];
  if (!(r.cell_size > 0.0) || !std::isfinite(r.cell_size)) throw ParseError("cellsize must be positive");
  r.origin_x = header["xllcorner"];
  r.origin_y = header["yllcorner"];
  if (center) {
    r.origin_x -= 0.5 * r.cell_size;
    r.origin_y -= 0.5 * r.cell_size;
  }
  r.nodata = header["nodata_value"];
  r.values.reserve(r.width * r.height);

  std::size_t row = 0;
  auto consume = [&](const std::string& text) {
    const auto tok = split_ws(text);
    if (tok.empty()) return;
    if (row >= r.height) throw ParseError("more than nrows data rows", lineno);
    if (tok.size() != r.width)
      throw ParseError("row " + std::to_string(row + 1) + " has " + std::to_string(tok.size()) + " values, expected " +
                           std::to_string(r.width),
                       lineno);
    for (auto t : tok) r.values.push_back(parse_real(t, lineno));
    ++row;
  };
  if (!first_data_line.empty()) consume(first_data_line);
  while (std::getline(in, line)) {
    ++lineno;
    consume(line);
  }
  if (row != r.height)
    throw ParseError("expected " + std::to_string(r.height) + " data rows, got " + std::to_string(row));
  return r;
}

void export_ascii_grid(std::ostream& out, const Raster2D& r) {
  if (r.values.size() != r.width * r.height) throw UsageError("export_ascii_grid: value count does not match shape");
  out << "ncols " << r.width << '\n'
      << "nrows " << r.height << '\n'
      << "xllcorner " << format_real(r.origin_x) << '\n'
      << "yllcorner " << format_real(r.origin_y) << '\n'
      << "cellsize " << format_real(r.cell_size) << '\n'
      << "NODATA_value " << format_real(r.nodata) << '\n';
  for (std::size_t i = 0; i < r.height; ++i) {
    for (std::size_t j = 0; j < r.width; ++j) {
      if (j) out << ' ';
      out << format_real(r.values[i * r.width + j]);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------- LCZM

std::size_t NamedTensor::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  out.write(kModelMagic, 4);
  put_le<std::uint32_t>(out, kModelFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 0xffff) throw UsageError("tensor name too long: " + t.name.substr(0, 32));
    if (t.dims.size() > 0xff) throw UsageError("tensor rank exceeds 255: " + t.name);
    if (t.values.size() != t.element_count()) throw UsageError("tensor '" + t.name + "': value count does not match dims");
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) put_le<std::uint32_t>(out, d);
    for (float v : t.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
}

std::vector<NamedTensor> read_tensors(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kModelMagic, 4) != 0) throw FormatError("not an LCZM file (bad magic)");
  const auto version = get_le<std::uint32_t>(in, "version");
  if (version != kModelFormatVersion) throw FormatError("unsupported LCZM version " + std::to_string(version));
  const auto count = get_le<std::uint32_t>(in, "tensor count");
  std::vector<NamedTensor> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    const auto len = get_le<std::uint16_t>(in, "name length");
    t.name.resize(len);
    in.read(t.name.data(), len);
    if (in.gcount() != len) throw IoError("truncated LCZM file while reading tensor name");
    const auto rank = get_le<std::uint8_t>(in, "rank");
    std::uint64_t n = 1;
    for (unsigned i = 0; i < rank; ++i) {
      t.dims.push_back(get_le<std::uint32_t>(in, "dims"));
      n *= t.dims.back();
      if (n > (std::uint64_t{1} << 32)) throw FormatError("tensor '" + t.name + "' is implausibly large");
    }
    // Read in bounded chunks so a corrupt header cannot force a huge allocation.
    constexpr std::uint64_t chunk = 1 << 16;
    for (std::uint64_t done = 0; done < n;) {
      const auto m = std::min(chunk, n - done);
      t.values.reserve(t.values.size() + m);
      for (std::uint64_t i = 0; i < m; ++i) t.values.push_back(std::bit_cast<float>(get_le<std::uint32_t>(in, "payload")));
      done += m;
    }
    out.push_back(std::move(t));
  }
  return out;
}

void save_model(const std::vector<NamedTensor>& tensors, const std::filesystem::path& path) {
  auto f = open_out(path, std::ios::out | std::ios::binary);
  write_tensors(f, tensors);
  f.flush();
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<NamedTensor> load_model(const std::filesystem::path& path) {
  auto f = open_in(path, std::ios::in | std::ios::binary);
  return read_tensors(f);
}

const NamedTensor& find_tensor(const std::vector<NamedTensor>& tensors, std::string_view name) {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw FormatError("missing tensor '" + std::string(name) + "'");
}

// ---------------------------------------------------------------- manifest / csv

SceneManifest parse_manifest(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  SceneManifest m;
  std::unordered_set<std::string> ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (!have_header) {
      if (trim(line) != "scene_id,raster_path,temperature_kelvin")
        throw ParseError("manifest header must be 'scene_id,raster_path,temperature_kelvin'", lineno);
      have_header = true;
      continue;
    }
    const auto f = split_commas(line);
    if (f.size() != 3) throw ParseError("expected 3 fields, got " + std::to_string(f.size()), lineno);
    ManifestEntry e{std::string(trim(f[0])), std::string(trim(f[1])), parse_real(trim(f[2]), lineno)};
    if (e.scene_id.empty()) throw ParseError("empty scene_id", lineno);
    if (!std::isfinite(e.temperature_kelvin)) throw ParseError("temperature must be finite", lineno);
    if (!ids.insert(e.scene_id).second) throw ParseError("duplicate scene_id '" + e.scene_id + "'", lineno);
    m.entries.push_back(std::move(e));
  }
  if (!have_header) throw ParseError("manifest is missing its header");
  return m;
}

void write_manifest(std::ostream& out, const SceneManifest& m) {
  out << "scene_id,raster_path,temperature_kelvin\n";
  for (const auto& e : m.entries) out << e.scene_id << ',' << e.raster_path << ',' << format_real(e.temperature_kelvin) << '\n';
}

SceneManifest read_manifest_file(const std::filesystem::path& path) {
  auto f = open_in(path);
  return parse_manifest(f);
}

void write_manifest_file(const std::filesystem::path& path, const SceneManifest& manifest) {
  auto f = open_out(path);
  write_manifest(f, manifest);
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw ParseError("missing CSV column '" + std::string(name) + "'");
}

CsvTable read_csv_file(const std::filesystem::path& path) {
  auto f = open_in(path);
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_commas(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw ParseError(path.filename().string() + ": expected " + std::to_string(t.header.size()) + " fields", lineno);
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) throw ParseError(path.filename().string() + ": empty CSV");
  return t;
}

void write_csv_file(const std::filesystem::path& path, const CsvTable& table) {
  auto f = open_out(path);
  auto put = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << row[i];
    f << '\n';
  };
  put(table.header);
  for (const auto& r : table.rows) put(r);
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace lcz::io
