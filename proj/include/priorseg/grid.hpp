#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "priorseg/error.hpp"

namespace priorseg {

enum class Modality { ndvi = 0, dem = 1, sar = 2 };

inline constexpr std::array<Modality, 3> kAllModalities{Modality::ndvi, Modality::dem, Modality::sar};
inline constexpr std::size_t kModalityCount = kAllModalities.size();

inline constexpr std::string_view to_string(Modality m) noexcept {
  switch (m) {
    case Modality::ndvi: return "NDVI";
    case Modality::dem: return "DEM";
    case Modality::sar: return "SAR";
  }
  return "?";
}

/// Lower-case name, used for file names and config keys.
inline constexpr std::string_view file_stem(Modality m) noexcept {
  switch (m) {
    case Modality::ndvi: return "ndvi";
    case Modality::dem: return "dem";
    case Modality::sar: return "sar";
  }
  return "?";
}

inline constexpr std::size_t index_of(Modality m) noexcept { return static_cast<std::size_t>(m); }

/// Case-insensitive parse of "ndvi" / "DEM" / "sar".
inline std::optional<Modality> parse_modality(std::string_view s) {
  std::string up(s);
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (Modality m : kAllModalities)
    if (up == to_string(m)) return m;
  return std::nullopt;
}

/// Row-major H×W grid with K values per pixel (pixel-major: the K values of
/// one pixel are contiguous).
template <typename T>
class PixelGrid {
 public:
  PixelGrid() = default;
  PixelGrid(std::size_t height, std::size_t width, std::size_t depth = 1, T fill = T{})
      : height_(height), width_(width), depth_(depth), values_(height * width * depth, fill) {}

  [[nodiscard]] std::size_t height() const noexcept { return height_; }
  [[nodiscard]] std::size_t width() const noexcept { return width_; }
  [[nodiscard]] std::size_t depth() const noexcept { return depth_; }
  [[nodiscard]] std::size_t pixels() const noexcept { return height_ * width_; }
  [[nodiscard]] bool empty() const noexcept { return values_.empty(); }

  T& operator()(std::size_t pixel, std::size_t k = 0) { return values_[pixel * depth_ + k]; }
  const T& operator()(std::size_t pixel, std::size_t k = 0) const { return values_[pixel * depth_ + k]; }
  T& at(std::size_t row, std::size_t col, std::size_t k = 0) { return (*this)(row * width_ + col, k); }
  const T& at(std::size_t row, std::size_t col, std::size_t k = 0) const { return (*this)(row * width_ + col, k); }

  std::span<T> pixel(std::size_t i) { return {values_.data() + i * depth_, depth_}; }
  std::span<const T> pixel(std::size_t i) const { return {values_.data() + i * depth_, depth_}; }

  std::vector<T>& values() noexcept { return values_; }
  const std::vector<T>& values() const noexcept { return values_; }

  template <typename U>
  [[nodiscard]] bool same_extent(const PixelGrid<U>& o) const noexcept {
    return height_ == o.height() && width_ == o.width();
  }

  friend bool operator==(const PixelGrid&, const PixelGrid&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t depth_ = 1;
  std::vector<T> values_;
};

/// Class id per pixel; 0 marks unlabeled/background.
struct LabelMask : PixelGrid<int> {
  using PixelGrid<int>::PixelGrid;
  LabelMask(std::size_t h, std::size_t w, int fill = 0) : PixelGrid<int>(h, w, 1, fill) {}
};

/// H×W×C per-pixel class scores. Channel k holds class id k+1.
struct ProbMap : PixelGrid<double> {
  using PixelGrid<double>::PixelGrid;
  [[nodiscard]] std::size_t classes() const noexcept { return depth(); }
};

/// H×W×D backbone features.
struct FeatureMap : PixelGrid<double> {
  using PixelGrid<double>::PixelGrid;
  [[nodiscard]] std::size_t dims() const noexcept { return depth(); }
};

/// One modality's physical measurements (NDVI unitless, DEM meters, SAR dB).
struct Raster : PixelGrid<double> {
  Raster() = default;
  Raster(Modality m, std::size_t h, std::size_t w, double fill = 0.0) : PixelGrid<double>(h, w, 1, fill), modality(m) {}
  Modality modality = Modality::ndvi;
  friend bool operator==(const Raster&, const Raster&) = default;
};

using RasterSet = std::map<Modality, Raster>;

/// Per-pixel argmax with ties going to the lower class id. Returns 1-based ids.
inline int argmax_class(std::span<const double> scores) noexcept {
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.size(); ++k)
    if (scores[k] > scores[best]) best = k;
  return static_cast<int>(best) + 1;
}

inline LabelMask argmax_labels(const ProbMap& p) {
  LabelMask out(p.height(), p.width());
  for (std::size_t i = 0; i < p.pixels(); ++i) out(i) = argmax_class(p.pixel(i));
  return out;
}

// ---------------------------------------------------------------------------
// PGRD text grids
//
//   PGRD <NDVI|DEM|SAR|LABEL|PROB|FEAT> <H> <W> [<C>]
//   # optional comment / provenance lines
//   row-major values, one row per line; PROB and FEAT store C planes in turn
// ---------------------------------------------------------------------------

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  if (v == 0.0) v = 0.0;  // drop negative zero
  std::array<char, 32> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return {buf.data(), res.ptr};
}

struct GridFile {
  std::string kind;
  std::size_t height = 0, width = 0, depth = 1;
  std::vector<double> values;  // pixel-major, like PixelGrid
};

namespace detail {

inline void write_header(std::ostream& os, std::string_view kind, std::size_t h, std::size_t w,
                         std::optional<std::size_t> c, const std::vector<std::string>& comments) {
  os << "PGRD " << kind << ' ' << h << ' ' << w;
  if (c) os << ' ' << *c;
  os << '\n';
  for (const auto& line : comments) os << "# " << line << '\n';
}

template <typename T, typename Fmt>
void write_planes(std::ostream& os, const PixelGrid<T>& g, Fmt fmt) {
  for (std::size_t k = 0; k < g.depth(); ++k)
    for (std::size_t r = 0; r < g.height(); ++r) {
      for (std::size_t c = 0; c < g.width(); ++c) {
        if (c) os << ' ';
        os << fmt(g.at(r, c, k));
      }
      os << '\n';
    }
}

}  // namespace detail

inline GridFile parse_grid(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw ParseError("grid: empty input");
  std::istringstream hdr(line);
  std::string magic;
  GridFile g;
  hdr >> magic >> g.kind >> g.height >> g.width;
  if (magic != "PGRD" || !hdr) throw ParseError("grid: bad header '" + line + "'");
  const bool multi = g.kind == "PROB" || g.kind == "FEAT";
  if (multi) {
    if (!(hdr >> g.depth) || g.depth == 0) throw ParseError("grid: " + g.kind + " header needs a channel count");
  } else if (g.kind != "LABEL" && !parse_modality(g.kind)) {
    throw ParseError("grid: unknown grid kind '" + g.kind + "'");
  }

  const std::size_t plane = g.height * g.width;
  std::vector<double> planar;
  planar.reserve(plane * g.depth);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const char* p = line.data();
    const char* end = p + line.size();
    std::size_t in_row = 0;
    while (p < end) {
      while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
      if (p == end) break;
      double v = 0;
      auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc{}) throw ParseError("grid: bad number at line " + std::to_string(lineno));
      planar.push_back(v);
      p = res.ptr;
      ++in_row;
    }
    if (in_row != g.width)
      throw ParseError("grid: line " + std::to_string(lineno) + " has " + std::to_string(in_row) + " values, expected " +
                       std::to_string(g.width));
  }
  if (planar.size() != plane * g.depth)
    throw ParseError("grid: expected " + std::to_string(plane * g.depth) + " values, found " +
                     std::to_string(planar.size()));
  g.values.resize(planar.size());
  for (std::size_t k = 0; k < g.depth; ++k)
    for (std::size_t i = 0; i < plane; ++i) g.values[i * g.depth + k] = planar[k * plane + i];
  return g;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write '" + path + "'");
  f << text;
}

inline std::string format_labels(const LabelMask& m, const std::vector<std::string>& comments = {}) {
  std::ostringstream os;
  detail::write_header(os, "LABEL", m.height(), m.width(), std::nullopt, comments);
  detail::write_planes(os, m, [](int v) { return v; });
  return os.str();
}

inline std::string format_raster(const Raster& r, const std::vector<std::string>& comments = {}) {
  std::ostringstream os;
  detail::write_header(os, to_string(r.modality), r.height(), r.width(), std::nullopt, comments);
  detail::write_planes(os, r, format_double);
  return os.str();
}

inline std::string format_probs(const ProbMap& p, const std::vector<std::string>& comments = {}) {
  std::ostringstream os;
  detail::write_header(os, "PROB", p.height(), p.width(), p.classes(), comments);
  detail::write_planes(os, p, format_double);
  return os.str();
}

inline std::string format_features(const FeatureMap& f, const std::vector<std::string>& comments = {}) {
  std::ostringstream os;
  detail::write_header(os, "FEAT", f.height(), f.width(), f.dims(), comments);
  detail::write_planes(os, f, format_double);
  return os.str();
}

inline LabelMask parse_labels(std::string_view text) {
  GridFile g = parse_grid(text);
  if (g.kind != "LABEL") throw ParseError("grid: expected LABEL grid, got " + g.kind);
  LabelMask m(g.height, g.width);
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    double v = g.values[i];
    if (v != std::floor(v) || v < 0) throw ParseError("grid: label values must be non-negative integers");
    m(i) = static_cast<int>(v);
  }
  return m;
}

inline Raster parse_raster(std::string_view text) {
  GridFile g = parse_grid(text);
  auto m = parse_modality(g.kind);
  if (!m) throw ParseError("grid: expected a modality grid, got " + g.kind);
  Raster r(*m, g.height, g.width);
  r.values() = std::move(g.values);
  return r;
}

inline ProbMap parse_probs(std::string_view text) {
  GridFile g = parse_grid(text);
  if (g.kind != "PROB") throw ParseError("grid: expected PROB grid, got " + g.kind);
  ProbMap p(g.height, g.width, g.depth);
  p.values() = std::move(g.values);
  return p;
}

inline FeatureMap parse_features(std::string_view text) {
  GridFile g = parse_grid(text);
  if (g.kind != "FEAT") throw ParseError("grid: expected FEAT grid, got " + g.kind);
  FeatureMap f(g.height, g.width, g.depth);
  f.values() = std::move(g.values);
  return f;
}

}  // namespace priorseg
