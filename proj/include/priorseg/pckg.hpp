#pragma once

// Physical-centric knowledge graph: per-category closed intervals for NDVI,
// DEM and SAR plus the LLM's reasoning text, stored as a flat JSON array.

#include <cmath>
#include <cstdio>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "priorseg/error.hpp"
#include "priorseg/grid.hpp"

namespace priorseg {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  [[nodiscard]] double width() const noexcept { return hi - lo; }
  [[nodiscard]] double midpoint() const noexcept { return 0.5 * (lo + hi); }
  [[nodiscard]] bool contains(double v) const noexcept { return lo <= v && v <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Point-to-interval distance: zero inside the closed interval, otherwise
/// the distance to the nearer endpoint.
inline double interval_distance(double value, const Interval& iv) noexcept {
  if (value < iv.lo) return iv.lo - value;
  if (value > iv.hi) return value - iv.hi;
  return 0.0;
}

/// Field names of one record, in canonical order.
namespace field {
inline constexpr std::string_view category = "Category";
inline constexpr std::string_view meaning = "Meaning";
inline constexpr std::string_view modifier_analysis = "Modifier Analysis";
inline constexpr std::string_view coarse_class = "Coarse Class";
inline constexpr std::string_view ndvi_range = "NDVI Range";
inline constexpr std::string_view dem_range = "DEM Range";
inline constexpr std::string_view sar_range = "SAR Range";
inline constexpr std::string_view reasoning = "Reasoning";
}  // namespace field

inline constexpr std::array<std::string_view, 8> kRequiredFields{
    field::category,   field::meaning,   field::modifier_analysis, field::coarse_class,
    field::ndvi_range, field::dem_range, field::sar_range,         field::reasoning};

inline constexpr std::string_view range_field(Modality m) noexcept {
  switch (m) {
    case Modality::ndvi: return field::ndvi_range;
    case Modality::dem: return field::dem_range;
    case Modality::sar: return field::sar_range;
  }
  return {};
}

struct PckgEntry {
  std::string category;
  std::string meaning;
  std::string modifier_analysis;
  std::string coarse_class;  // stored, not consumed downstream
  std::array<Interval, kModalityCount> ranges{};
  std::string reasoning;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();  // unknown fields, kept verbatim

  [[nodiscard]] const Interval& range(Modality m) const noexcept { return ranges[index_of(m)]; }
  Interval& range(Modality m) noexcept { return ranges[index_of(m)]; }

  friend bool operator==(const PckgEntry&, const PckgEntry&) = default;
};

/// Collects non-fatal findings (e.g. an empty graph).
struct Diagnostics {
  std::vector<std::string> warnings;
};

namespace detail {

inline bool has_two_decimals(double v) noexcept {
  const double scaled = v * 100.0;
  return std::abs(scaled - std::round(scaled)) <= 1e-9 * std::max(1.0, std::abs(scaled));
}

inline double round2(double v) noexcept {
  double r = std::round(v * 100.0) / 100.0;
  return r == 0.0 ? 0.0 : r;
}

}  // namespace detail

/// Throws ValidationError naming the category and field when an interval
/// breaks an invariant.
inline void validate_interval(const Interval& iv, Modality m, std::string_view category) {
  const auto where = [&] { return " in '" + std::string(category) + "' field \"" + std::string(range_field(m)) + "\""; };
  if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi)) throw ValidationError("non-finite interval bound" + where());
  if (iv.lo > iv.hi) throw ValidationError("inverted interval" + where());
  if (!detail::has_two_decimals(iv.lo) || !detail::has_two_decimals(iv.hi))
    throw ValidationError("interval bound has more than two decimal places" + where());
  if (m == Modality::ndvi && (iv.lo < -1.0 || iv.hi > 1.0)) throw ValidationError("NDVI outside [-1, 1]" + where());
}

inline void validate_entry(const PckgEntry& e) {
  if (e.category.empty()) throw ValidationError("empty category");
  for (Modality m : kAllModalities) validate_interval(e.range(m), m, e.category);
}

/// Parses one record object. Used for whole graphs and for single LLM replies.
inline PckgEntry parse_entry(const nlohmann::ordered_json& obj) {
  if (!obj.is_object()) throw SchemaError("entry is not a JSON object");
  std::string label = "<unnamed>";
  if (auto it = obj.find(std::string(field::category)); it != obj.end() && it->is_string()) label = it->get<std::string>();

  const auto require = [&](std::string_view name) -> const nlohmann::ordered_json& {
    auto it = obj.find(std::string(name));
    if (it == obj.end()) throw SchemaError("missing field \"" + std::string(name) + "\" in '" + label + "'");
    return *it;
  };
  const auto text = [&](std::string_view name) {
    const auto& v = require(name);
    if (!v.is_string()) throw SchemaError("field \"" + std::string(name) + "\" in '" + label + "' must be a string");
    return v.get<std::string>();
  };

  PckgEntry e;
  e.category = text(field::category);
  e.meaning = text(field::meaning);
  e.modifier_analysis = text(field::modifier_analysis);
  e.coarse_class = text(field::coarse_class);
  e.reasoning = text(field::reasoning);
  for (Modality m : kAllModalities) {
    const auto& v = require(range_field(m));
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
      throw SchemaError("field \"" + std::string(range_field(m)) + "\" in '" + label + "' must be a [lo, hi] number pair");
    e.range(m) = {v[0].get<double>(), v[1].get<double>()};
  }
  validate_entry(e);
  for (auto& iv : e.ranges) iv = {detail::round2(iv.lo), detail::round2(iv.hi)};

  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (auto f : kRequiredFields) known = known || key == f;
    if (!known) e.extra[key] = value;
  }
  return e;
}

/// Immutable once built; class ids are 1..C in insertion order.
class Pckg {
 public:
  Pckg() = default;

  explicit Pckg(std::vector<PckgEntry> entries) {
    for (auto& e : entries) add(std::move(e));
  }

  [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
  [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }
  [[nodiscard]] std::span<const PckgEntry> entries() const noexcept { return entries_; }

  [[nodiscard]] bool has_class(int class_id) const noexcept {
    return class_id >= 1 && static_cast<std::size_t>(class_id) <= entries_.size();
  }

  [[nodiscard]] const PckgEntry& entry(int class_id) const {
    if (!has_class(class_id))
      throw LookupError("unknown class id " + std::to_string(class_id) + " (graph has " + std::to_string(size()) +
                        " classes)");
    return entries_[static_cast<std::size_t>(class_id - 1)];
  }

  [[nodiscard]] std::optional<int> class_id(std::string_view category) const {
    auto it = index_.find(std::string(category));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  [[nodiscard]] const Interval& interval(int class_id, Modality m) const { return entry(class_id).range(m); }

  friend bool operator==(const Pckg& a, const Pckg& b) { return a.entries_ == b.entries_; }

 private:
  void add(PckgEntry e) {
    validate_entry(e);
    const int id = static_cast<int>(entries_.size()) + 1;
    if (!index_.emplace(e.category, id).second) throw ValidationError("duplicate category '" + e.category + "'");
    entries_.push_back(std::move(e));
  }

  std::vector<PckgEntry> entries_;
  std::map<std::string, int, std::less<>> index_;
};

inline Interval lookup_interval(const Pckg& graph, int class_id, Modality m) { return graph.interval(class_id, m); }

namespace detail {

inline std::pair<std::size_t, std::size_t> line_col(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace detail

inline Pckg parse_pckg(std::string_view document, Diagnostics* diag = nullptr) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(document);
  } catch (const nlohmann::json::parse_error& e) {
    auto [line, col] = detail::line_col(document, e.byte == 0 ? 0 : e.byte - 1);
    throw ParseError("malformed JSON at line " + std::to_string(line) + ", column " + std::to_string(col));
  }
  if (!doc.is_array()) throw SchemaError("graph document must be a top-level JSON array");
  std::vector<PckgEntry> entries;
  entries.reserve(doc.size());
  for (const auto& obj : doc) entries.push_back(parse_entry(obj));
  if (entries.empty() && diag) diag->warnings.emplace_back("graph has no entries");
  return Pckg(std::move(entries));
}

/// Fixed two-decimal rendering, e.g. 0.5 -> "0.50".
inline std::string format_bound(double v) {
  v = detail::round2(v);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string serialize_entry(const PckgEntry& e, std::string_view indent = "  ") {
  const auto str = [](const std::string& s) { return nlohmann::json(s).dump(); };
  std::string out;
  out += indent;
  out += "{\n";
  const std::string in2 = std::string(indent) + "  ";
  const auto kv = [&](std::string_view key, const std::string& rendered, bool last) {
    out += in2 + nlohmann::json(std::string(key)).dump() + ": " + rendered + (last ? "\n" : ",\n");
  };
  const auto range = [&](Modality m) {
    const auto& iv = e.range(m);
    return "[" + format_bound(iv.lo) + ", " + format_bound(iv.hi) + "]";
  };
  const bool extras = !e.extra.empty();
  kv(field::category, str(e.category), false);
  kv(field::meaning, str(e.meaning), false);
  kv(field::modifier_analysis, str(e.modifier_analysis), false);
  kv(field::coarse_class, str(e.coarse_class), false);
  kv(field::ndvi_range, range(Modality::ndvi), false);
  kv(field::dem_range, range(Modality::dem), false);
  kv(field::sar_range, range(Modality::sar), false);
  kv(field::reasoning, str(e.reasoning), !extras);
  std::size_t i = 0;
  for (const auto& [key, value] : e.extra.items()) kv(key, value.dump(), ++i == e.extra.size());
  out += indent;
  out += "}";
  return out;
}

inline std::string serialize_pckg(const Pckg& graph) {
  if (graph.empty()) return "[]\n";
  std::string out = "[\n";
  for (std::size_t i = 0; i < graph.size(); ++i) {
    out += serialize_entry(graph.entries()[i]);
    out += (i + 1 < graph.size()) ? ",\n" : "\n";
  }
  out += "]\n";
  return out;
}

inline Pckg load_pckg(const std::string& path, Diagnostics* diag = nullptr) {
  return parse_pckg(read_text_file(path), diag);
}

}  // namespace priorseg
