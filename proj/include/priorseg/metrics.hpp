#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <vector>

#include "priorseg/error.hpp"
#include "priorseg/grid.hpp"
#include "priorseg/pckg.hpp"

namespace priorseg {

struct IoUReport {
  std::size_t num_classes = 0;
  bool include_background = false;
  std::vector<std::optional<double>> iou;                // index = class id (0 = background)
  double miou = 0.0;                                      // mean over defined classes
  std::vector<std::vector<std::size_t>> confusion;        // [gt][pred]
};

/// Per-class IoU = TP / (TP + FP + FN) from the full confusion matrix; classes
/// absent from both masks are undefined and left out of the mean. Background
/// pixels still count as errors for the other classes.
inline IoUReport miou(const LabelMask& pred, const LabelMask& gt, std::size_t num_classes,
                      bool include_background = false) {
  if (!pred.same_extent(gt)) throw DimensionError("miou: prediction and ground truth differ in size");
  IoUReport r;
  r.num_classes = num_classes;
  r.include_background = include_background;
  r.confusion.assign(num_classes + 1, std::vector<std::size_t>(num_classes + 1, 0));
  for (std::size_t i = 0; i < gt.pixels(); ++i) {
    const int g = gt(i), p = pred(i);
    if (g < 0 || p < 0 || static_cast<std::size_t>(g) > num_classes || static_cast<std::size_t>(p) > num_classes)
      throw DimensionError("miou: label outside 0.." + std::to_string(num_classes));
    ++r.confusion[static_cast<std::size_t>(g)][static_cast<std::size_t>(p)];
  }
  r.iou.assign(num_classes + 1, std::nullopt);
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t c = include_background ? 0 : 1; c <= num_classes; ++c) {
    std::size_t tp = r.confusion[c][c], fp = 0, fn = 0;
    for (std::size_t k = 0; k <= num_classes; ++k) {
      if (k == c) continue;
      fp += r.confusion[k][c];
      fn += r.confusion[c][k];
    }
    const std::size_t denom = tp + fp + fn;
    if (denom == 0) continue;
    r.iou[c] = static_cast<double>(tp) / static_cast<double>(denom);
    sum += *r.iou[c];
    ++defined;
  }
  r.miou = defined ? sum / static_cast<double>(defined) : 0.0;
  return r;
}

inline nlohmann::ordered_json to_json(const IoUReport& r) {
  nlohmann::ordered_json j;
  j["miou"] = r.miou;
  j["include_background"] = r.include_background;
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (std::size_t c = 0; c < r.iou.size(); ++c)
    if (r.iou[c]) per[std::to_string(c)] = *r.iou[c];
  j["per_class_iou"] = std::move(per);
  j["confusion"] = r.confusion;
  return j;
}

struct PlausibilityReport {
  double rate = 1.0;                       // mean over modalities
  std::map<Modality, double> per_modality;  // fraction of regions inside
  std::map<int, double> per_class;         // fraction of modalities inside
  std::map<int, std::map<Modality, double>> region_means;
};

/// A labeled region is plausible for a modality when its mean value lies in
/// the class interval.
inline PlausibilityReport plausibility_rate(const LabelMask& labels, const RasterSet& rasters, const Pckg& graph) {
  PlausibilityReport r;
  std::map<int, std::size_t> count;
  for (std::size_t i = 0; i < labels.pixels(); ++i)
    if (labels(i) != 0) {
      if (!graph.has_class(labels(i))) throw LookupError("label " + std::to_string(labels(i)) + " not in graph");
      ++count[labels(i)];
    }
  for (const auto& [m, raster] : rasters) {
    if (!raster.same_extent(labels)) throw DimensionError(std::string(to_string(m)) + " raster is not aligned");
    std::map<int, double> sums;
    std::map<int, std::pair<double, double>> extent;
    for (std::size_t i = 0; i < labels.pixels(); ++i) {
      const int c = labels(i);
      if (c == 0) continue;
      const double v = raster(i);
      sums[c] += v;
      const auto it = extent.try_emplace(c, v, v).first;
      it->second = {std::min(it->second.first, v), std::max(it->second.second, v)};
    }
    std::size_t inside = 0;
    for (auto& [c, s] : sums) {
      // rounding in the sum can carry the mean of endpoint-valued pixels past
      // the endpoint; the exact mean never leaves [min, max]
      const double mean = std::clamp(s / static_cast<double>(count[c]), extent[c].first, extent[c].second);
      r.region_means[c][m] = mean;
      const bool ok = graph.interval(c, m).contains(mean);
      inside += ok;
      r.per_class[c] += ok ? 1.0 : 0.0;
    }
    r.per_modality[m] = count.empty() ? 1.0 : static_cast<double>(inside) / static_cast<double>(count.size());
  }
  if (!rasters.empty()) {
    double sum = 0.0;
    for (const auto& [m, v] : r.per_modality) sum += v;
    r.rate = sum / static_cast<double>(rasters.size());
    for (auto& [c, v] : r.per_class) v /= static_cast<double>(rasters.size());
  }
  return r;
}

inline nlohmann::ordered_json to_json(const PlausibilityReport& r, const Pckg& graph) {
  nlohmann::ordered_json j;
  j["rate"] = r.rate;
  nlohmann::ordered_json pm = nlohmann::ordered_json::object();
  for (const auto& [m, v] : r.per_modality) pm[std::string(to_string(m))] = v;
  j["per_modality"] = std::move(pm);
  nlohmann::ordered_json pc = nlohmann::ordered_json::object();
  for (const auto& [c, v] : r.per_class) pc[graph.entry(c).category] = v;
  j["per_class"] = std::move(pc);
  return j;
}

/// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return std::nan("");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

struct DistributionSummary {
  std::size_t pixels = 0;
  double coverage = 0.0;       // fraction inside the class interval
  double median = 0.0;
  double median_offset = 0.0;  // median - interval midpoint
  double iqr = 0.0;

  friend bool operator==(const DistributionSummary&, const DistributionSummary&) = default;
};

inline DistributionSummary summarize(std::vector<double> values, const Interval& iv) {
  DistributionSummary s;
  s.pixels = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  std::size_t inside = 0;
  for (double v : values) inside += iv.contains(v);
  s.coverage = static_cast<double>(inside) / static_cast<double>(values.size());
  s.median = quantile_sorted(values, 0.5);
  s.median_offset = s.median - iv.midpoint();
  s.iqr = quantile_sorted(values, 0.75) - quantile_sorted(values, 0.25);
  return s;
}

struct ReliabilityRow {
  int class_id = 0;
  Modality modality = Modality::ndvi;
  DistributionSummary synthetic;
  DistributionSummary reference;
  [[nodiscard]] double median_gap() const noexcept { return reference.median - synthetic.median; }
};

struct ReliabilityReport {
  std::vector<ReliabilityRow> rows;
};

/// Per-class distribution statistics of a synthetic raster against a
/// reference raster of the same modality.
inline ReliabilityReport reliability(const Raster& synthetic, const Raster& reference, const LabelMask& labels,
                                     const Pckg& graph) {
  if (synthetic.modality != reference.modality) throw InputError("reliability: rasters have different modalities");
  if (!synthetic.same_extent(labels) || !reference.same_extent(labels))
    throw DimensionError("reliability: rasters are not aligned with the labels");
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> by_class;
  for (std::size_t i = 0; i < labels.pixels(); ++i) {
    const int c = labels(i);
    if (c == 0) continue;
    auto& [s, r] = by_class[c];
    s.push_back(synthetic(i));
    r.push_back(reference(i));
  }
  ReliabilityReport out;
  for (auto& [c, sr] : by_class) {
    const Interval& iv = graph.interval(c, synthetic.modality);
    out.rows.push_back({c, synthetic.modality, summarize(std::move(sr.first), iv), summarize(std::move(sr.second), iv)});
  }
  return out;
}

inline ReliabilityReport reliability(const RasterSet& synthetic, const RasterSet& reference, const LabelMask& labels,
                                     const Pckg& graph) {
  ReliabilityReport out;
  for (const auto& [m, s] : synthetic) {
    auto it = reference.find(m);
    if (it == reference.end()) continue;
    auto part = reliability(s, it->second, labels, graph);
    out.rows.insert(out.rows.end(), part.rows.begin(), part.rows.end());
  }
  return out;
}

inline nlohmann::ordered_json to_json(const ReliabilityReport& r, const Pckg& graph) {
  const auto summary = [](const DistributionSummary& s) {
    nlohmann::ordered_json j;
    j["pixels"] = s.pixels;
    j["coverage"] = s.coverage;
    j["median"] = s.median;
    j["median_offset"] = s.median_offset;
    j["iqr"] = s.iqr;
    return j;
  };
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    nlohmann::ordered_json j;
    j["class"] = row.class_id;
    j["category"] = graph.entry(row.class_id).category;
    j["modality"] = std::string(to_string(row.modality));
    j["synthetic"] = summary(row.synthetic);
    j["reference"] = summary(row.reference);
    j["median_gap"] = row.median_gap();
    rows.push_back(std::move(j));
  }
  return nlohmann::ordered_json{{"rows", std::move(rows)}};
}

inline std::string format_reliability_csv(const ReliabilityReport& r, const Pckg& graph) {
  std::ostringstream os;
  os << "class,category,modality,syn_coverage,syn_median_offset,syn_iqr,ref_coverage,ref_median_offset,ref_iqr,median_gap\n";
  for (const auto& row : r.rows)
    os << row.class_id << ',' << nlohmann::json(graph.entry(row.class_id).category).dump() << ','
       << to_string(row.modality) << ',' << format_double(row.synthetic.coverage) << ','
       << format_double(row.synthetic.median_offset) << ',' << format_double(row.synthetic.iqr) << ','
       << format_double(row.reference.coverage) << ',' << format_double(row.reference.median_offset) << ','
       << format_double(row.reference.iqr) << ',' << format_double(row.median_gap()) << '\n';
  return os.str();
}

}  // namespace priorseg
