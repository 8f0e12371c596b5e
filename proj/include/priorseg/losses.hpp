#pragma once

// Joint visual/physical objective: pixel loss (CE + Dice), region
// compactness, and the interval hinge on per-region mean physical values.
// Regions come from the hard argmax of the prediction and are held fixed
// when differentiating.

#include <cmath>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <vector>

#include "priorseg/error.hpp"
#include "priorseg/grid.hpp"
#include "priorseg/pckg.hpp"

namespace priorseg {

struct LossWeights {
  double alpha = 1.0;     // Dice weight inside the pixel loss
  double lambda1 = 0.05;  // region compactness
  double lambda2 = 0.40;  // physics consistency

  void validate() const {
    if (!(alpha >= 0 && lambda1 >= 0 && lambda2 >= 0)) throw ConfigError("loss weights must be >= 0");
  }
};

/// Whether the Dice term enters as 1 - coefficient (default) or as the raw
/// coefficient.
enum class DiceMode { loss, coefficient };

inline constexpr double kProbEpsilon = 1e-7;

struct SegLoss {
  double ce = 0.0;
  double dice = 0.0;  // the Dice term as added (already converted per DiceMode)
  double value = 0.0;
  ProbMap grad;
};

inline void check_gt(const ProbMap& pred, const LabelMask& gt) {
  if (!pred.same_extent(gt))
    throw DimensionError("prediction is " + std::to_string(pred.height()) + "x" + std::to_string(pred.width()) +
                         " but ground truth is " + std::to_string(gt.height()) + "x" + std::to_string(gt.width()));
  for (std::size_t i = 0; i < gt.pixels(); ++i)
    if (gt(i) < 0 || static_cast<std::size_t>(gt(i)) > pred.classes())
      throw DimensionError("ground-truth label " + std::to_string(gt(i)) + " exceeds class count " +
                           std::to_string(pred.classes()));
}

/// Cross-entropy plus alpha-weighted Dice over labeled (non-zero) pixels.
/// CE reads the clamped scores as an unnormalized distribution:
/// -log(q_y / sum_k q_k) with q = clamp(p, eps, 1 - eps).
inline SegLoss seg_loss(const ProbMap& pred, const LabelMask& gt, double alpha, DiceMode mode = DiceMode::loss) {
  check_gt(pred, gt);
  const std::size_t C = pred.classes();
  SegLoss out;
  out.grad = ProbMap(pred.height(), pred.width(), C, 0.0);

  std::size_t labeled = 0;
  for (std::size_t i = 0; i < gt.pixels(); ++i) labeled += gt(i) != 0;
  if (labeled == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(labeled);

  // cross-entropy
  for (std::size_t i = 0; i < pred.pixels(); ++i) {
    const int y = gt(i);
    if (y == 0) continue;
    double sum = 0.0;
    for (std::size_t k = 0; k < C; ++k) sum += std::clamp(pred(i, k), kProbEpsilon, 1.0 - kProbEpsilon);
    const std::size_t yk = static_cast<std::size_t>(y - 1);
    const double qy = std::clamp(pred(i, yk), kProbEpsilon, 1.0 - kProbEpsilon);
    out.ce += (std::log(sum) - std::log(qy)) * inv_n;
    for (std::size_t k = 0; k < C; ++k) {
      const double p = pred(i, k);
      if (p < kProbEpsilon || p > 1.0 - kProbEpsilon) continue;  // clamp is flat here
      double g = 1.0 / sum;
      if (k == yk) g -= 1.0 / qy;
      out.grad(i, k) += g * inv_n;
    }
  }

  // soft Dice, averaged over classes present in prediction or ground truth
  if (alpha != 0.0) {
    std::vector<double> inter(C, 0.0), psum(C, 0.0), gsum(C, 0.0);
    for (std::size_t i = 0; i < pred.pixels(); ++i) {
      if (gt(i) == 0) continue;
      const std::size_t yk = static_cast<std::size_t>(gt(i) - 1);
      for (std::size_t k = 0; k < C; ++k) psum[k] += pred(i, k);
      inter[yk] += pred(i, yk);
      gsum[yk] += 1.0;
    }
    std::size_t active = 0;
    for (std::size_t k = 0; k < C; ++k) active += (psum[k] + gsum[k]) > 0.0;
    double coef = 0.0;
    if (active > 0) {
      const double inv_k = 1.0 / static_cast<double>(active);
      const double sign = mode == DiceMode::loss ? -1.0 : 1.0;
      for (std::size_t k = 0; k < C; ++k) {
        const double denom = psum[k] + gsum[k];
        if (denom <= 0.0) continue;
        coef += 2.0 * inter[k] / denom * inv_k;
        const double common = -2.0 * inter[k] / (denom * denom);
        for (std::size_t i = 0; i < pred.pixels(); ++i) {
          if (gt(i) == 0) continue;
          const double dcoef = common + (gt(i) == static_cast<int>(k) + 1 ? 2.0 / denom : 0.0);
          out.grad(i, k) += alpha * sign * dcoef * inv_k;
        }
      }
    }
    out.dice = mode == DiceMode::loss ? (active > 0 ? 1.0 - coef : 0.0) : coef;
  }
  out.value = out.ce + alpha * out.dice;
  return out;
}

/// Hard regions from argmax(pred) and the per-region means of features and
/// of every supplied raster.
struct RegionStats {
  std::size_t classes = 0;
  std::size_t dims = 0;
  std::vector<int> region;                             // per pixel, 1-based class
  std::vector<std::size_t> count;                      // |R_c|, index c-1
  std::vector<double> mean_feature;                    // (c-1)*dims + d
  std::map<Modality, std::vector<double>> mean_value;  // per modality, index c-1

  [[nodiscard]] bool empty(int c) const { return count[static_cast<std::size_t>(c - 1)] == 0; }
};

inline RegionStats region_stats(const ProbMap& pred, const FeatureMap& features, const RasterSet& rasters) {
  if (!pred.same_extent(features)) throw DimensionError("features are not aligned with the prediction");
  for (const auto& [m, r] : rasters)
    if (!pred.same_extent(r)) throw DimensionError(std::string(to_string(m)) + " raster is not aligned with the prediction");

  RegionStats s;
  s.classes = pred.classes();
  s.dims = features.dims();
  s.region.resize(pred.pixels());
  s.count.assign(s.classes, 0);
  s.mean_feature.assign(s.classes * s.dims, 0.0);
  for (const auto& [m, r] : rasters) s.mean_value[m].assign(s.classes, 0.0);
  std::map<Modality, std::vector<std::pair<double, double>>> extent;
  for (const auto& [m, r] : rasters)
    extent[m].assign(s.classes, {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});

  for (std::size_t i = 0; i < pred.pixels(); ++i) {
    const int c = argmax_class(pred.pixel(i));
    s.region[i] = c;
    const std::size_t k = static_cast<std::size_t>(c - 1);
    ++s.count[k];
    for (std::size_t d = 0; d < s.dims; ++d) s.mean_feature[k * s.dims + d] += features(i, d);
    for (const auto& [m, r] : rasters) {
      s.mean_value[m][k] += r(i);
      auto& [lo, hi] = extent[m][k];
      lo = std::min(lo, r(i));
      hi = std::max(hi, r(i));
    }
  }
  for (std::size_t k = 0; k < s.classes; ++k) {
    if (s.count[k] == 0) continue;
    const double inv = 1.0 / static_cast<double>(s.count[k]);
    for (std::size_t d = 0; d < s.dims; ++d) s.mean_feature[k * s.dims + d] *= inv;
    // clamp away rounding so a region of in-interval values has an in-interval mean
    for (auto& [m, v] : s.mean_value) v[k] = std::clamp(v[k] * inv, extent[m][k].first, extent[m][k].second);
  }
  return s;
}

struct RegionLoss {
  double value = 0.0;
  FeatureMap grad_features;
  ProbMap grad_pred;  // identically zero: regions are frozen and F is an input
};

inline RegionLoss region_loss(const RegionStats& stats, const FeatureMap& features, const ProbMap& pred) {
  if (stats.region.size() != features.pixels() || stats.dims != features.dims())
    throw DimensionError("region statistics do not match the feature map");
  RegionLoss out;
  out.grad_features = FeatureMap(features.height(), features.width(), features.dims(), 0.0);
  out.grad_pred = ProbMap(pred.height(), pred.width(), pred.classes(), 0.0);
  for (std::size_t i = 0; i < features.pixels(); ++i) {
    const std::size_t k = static_cast<std::size_t>(stats.region[i] - 1);
    const double inv = 1.0 / static_cast<double>(stats.count[k]);
    for (std::size_t d = 0; d < stats.dims; ++d) {
      const double diff = features(i, d) - stats.mean_feature[k * stats.dims + d];
      out.value += diff * diff * inv;
      // the mu_c term sums to zero over the region
      out.grad_features(i, d) = 2.0 * diff * inv;
    }
  }
  return out;
}

/// Hinge (v - hi)_+^2 + (lo - v)_+^2 and its derivative.
inline double interval_hinge(double v, const Interval& iv) noexcept {
  const double up = std::max(0.0, v - iv.hi), down = std::max(0.0, iv.lo - v);
  return up * up + down * down;
}
inline double interval_hinge_grad(double v, const Interval& iv) noexcept {
  return 2.0 * std::max(0.0, v - iv.hi) - 2.0 * std::max(0.0, iv.lo - v);
}

struct PhysTerm {
  int class_id = 0;
  Modality modality = Modality::ndvi;
  double mean = 0.0;
  Interval interval;
  double upper = 0.0;  // (mean - hi)_+^2
  double lower = 0.0;  // (lo - mean)_+^2
  [[nodiscard]] double value() const noexcept { return upper + lower; }
};

struct PhysLoss {
  double value = 0.0;
  std::vector<PhysTerm> terms;                // nonempty regions only
  std::map<Modality, std::vector<double>> grad_mean;  // dL/d(mean value), index c-1
  std::map<Modality, Raster> grad_rasters;    // dL/dv_i with regions frozen
};

/// Sum over classes of the interval hinge on each region's mean, averaged
/// over the listed modalities.
inline PhysLoss phys_loss(const RegionStats& stats, const Pckg& graph, const std::set<Modality>& modalities,
                          std::size_t height = 0, std::size_t width = 0) {
  PhysLoss out;
  if (modalities.empty()) return out;
  const double inv_m = 1.0 / static_cast<double>(modalities.size());
  for (Modality m : modalities) {
    auto it = stats.mean_value.find(m);
    if (it == stats.mean_value.end())
      throw InputError("no " + std::string(to_string(m)) + " raster in the region statistics");
    auto& gmean = out.grad_mean[m];
    gmean.assign(stats.classes, 0.0);
    for (std::size_t k = 0; k < stats.classes; ++k) {
      if (stats.count[k] == 0) continue;
      const int c = static_cast<int>(k) + 1;
      const Interval& iv = graph.interval(c, m);
      const double v = it->second[k];
      PhysTerm t{c, m, v, iv, std::pow(std::max(0.0, v - iv.hi), 2), std::pow(std::max(0.0, iv.lo - v), 2)};
      out.value += t.value() * inv_m;
      gmean[k] = interval_hinge_grad(v, iv) * inv_m;
      out.terms.push_back(t);
    }
    if (height * width == stats.region.size() && !stats.region.empty()) {
      Raster g(m, height, width, 0.0);
      for (std::size_t i = 0; i < stats.region.size(); ++i) {
        const std::size_t k = static_cast<std::size_t>(stats.region[i] - 1);
        g(i) = gmean[k] / static_cast<double>(stats.count[k]);
      }
      out.grad_rasters.emplace(m, std::move(g));
    }
  }
  return out;
}

/// Differentiable surrogate of the physics term used for training: region
/// membership is the normalized prediction q_ic = p_ic / sum_k p_ik instead of
/// the hard argmax, so the hinge can push probability mass around.
struct SoftPhysLoss {
  double value = 0.0;
  ProbMap grad_pred;
};

inline SoftPhysLoss soft_phys_loss(const ProbMap& pred, const RasterSet& rasters, const Pckg& graph) {
  const std::size_t C = pred.classes(), N = pred.pixels();
  SoftPhysLoss out;
  out.grad_pred = ProbMap(pred.height(), pred.width(), C, 0.0);
  if (rasters.empty()) return out;
  if (C != graph.size()) throw DimensionError("prediction has " + std::to_string(C) + " classes, graph has " + std::to_string(graph.size()));

  std::vector<double> row_sum(N, 0.0);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t k = 0; k < C; ++k) row_sum[i] += pred(i, k);

  std::vector<double> weight(C, 0.0);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t k = 0; k < C; ++k) weight[k] += pred(i, k) / row_sum[i];

  const double inv_m = 1.0 / static_cast<double>(rasters.size());
  ProbMap dq(pred.height(), pred.width(), C, 0.0);  // dL/dq
  for (const auto& [m, r] : rasters) {
    if (!pred.same_extent(r)) throw DimensionError(std::string(to_string(m)) + " raster is not aligned with the prediction");
    std::vector<double> mean(C, 0.0);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t k = 0; k < C; ++k) mean[k] += pred(i, k) / row_sum[i] * r(i);
    for (std::size_t k = 0; k < C; ++k) {
      if (weight[k] < 1e-12) continue;
      mean[k] /= weight[k];
      const Interval& iv = graph.interval(static_cast<int>(k) + 1, m);
      out.value += interval_hinge(mean[k], iv) * inv_m;
      const double g = interval_hinge_grad(mean[k], iv) * inv_m / weight[k];
      if (g == 0.0) continue;
      for (std::size_t i = 0; i < N; ++i) dq(i, k) += g * (r(i) - mean[k]);
    }
  }
  for (std::size_t i = 0; i < N; ++i) {
    double dot = 0.0;
    for (std::size_t k = 0; k < C; ++k) dot += dq(i, k) * pred(i, k) / row_sum[i];
    for (std::size_t k = 0; k < C; ++k) out.grad_pred(i, k) = (dq(i, k) - dot) / row_sum[i];
  }
  return out;
}

struct LossBreakdown {
  double seg = 0.0;
  double ce = 0.0;
  double dice = 0.0;
  double region = 0.0;
  double phys = 0.0;
  double total = 0.0;
  std::vector<PhysTerm> phys_terms;
};

inline std::set<Modality> modalities_of(const RasterSet& rasters) {
  std::set<Modality> out;
  for (const auto& [m, r] : rasters) out.insert(m);
  return out;
}

/// The exact weighted objective with hard regions.
inline LossBreakdown total_loss(const ProbMap& pred, const LabelMask& gt, const FeatureMap& features,
                                const RasterSet& rasters, const Pckg& graph, const LossWeights& weights = {},
                                DiceMode dice_mode = DiceMode::loss) {
  weights.validate();
  LossBreakdown out;
  const SegLoss seg = seg_loss(pred, gt, weights.alpha, dice_mode);
  out.seg = seg.value;
  out.ce = seg.ce;
  out.dice = seg.dice;
  const RegionStats stats = region_stats(pred, features, rasters);
  out.region = region_loss(stats, features, pred).value;
  PhysLoss phys = phys_loss(stats, graph, modalities_of(rasters));
  out.phys = phys.value;
  out.phys_terms = std::move(phys.terms);
  out.total = out.seg + weights.lambda1 * out.region + weights.lambda2 * out.phys;
  return out;
}

inline nlohmann::ordered_json to_json(const LossBreakdown& b, const Pckg* graph = nullptr) {
  nlohmann::ordered_json j;
  j["seg"] = b.seg;
  j["region"] = b.region;
  j["phys"] = b.phys;
  j["total"] = b.total;
  nlohmann::ordered_json terms = nlohmann::ordered_json::array();
  for (const auto& t : b.phys_terms) {
    nlohmann::ordered_json tj;
    tj["class"] = t.class_id;
    if (graph && graph->has_class(t.class_id)) tj["category"] = graph->entry(t.class_id).category;
    tj["modality"] = std::string(to_string(t.modality));
    tj["mean"] = t.mean;
    tj["interval"] = {t.interval.lo, t.interval.hi};
    tj["upper_hinge"] = t.upper;
    tj["lower_hinge"] = t.lower;
    terms.push_back(std::move(tj));
  }
  j["phys_terms"] = std::move(terms);
  return j;
}

/// How the physics term reaches the prediction during training. `none` is
/// the strict stop-gradient reading (the term is reported but inert);
/// `soft` differentiates the soft-membership surrogate.
enum class PhysGradient { none, soft };

struct ObjectiveEval {
  LossBreakdown breakdown;  // exact values, hard regions
  double objective = 0.0;   // the quantity whose gradient is returned
  ProbMap grad_pred;
};

inline ObjectiveEval training_objective(const ProbMap& pred, const LabelMask& gt, const FeatureMap& features,
                                        const RasterSet& rasters, const Pckg& graph, const LossWeights& weights,
                                        PhysGradient phys_gradient, DiceMode dice_mode = DiceMode::loss) {
  ObjectiveEval out;
  out.breakdown = total_loss(pred, gt, features, rasters, graph, weights, dice_mode);
  SegLoss seg = seg_loss(pred, gt, weights.alpha, dice_mode);
  out.grad_pred = std::move(seg.grad);
  out.objective = out.breakdown.seg + weights.lambda1 * out.breakdown.region;
  if (phys_gradient == PhysGradient::soft && weights.lambda2 != 0.0) {
    SoftPhysLoss soft = soft_phys_loss(pred, rasters, graph);
    out.objective += weights.lambda2 * soft.value;
    auto& g = out.grad_pred.values();
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += weights.lambda2 * soft.grad_pred.values()[j];
  } else {
    out.objective += weights.lambda2 * out.breakdown.phys;
  }
  return out;
}

}  // namespace priorseg
