#pragma once

// Visual-only and visual-physical inference. Physical measurements attenuate
// each class score by a capped Gaussian of the measurement's distance to the
// class interval, and the scores are renormalized per pixel.

#include <cmath>
#include <nlohmann/json.hpp>
#include <set>
#include <string>
#include <vector>

#include "priorseg/error.hpp"
#include "priorseg/grid.hpp"
#include "priorseg/pckg.hpp"
#include "priorseg/refiner.hpp"

namespace priorseg {

/// s = exp(-min(d, tau)^2 / sigma^2)
inline double attenuation(double d, double tau, double sigma) {
  if (!(sigma > 0)) throw ConfigError("attenuation: sigma must be > 0");
  if (!(tau > 0)) throw ConfigError("attenuation: tau must be > 0");
  const double capped = std::min(d, tau);
  return std::exp(-(capped * capped) / (sigma * sigma));
}

enum class ToleranceMode { relative, absolute };

inline constexpr double kSigmaFloor = 1e-3;
inline constexpr double kDenominatorFloor = 1e-12;

/// In relative mode sigma and tau are multiples of the class interval width;
/// in absolute mode they are in modality units.
struct ModalityTolerance {
  ToleranceMode mode = ToleranceMode::relative;
  double sigma = 0.5;
  double tau = 1.0;
};

struct AttenuationConfig {
  std::array<ModalityTolerance, kModalityCount> tolerance{};
  std::set<Modality> available;

  void validate() const {
    for (const auto& t : tolerance)
      if (!(t.sigma > 0) || !(t.tau > 0)) throw ConfigError("attenuation sigma and tau must be > 0");
  }

  /// (tau, sigma) for one class interval.
  [[nodiscard]] std::pair<double, double> resolve(Modality m, const Interval& iv) const {
    const auto& t = tolerance[index_of(m)];
    if (t.mode == ToleranceMode::absolute) return {t.tau, t.sigma};
    const double sigma = std::max(t.sigma * iv.width(), kSigmaFloor);
    const double tau = std::max(t.tau * iv.width(), kSigmaFloor * t.tau / t.sigma);
    return {tau, sigma};
  }
};

struct ModalityEvidence {
  Modality modality = Modality::ndvi;
  double value = 0.0;
  double d_pre = 0.0, s_pre = 1.0;
  double d_post = 0.0, s_post = 1.0;
};

struct PixelTrace {
  std::size_t row = 0, col = 0;
  int pre = 0, post = 0;
  std::vector<ModalityEvidence> evidence;
  std::string reasoning_pre, reasoning_post;
};

struct RefinementTrace {
  std::vector<PixelTrace> flips;
  std::vector<std::string> warnings;
};

/// Records every pixel whose label differs between `before` and `after`.
inline RefinementTrace trace_flips(const LabelMask& before, const LabelMask& after, const RasterSet& rasters,
                                   const Pckg& graph, const AttenuationConfig& cfg) {
  RefinementTrace t;
  for (std::size_t i = 0; i < before.pixels(); ++i) {
    if (before(i) == after(i)) continue;
    PixelTrace p;
    p.row = i / before.width();
    p.col = i % before.width();
    p.pre = before(i);
    p.post = after(i);
    for (Modality m : cfg.available) {
      const double v = rasters.at(m)(i);
      ModalityEvidence e{m, v};
      const auto eval = [&](int c, double& d, double& s) {
        const Interval& iv = graph.interval(c, m);
        d = interval_distance(v, iv);
        auto [tau, sigma] = cfg.resolve(m, iv);
        s = attenuation(d, tau, sigma);
      };
      eval(p.pre, e.d_pre, e.s_pre);
      eval(p.post, e.d_post, e.s_post);
      p.evidence.push_back(e);
    }
    p.reasoning_pre = graph.entry(p.pre).reasoning;
    p.reasoning_post = graph.entry(p.post).reasoning;
    t.flips.push_back(std::move(p));
  }
  return t;
}

struct ReweightResult {
  ProbMap probs;
  LabelMask labels;
  RefinementTrace trace;
};

/// p~_c = Y1_c S_c / sum_j Y1_j S_j with S_c the product of per-modality
/// attenuations over `cfg.available`. With nothing available S = 1.
inline ReweightResult reweight(const ProbMap& refined, const RasterSet& rasters, const Pckg& graph,
                               const AttenuationConfig& cfg) {
  cfg.validate();
  const std::size_t C = refined.classes();
  if (C != graph.size())
    throw DimensionError("refined map has " + std::to_string(C) + " classes but the graph has " +
                         std::to_string(graph.size()));
  for (Modality m : cfg.available) {
    auto it = rasters.find(m);
    if (it == rasters.end()) throw InputError(std::string(to_string(m)) + " marked available but no raster supplied");
    if (!it->second.same_extent(refined)) throw DimensionError(std::string(to_string(m)) + " raster is not aligned");
  }

  // per (modality, class) tolerances
  std::vector<std::array<std::pair<double, double>, kModalityCount>> tol(C);
  for (std::size_t c = 0; c < C; ++c)
    for (Modality m : cfg.available) tol[c][index_of(m)] = cfg.resolve(m, graph.interval(static_cast<int>(c) + 1, m));

  ReweightResult out{ProbMap(refined.height(), refined.width(), C), LabelMask(refined.height(), refined.width()), {}};
  std::vector<double> scores(C);
  std::size_t fallbacks = 0;
  for (std::size_t i = 0; i < refined.pixels(); ++i) {
    double denom = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      double s = 1.0;
      for (Modality m : cfg.available) {
        const Interval& iv = graph.interval(static_cast<int>(c) + 1, m);
        const auto [tau, sigma] = tol[c][index_of(m)];
        s *= attenuation(interval_distance(rasters.at(m)(i), iv), tau, sigma);
      }
      scores[c] = refined(i, c) * s;
      denom += scores[c];
    }
    if (denom < kDenominatorFloor) {
      // every class fully attenuated: keep the refined scores
      ++fallbacks;
      denom = 0.0;
      for (std::size_t c = 0; c < C; ++c) denom += (scores[c] = refined(i, c));
      if (denom <= 0.0) throw NumericError("refined scores sum to zero at pixel " + std::to_string(i));
    }
    for (std::size_t c = 0; c < C; ++c) out.probs(i, c) = scores[c] / denom;
    out.labels(i) = argmax_class(out.probs.pixel(i));
  }
  out.trace = trace_flips(argmax_labels(refined), out.labels, rasters, graph, cfg);
  if (fallbacks)
    out.trace.warnings.push_back(std::to_string(fallbacks) +
                                 " pixel(s) had every class fully attenuated; refined scores were used there");
  return out;
}

struct InferenceResult {
  LabelMask labels;
  ProbMap probs;
  ProbMap refined;
  RefinementTrace trace;  // pixels whose label differs from the coarse argmax
};

/// assemble -> refine -> reweight. Only rasters listed in `cfg.available`
/// are read; the others are treated as absent (zero-padded).
inline InferenceResult infer(const RefinerParams& params, const FeatureMap& features, const ProbMap& coarse,
                             const RasterSet& rasters, const Pckg& graph, const AttenuationConfig& cfg) {
  const JointTensor z = assemble_joint(features, coarse, rasters, graph, &cfg.available);
  Refined r = refine(params, z, coarse);
  ReweightResult rw = reweight(r.refined, rasters, graph, cfg);
  InferenceResult out;
  out.trace = trace_flips(argmax_labels(coarse), rw.labels, rasters, graph, cfg);
  out.trace.warnings = std::move(rw.trace.warnings);
  out.labels = std::move(rw.labels);
  out.probs = std::move(rw.probs);
  out.refined = std::move(r.refined);
  return out;
}

inline std::string format_trace_jsonl(const RefinementTrace& t, const Pckg& graph) {
  std::string out;
  for (const auto& p : t.flips) {
    nlohmann::ordered_json j;
    j["row"] = p.row;
    j["col"] = p.col;
    j["pre"] = p.pre;
    j["pre_category"] = graph.entry(p.pre).category;
    j["post"] = p.post;
    j["post_category"] = graph.entry(p.post).category;
    nlohmann::ordered_json ev = nlohmann::ordered_json::array();
    for (const auto& e : p.evidence)
      ev.push_back({{"modality", std::string(to_string(e.modality))},
                    {"value", e.value},
                    {"d_pre", e.d_pre},
                    {"s_pre", e.s_pre},
                    {"d_post", e.d_post},
                    {"s_post", e.s_post}});
    j["evidence"] = std::move(ev);
    j["reasoning_pre"] = p.reasoning_pre;
    j["reasoning_post"] = p.reasoning_post;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace priorseg
