#pragma once

// Residual refinement head. Every pixel's joint vector [F | Y0 | P] goes
// through a shared two-layer perceptron (1x1 convolution semantics):
//
//   h      = tanh(W1^T z + b1)
//   dY     = scale * tanh(W2^T h + b2)
//   Y1     = clamp(Y0 + dY, 1e-6, 1)
//
// The head (W2, b2) starts at zero so the refined mask starts at Y0.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <utility>
#include <vector>

#include "priorseg/error.hpp"
#include "priorseg/grid.hpp"
#include "priorseg/losses.hpp"
#include "priorseg/pckg.hpp"
#include "priorseg/synth.hpp"

namespace priorseg {

inline constexpr double kRefinedFloor = 1e-6;

/// Graph-level standardization of physical channels: per modality, the mean
/// and spread of the class interval midpoints.
struct PhysNormalization {
  std::array<double, kModalityCount> mean{};
  std::array<double, kModalityCount> scale{1.0, 1.0, 1.0};
};

inline PhysNormalization physical_normalization(const Pckg& graph) {
  PhysNormalization n;
  if (graph.empty()) return n;
  const double count = static_cast<double>(graph.size());
  for (Modality m : kAllModalities) {
    const std::size_t k = index_of(m);
    double sum = 0.0, half = 0.0;
    for (const auto& e : graph.entries()) {
      sum += e.range(m).midpoint();
      half += 0.5 * e.range(m).width();
    }
    const double mean = sum / count;
    double var = 0.0;
    for (const auto& e : graph.entries()) var += std::pow(e.range(m).midpoint() - mean, 2);
    double scale = std::sqrt(var / count);
    // all midpoints equal: fall back to the typical half-width
    if (scale < 1e-9) scale = half / count;
    if (scale < 1e-9) scale = 1.0;
    n.mean[k] = mean;
    n.scale[k] = scale;
  }
  return n;
}

/// Per-pixel channels laid out as [features (D) | coarse (C) | NDVI, DEM, SAR].
/// Physical slots of absent modalities hold zeros.
struct JointTensor : PixelGrid<double> {
  std::size_t feature_dims = 0;
  std::size_t classes = 0;
  std::set<Modality> present;

  [[nodiscard]] std::size_t channels() const noexcept { return depth(); }
  [[nodiscard]] std::size_t physical_offset() const noexcept { return feature_dims + classes; }
};

/// `available` restricts which supplied rasters are used; rasters outside it
/// are ignored and their slots stay zero.
inline JointTensor assemble_joint(const FeatureMap& features, const ProbMap& coarse, const RasterSet& rasters,
                                  const Pckg& graph, const std::set<Modality>* available = nullptr) {
  if (!coarse.same_extent(features))
    throw DimensionError("coarse prediction is " + std::to_string(coarse.height()) + "x" + std::to_string(coarse.width()) +
                         " but features are " + std::to_string(features.height()) + "x" + std::to_string(features.width()));
  if (coarse.classes() != graph.size())
    throw DimensionError("coarse prediction has " + std::to_string(coarse.classes()) + " classes but the graph has " +
                         std::to_string(graph.size()));
  for (const auto& [m, r] : rasters)
    if (!r.same_extent(features))
      throw DimensionError(std::string(to_string(m)) + " raster is " + std::to_string(r.height()) + "x" +
                           std::to_string(r.width()) + ", expected " + std::to_string(features.height()) + "x" +
                           std::to_string(features.width()));

  const std::size_t D = features.dims(), C = coarse.classes();
  JointTensor z;
  static_cast<PixelGrid<double>&>(z) = PixelGrid<double>(features.height(), features.width(), D + C + kModalityCount, 0.0);
  z.feature_dims = D;
  z.classes = C;
  const PhysNormalization norm = physical_normalization(graph);
  for (std::size_t i = 0; i < z.pixels(); ++i) {
    auto px = z.pixel(i);
    for (std::size_t d = 0; d < D; ++d) px[d] = features(i, d);
    for (std::size_t c = 0; c < C; ++c) px[D + c] = coarse(i, c);
  }
  for (const auto& [m, r] : rasters) {
    if (available && !available->contains(m)) continue;
    z.present.insert(m);
    const std::size_t k = index_of(m);
    for (std::size_t i = 0; i < z.pixels(); ++i) z(i, D + C + k) = (r(i) - norm.mean[k]) / norm.scale[k];
  }
  return z;
}

struct RefinerParams {
  std::size_t feature_dims = 0;  // D
  std::size_t classes = 0;       // C
  std::size_t modalities = kModalityCount;  // M
  std::size_t hidden = 0;        // H
  std::vector<double> fusion_w;  // (D+C+M) x H, row-major
  std::vector<double> fusion_b;  // H
  std::vector<double> head_w;    // H x C, row-major
  std::vector<double> head_b;    // C
  double residual_scale = 0.5;

  [[nodiscard]] std::size_t inputs() const noexcept { return feature_dims + classes + modalities; }

  [[nodiscard]] bool finite() const {
    const auto ok = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    return ok(fusion_w) && ok(fusion_b) && ok(head_w) && ok(head_b) && std::isfinite(residual_scale);
  }

  /// Same shapes, all zeros. Used as a gradient accumulator.
  [[nodiscard]] RefinerParams zeros_like() const {
    RefinerParams g = *this;
    for (auto* v : {&g.fusion_w, &g.fusion_b, &g.head_w, &g.head_b}) std::fill(v->begin(), v->end(), 0.0);
    g.residual_scale = 0.0;
    return g;
  }

  /// Visits every trainable scalar (not residual_scale) in file order.
  template <typename Fn>
  void for_each_weight(Fn&& fn) {
    for (auto* v : {&fusion_w, &fusion_b, &head_w, &head_b})
      for (double& x : *v) fn(x);
  }
  template <typename Fn>
  void for_each_weight(Fn&& fn) const {
    for (const auto* v : {&fusion_w, &fusion_b, &head_w, &head_b})
      for (const double& x : *v) fn(x);
  }

  friend bool operator==(const RefinerParams&, const RefinerParams&) = default;
};

/// Fusion weights ~ N(0, 1/inputs), head zero.
inline RefinerParams init_params(std::size_t feature_dims, std::size_t classes, std::size_t hidden, std::uint64_t seed,
                                 double residual_scale = 0.5) {
  RefinerParams p;
  p.feature_dims = feature_dims;
  p.classes = classes;
  p.hidden = hidden;
  p.residual_scale = residual_scale;
  p.fusion_w.resize(p.inputs() * hidden);
  p.fusion_b.assign(hidden, 0.0);
  p.head_w.assign(hidden * classes, 0.0);
  p.head_b.assign(classes, 0.0);
  std::mt19937_64 rng(mix_seed(seed ^ 0xF051ULL));
  std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(p.inputs())));
  for (double& w : p.fusion_w) w = n(rng);
  return p;
}

struct Refined {
  ProbMap refined;  // Y1
  ProbMap residual;  // dY
};

namespace detail {

inline void check_refine_shapes(const RefinerParams& params, const JointTensor& z, const ProbMap& coarse) {
  if (z.channels() != params.inputs())
    throw DimensionError("joint tensor has " + std::to_string(z.channels()) + " channels, parameters expect " +
                         std::to_string(params.inputs()));
  if (coarse.classes() != params.classes || !coarse.same_extent(z))
    throw DimensionError("coarse prediction does not match the joint tensor / parameters");
}

/// Forward pass for one pixel. Fills hidden activations and pre-clamp output.
inline void forward_pixel(const RefinerParams& p, std::span<const double> z, std::span<const double> y0,
                          std::vector<double>& hidden, std::vector<double>& squashed, std::span<double> y1,
                          std::span<double> delta) {
  const std::size_t H = p.hidden, C = p.classes, I = p.inputs();
  hidden.assign(p.fusion_b.begin(), p.fusion_b.end());
  for (std::size_t in = 0; in < I; ++in) {
    const double x = z[in];
    if (x == 0.0) continue;
    const double* w = p.fusion_w.data() + in * H;
    for (std::size_t h = 0; h < H; ++h) hidden[h] += x * w[h];
  }
  for (double& h : hidden) h = std::tanh(h);
  squashed.assign(p.head_b.begin(), p.head_b.end());
  for (std::size_t h = 0; h < H; ++h) {
    const double a = hidden[h];
    const double* w = p.head_w.data() + h * C;
    for (std::size_t c = 0; c < C; ++c) squashed[c] += a * w[c];
  }
  for (std::size_t c = 0; c < C; ++c) {
    squashed[c] = std::tanh(squashed[c]);
    delta[c] = p.residual_scale * squashed[c];
    y1[c] = std::clamp(y0[c] + delta[c], kRefinedFloor, 1.0);
  }
}

}  // namespace detail

inline Refined refine(const RefinerParams& params, const JointTensor& z, const ProbMap& coarse) {
  detail::check_refine_shapes(params, z, coarse);
  if (!params.finite()) throw NumericError("refiner parameters contain non-finite values");
  Refined out{ProbMap(coarse.height(), coarse.width(), coarse.classes()),
              ProbMap(coarse.height(), coarse.width(), coarse.classes())};
  std::vector<double> hidden, squashed;
  for (std::size_t i = 0; i < z.pixels(); ++i)
    detail::forward_pixel(params, z.pixel(i), coarse.pixel(i), hidden, squashed, out.refined.pixel(i),
                          out.residual.pixel(i));
  return out;
}

/// Adds d(loss)/d(params) to `grad`, given d(loss)/d(Y1). Recomputes the
/// forward pass pixel by pixel.
inline void accumulate_gradient(const RefinerParams& params, const JointTensor& z, const ProbMap& coarse,
                                const ProbMap& grad_refined, RefinerParams& grad, double weight = 1.0) {
  detail::check_refine_shapes(params, z, coarse);
  const std::size_t H = params.hidden, C = params.classes, I = params.inputs();
  std::vector<double> hidden, squashed, y1(C), delta(C), d_out(C), d_hidden(H);
  for (std::size_t i = 0; i < z.pixels(); ++i) {
    const auto zi = z.pixel(i);
    const auto y0 = coarse.pixel(i);
    detail::forward_pixel(params, zi, y0, hidden, squashed, y1, delta);
    bool any = false;
    for (std::size_t c = 0; c < C; ++c) {
      const double pre = y0[c] + delta[c];
      const bool inside = pre > kRefinedFloor && pre < 1.0;
      // through clamp, scale and the output tanh
      d_out[c] = inside ? weight * grad_refined(i, c) * params.residual_scale * (1.0 - squashed[c] * squashed[c]) : 0.0;
      any = any || d_out[c] != 0.0;
    }
    if (!any) continue;
    std::fill(d_hidden.begin(), d_hidden.end(), 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      const double* w = params.head_w.data() + h * C;
      double* gw = grad.head_w.data() + h * C;
      double acc = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        gw[c] += hidden[h] * d_out[c];
        acc += w[c] * d_out[c];
      }
      d_hidden[h] = acc * (1.0 - hidden[h] * hidden[h]);
    }
    for (std::size_t c = 0; c < C; ++c) grad.head_b[c] += d_out[c];
    for (std::size_t h = 0; h < H; ++h) grad.fusion_b[h] += d_hidden[h];
    for (std::size_t in = 0; in < I; ++in) {
      const double x = zi[in];
      if (x == 0.0) continue;
      double* gw = grad.fusion_w.data() + in * H;
      for (std::size_t h = 0; h < H; ++h) gw[h] += x * d_hidden[h];
    }
  }
}

// ---------------------------------------------------------------------------
// Parameter file: "PSPARAMS v1 D C M H", then fusion weights (one row per
// input channel), fusion bias, head weights (one row per hidden unit), head
// bias, residual scale. Lines starting with '#' are comments.
// ---------------------------------------------------------------------------

inline std::string format_params(const RefinerParams& p, const std::vector<std::string>& comments = {}) {
  std::ostringstream os;
  os << "PSPARAMS v1 " << p.feature_dims << ' ' << p.classes << ' ' << p.modalities << ' ' << p.hidden << '\n';
  for (const auto& c : comments) os << "# " << c << '\n';
  const auto row = [&](const double* v, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) os << (k ? " " : "") << format_double(v[k]);
    os << '\n';
  };
  for (std::size_t in = 0; in < p.inputs(); ++in) row(p.fusion_w.data() + in * p.hidden, p.hidden);
  row(p.fusion_b.data(), p.hidden);
  for (std::size_t h = 0; h < p.hidden; ++h) row(p.head_w.data() + h * p.classes, p.classes);
  row(p.head_b.data(), p.classes);
  os << format_double(p.residual_scale) << '\n';
  return os.str();
}

inline RefinerParams parse_params(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw ParseError("params: empty input");
  std::istringstream hdr(line);
  std::string magic, version;
  RefinerParams p;
  hdr >> magic >> version >> p.feature_dims >> p.classes >> p.modalities >> p.hidden;
  if (magic != "PSPARAMS" || version != "v1" || !hdr) throw ParseError("params: bad header '" + line + "'");
  if (p.modalities != kModalityCount) throw ParseError("params: expected M = 3 physical channels");
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) {
      double v = 0;
      auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) throw ParseError("params: bad number '" + tok + "'");
      values.push_back(v);
    }
  }
  const std::size_t need = p.inputs() * p.hidden + p.hidden + p.hidden * p.classes + p.classes + 1;
  if (values.size() != need)
    throw ParseError("params: expected " + std::to_string(need) + " values, found " + std::to_string(values.size()));
  auto it = values.begin();
  const auto take = [&](std::vector<double>& dst, std::size_t n) {
    dst.assign(it, it + static_cast<std::ptrdiff_t>(n));
    it += static_cast<std::ptrdiff_t>(n);
  };
  take(p.fusion_w, p.inputs() * p.hidden);
  take(p.fusion_b, p.hidden);
  take(p.head_w, p.hidden * p.classes);
  take(p.head_b, p.classes);
  p.residual_scale = *it;
  return p;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  std::uint64_t seed = 0;
  double learning_rate = 0.05;
  int epochs = 200;
  std::size_t batch_size = 0;  // scenes per step; 0 = full batch
  LossWeights weights;
  double modality_dropout_prob = 0.5;
  std::size_t hidden = 32;
  double residual_scale = 0.5;
  PhysGradient phys_gradient = PhysGradient::soft;
  DiceMode dice_mode = DiceMode::loss;

  void validate() const {
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
    if (!(modality_dropout_prob >= 0 && modality_dropout_prob <= 1))
      throw ConfigError("modality_dropout_prob must be in [0, 1]");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (hidden == 0) throw ConfigError("hidden width must be > 0");
    weights.validate();
  }
};

struct Scene {
  FeatureMap features;
  ProbMap coarse;
  RasterSet rasters;
  LabelMask gt;
};

struct LossRecord {
  int step = 0;
  double seg = 0.0;
  double region = 0.0;
  double phys = 0.0;
  double total = 0.0;
};

struct TrainResult {
  RefinerParams params;
  std::vector<LossRecord> history;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, RefinerParams last_finite, int step)
      : Error(what), last_finite_(std::move(last_finite)), step_(step) {}
  [[nodiscard]] ErrorClass error_class() const noexcept override { return ErrorClass::runtime; }
  [[nodiscard]] const char* kind() const noexcept override { return "training"; }
  [[nodiscard]] const RefinerParams& last_finite() const noexcept { return last_finite_; }
  [[nodiscard]] int step() const noexcept { return step_; }

 private:
  RefinerParams last_finite_;
  int step_;
};

/// Loss and parameter gradient of one scene under the training objective.
inline ObjectiveEval scene_objective(const RefinerParams& params, const JointTensor& z, const Scene& s,
                                     const Pckg& graph, const TrainConfig& cfg, RefinerParams* grad,
                                     double weight = 1.0) {
  const Refined r = refine(params, z, s.coarse);
  ObjectiveEval ev =
      training_objective(r.refined, s.gt, s.features, s.rasters, graph, cfg.weights, cfg.phys_gradient, cfg.dice_mode);
  if (grad) accumulate_gradient(params, z, s.coarse, ev.grad_pred, *grad, weight);
  return ev;
}

/// Plain gradient descent on the joint objective. With probability
/// `modality_dropout_prob` a scene's physical channels are zeroed for a step,
/// so one weight set serves both inference modes.
inline TrainResult train(const std::vector<Scene>& dataset, const Pckg& graph, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw InputError("train: empty dataset");
  const std::size_t D = dataset.front().features.dims();
  const std::size_t C = graph.size();
  for (const auto& s : dataset) {
    if (s.features.dims() != D) throw DimensionError("train: scenes disagree on feature width");
    if (!s.gt.same_extent(s.features)) throw DimensionError("train: ground truth not aligned with features");
  }

  std::vector<JointTensor> with_phys, without_phys;
  const std::set<Modality> none;
  for (const auto& s : dataset) {
    with_phys.push_back(assemble_joint(s.features, s.coarse, s.rasters, graph));
    without_phys.push_back(assemble_joint(s.features, s.coarse, s.rasters, graph, &none));
  }

  TrainResult out;
  out.params = init_params(D, C, cfg.hidden, cfg.seed, cfg.residual_scale);
  TrainConfig visual_cfg = cfg;
  visual_cfg.weights.lambda2 = 0.0;
  std::mt19937_64 rng(mix_seed(cfg.seed ^ 0x7EA1ULL));
  std::bernoulli_distribution drop(cfg.modality_dropout_prob);

  const std::size_t n = dataset.size();
  const std::size_t batch = cfg.batch_size == 0 ? n : std::min(cfg.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (batch < n) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      const double w = 1.0 / static_cast<double>(stop - start);
      RefinerParams grad = out.params.zeros_like();
      LossRecord rec;
      rec.step = step;
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t idx = order[b];
        const bool dropped = drop(rng);
        const JointTensor& z = dropped ? without_phys[idx] : with_phys[idx];
        // a dropped scene is seen without its rasters, so the physics term has
        // no input it could act through
        const ObjectiveEval ev =
            scene_objective(out.params, z, dataset[idx], graph, dropped ? visual_cfg : cfg, &grad, w);
        // the history always reports the exact loss with rasters present
        const LossBreakdown lb =
            dropped ? scene_objective(out.params, with_phys[idx], dataset[idx], graph, cfg, nullptr).breakdown
                    : ev.breakdown;
        rec.seg += w * lb.seg;
        rec.region += w * lb.region;
        rec.phys += w * lb.phys;
        rec.total += w * lb.total;
      }
      if (!std::isfinite(rec.total) || !grad.finite())
        throw TrainingError("training diverged at step " + std::to_string(step), out.params, step);
      out.history.push_back(rec);

      RefinerParams next = out.params;
      const auto sgd = [&](std::vector<double>& p, const std::vector<double>& d) {
        for (std::size_t k = 0; k < p.size(); ++k) p[k] -= cfg.learning_rate * d[k];
      };
      sgd(next.fusion_w, grad.fusion_w);
      sgd(next.fusion_b, grad.fusion_b);
      sgd(next.head_w, grad.head_w);
      sgd(next.head_b, grad.head_b);
      if (!next.finite()) throw TrainingError("training diverged at step " + std::to_string(step), out.params, step);
      out.params = std::move(next);
      ++step;
    }
  }
  return out;
}

inline std::string format_history_csv(const std::vector<LossRecord>& history,
                                      const std::vector<std::string>& comments = {}) {
  std::ostringstream os;
  for (const auto& c : comments) os << "# " << c << '\n';
  os << "step,seg,region,phys,total\n";
  for (const auto& r : history)
    os << r.step << ',' << format_double(r.seg) << ',' << format_double(r.region) << ',' << format_double(r.phys) << ','
       << format_double(r.total) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Mock backbone
// ---------------------------------------------------------------------------

struct MockBackboneConfig {
  double feature_noise = 0.1;
  double confidence = 0.9;       // mass on the true class (or shared by an ambiguous group)
  double ambiguity_jitter = 0.05;
};

struct BackboneOutput {
  FeatureMap features;
  ProbMap coarse;
};

/// Stand-in for a frozen segmentation backbone. Features are a noisy one-hot
/// of the class's visual appearance; classes joined by an ambiguity pair share
/// one appearance, and their coarse scores split roughly evenly.
inline BackboneOutput mock_backbone(const LabelMask& scene, const Pckg& graph,
                                    const std::vector<std::pair<int, int>>& ambiguity, std::uint64_t seed,
                                    const MockBackboneConfig& cfg = {}) {
  const std::size_t C = graph.size();
  if (C == 0) throw InputError("mock_backbone: empty graph");
  for (auto [a, b] : ambiguity)
    if (!graph.has_class(a) || !graph.has_class(b) || a == b)
      throw InputError("mock_backbone: invalid ambiguity pair (" + std::to_string(a) + ", " + std::to_string(b) + ")");
  check_mask_resolves(scene, graph);

  // appearance[c] = smallest class id reachable through ambiguity pairs
  std::vector<int> look(C + 1);
  std::iota(look.begin(), look.end(), 0);
  for (bool changed = true; changed;) {
    changed = false;
    for (auto [a, b] : ambiguity) {
      const int m = std::min(look[static_cast<std::size_t>(a)], look[static_cast<std::size_t>(b)]);
      for (int c : {a, b})
        if (look[static_cast<std::size_t>(c)] != m) {
          look[static_cast<std::size_t>(c)] = m;
          changed = true;
        }
    }
  }

  BackboneOutput out{FeatureMap(scene.height(), scene.width(), C, 0.0), ProbMap(scene.height(), scene.width(), C, 0.0)};
  std::mt19937_64 rng(mix_seed(seed ^ 0xBAC6B0E1ULL));
  std::normal_distribution<double> feat_noise(0.0, cfg.feature_noise);
  std::normal_distribution<double> jitter(0.0, cfg.ambiguity_jitter);

  for (std::size_t i = 0; i < scene.pixels(); ++i) {
    const int y = scene(i);
    for (std::size_t d = 0; d < C; ++d) out.features(i, d) = feat_noise(rng);
    if (y == 0) {
      for (std::size_t c = 0; c < C; ++c) out.coarse(i, c) = 1.0 / static_cast<double>(C);
      continue;
    }
    const int appearance = look[static_cast<std::size_t>(y)];
    out.features(i, static_cast<std::size_t>(appearance - 1)) += 1.0;

    std::vector<std::size_t> group;
    for (std::size_t c = 1; c <= C; ++c)
      if (look[c] == appearance) group.push_back(c - 1);
    const double others = C > group.size() ? (1.0 - cfg.confidence) / static_cast<double>(C - group.size()) : 0.0;
    const double in_group = C > group.size() ? cfg.confidence : 1.0;
    for (std::size_t c = 0; c < C; ++c) out.coarse(i, c) = others;
    if (group.size() == 1) {
      out.coarse(i, group[0]) = in_group;
      continue;
    }
    std::vector<double> share(group.size());
    double total = 0.0;
    for (auto& s : share) {
      s = std::max(0.05, 1.0 + jitter(rng) * static_cast<double>(group.size()));
      total += s;
    }
    for (std::size_t g = 0; g < group.size(); ++g) out.coarse(i, group[g]) = in_group * share[g] / total;
  }
  return out;
}

}  // namespace priorseg
