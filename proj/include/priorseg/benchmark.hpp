#pragma once

// Toy ambiguity benchmark: four land-cover classes, two of which (metal and
// concrete roofs) look identical to the backbone and differ only in SAR
// backscatter. Used by the ablation ladder and the acceptance suite.

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <random>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "priorseg/inference.hpp"
#include "priorseg/metrics.hpp"
#include "priorseg/pckg.hpp"
#include "priorseg/refiner.hpp"
#include "priorseg/synth.hpp"

namespace priorseg {

inline constexpr std::string_view kToyGraphJson = R"([
  {
    "Category": "tree canopy",
    "Meaning": "Closed crowns of broadleaf trees.",
    "Modifier Analysis": "'tree' sets the object; 'canopy' restricts it to the crown layer seen from above.",
    "Coarse Class": "vegetation",
    "NDVI Range": [0.60, 0.90],
    "DEM Range": [20.00, 60.00],
    "SAR Range": [-10.00, -6.00],
    "Reasoning": "Dense healthy foliage reflects strongly in NIR, giving high NDVI; canopies sit on gentle slopes above the river plain; volume scattering from leaves gives moderate backscatter."
  },
  {
    "Category": "river water",
    "Meaning": "Open water in a river channel.",
    "Modifier Analysis": "'river' marks flowing inland water at the valley floor.",
    "Coarse Class": "water",
    "NDVI Range": [-0.50, 0.05],
    "DEM Range": [0.00, 15.00],
    "SAR Range": [-25.00, -18.00],
    "Reasoning": "Water absorbs NIR so NDVI is negative; rivers occupy the lowest terrain; the smooth surface reflects radar away from the sensor, giving very low backscatter."
  },
  {
    "Category": "metal roof",
    "Meaning": "Buildings covered with corrugated metal sheets.",
    "Modifier Analysis": "'metal' sets the roof material, which dominates the radar response.",
    "Coarse Class": "building",
    "NDVI Range": [-0.10, 0.15],
    "DEM Range": [15.00, 40.00],
    "SAR Range": [0.00, 8.00],
    "Reasoning": "Roofs carry no vegetation so NDVI is near zero; buildings stand on the terrace above the river; metal and wall-ground dihedrals produce strong bright backscatter."
  },
  {
    "Category": "concrete roof",
    "Meaning": "Buildings with flat concrete roofs.",
    "Modifier Analysis": "'concrete' sets the roof material; flat slabs scatter radar weakly compared with metal.",
    "Coarse Class": "building",
    "NDVI Range": [-0.10, 0.15],
    "DEM Range": [15.00, 40.00],
    "SAR Range": [-14.00, -8.00],
    "Reasoning": "Same built-up setting and NDVI as other roofs; a flat rough concrete surface yields moderate diffuse backscatter well below metal."
  }
])";

inline Pckg toy_graph() { return parse_pckg(kToyGraphJson); }

/// Voronoi partition with `cells` sites; site k gets class (k mod C) + 1 so
/// every class appears.
inline LabelMask voronoi_mask(std::size_t height, std::size_t width, int classes, std::size_t cells,
                              std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed ^ 0x70E0ULL));
  std::uniform_real_distribution<double> ur(0.0, static_cast<double>(height));
  std::uniform_real_distribution<double> uc(0.0, static_cast<double>(width));
  std::vector<std::pair<double, double>> sites(cells);
  for (auto& s : sites) s = {ur(rng), uc(rng)};
  LabelMask m(height, width);
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) {
      std::size_t best = 0;
      double bd = 1e300;
      for (std::size_t k = 0; k < cells; ++k) {
        const double dr = sites[k].first - static_cast<double>(r), dc = sites[k].second - static_cast<double>(c);
        const double d = dr * dr + dc * dc;
        if (d < bd) {
          bd = d;
          best = k;
        }
      }
      m.at(r, c) = static_cast<int>(best % static_cast<std::size_t>(classes)) + 1;
    }
  return m;
}

struct ToyBenchmarkConfig {
  std::uint64_t seed = 7;
  std::size_t scenes = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t cells = 12;
  std::vector<std::pair<int, int>> ambiguity{{3, 4}};
  SynthConfig synth{};
};

struct ToyBenchmark {
  Pckg graph;
  std::vector<std::pair<int, int>> ambiguity;
  std::vector<Scene> scenes;
};

inline ToyBenchmark make_toy_benchmark(const ToyBenchmarkConfig& cfg = {}) {
  ToyBenchmark b{toy_graph(), cfg.ambiguity, {}};
  const std::set<Modality> all(kAllModalities.begin(), kAllModalities.end());
  for (std::size_t s = 0; s < cfg.scenes; ++s) {
    const std::uint64_t scene_seed = mix_seed(cfg.seed + 1000 * (s + 1));
    Scene sc;
    sc.gt = voronoi_mask(cfg.height, cfg.width, static_cast<int>(b.graph.size()), cfg.cells, scene_seed);
    auto bb = mock_backbone(sc.gt, b.graph, b.ambiguity, scene_seed ^ 0xB);
    sc.features = std::move(bb.features);
    sc.coarse = std::move(bb.coarse);
    SynthConfig synth = cfg.synth;
    synth.seed = scene_seed ^ 0x5;
    sc.rasters = synthesize_scene(sc.gt, b.graph, all, synth);
    b.scenes.push_back(std::move(sc));
  }
  return b;
}

/// Pixel accuracy restricted to pixels whose ground truth is in `classes`.
inline double accuracy_on(const LabelMask& pred, const LabelMask& gt, const std::set<int>& classes) {
  std::size_t n = 0, ok = 0;
  for (std::size_t i = 0; i < gt.pixels(); ++i) {
    if (!classes.contains(gt(i))) continue;
    ++n;
    ok += pred(i) == gt(i);
  }
  return n ? static_cast<double>(ok) / static_cast<double>(n) : 0.0;
}

/// mIoU over a set of scenes from the pooled confusion matrix.
inline double pooled_miou(const std::vector<LabelMask>& preds, const std::vector<Scene>& scenes, std::size_t classes) {
  std::size_t total = 0;
  for (const auto& s : scenes) total += s.gt.pixels();
  LabelMask p(1, total), g(1, total);
  std::size_t k = 0;
  for (std::size_t s = 0; s < scenes.size(); ++s)
    for (std::size_t i = 0; i < scenes[s].gt.pixels(); ++i, ++k) {
      p(k) = preds[s](i);
      g(k) = scenes[s].gt(i);
    }
  return miou(p, g, classes).miou;
}

// ---------------------------------------------------------------------------
// Ablation ladder
// ---------------------------------------------------------------------------

/// Reference-like raster: unclipped Gaussian around each class midpoint with
/// standard deviation spread * width / 4, so a share of pixels falls outside
/// the interval the way field measurements do.
inline Raster reference_raster(const LabelMask& mask, const Pckg& graph, Modality m, double spread,
                               std::uint64_t seed, double background = 0.0) {
  check_mask_resolves(mask, graph);
  Raster r(m, mask.height(), mask.width());
  for (std::size_t row = 0; row < mask.height(); ++row) {
    std::mt19937_64 rng(mix_seed(modality_seed(seed, m) + row));
    for (std::size_t col = 0; col < mask.width(); ++col) {
      const int c = mask.at(row, col);
      if (c == 0) {
        r.at(row, col) = background;
        continue;
      }
      const Interval& iv = graph.interval(c, m);
      const double sd = spread * iv.width() / 4.0;
      if (!(sd > 0.0)) {
        r.at(row, col) = iv.midpoint();
        continue;
      }
      std::normal_distribution<double> n(iv.midpoint(), sd);
      r.at(row, col) = n(rng);
    }
  }
  return r;
}

struct AblationFlags {
  bool use_synth_data = false;
  bool use_pckg_reweight = false;
  bool use_phys_loss = false;

  [[nodiscard]] std::string name() const {
    if (!use_synth_data && !use_pckg_reweight && !use_phys_loss) return "none";
    std::string n;
    if (use_synth_data) n += "+synth";
    if (use_pckg_reweight) n += "+reweight";
    if (use_phys_loss) n += "+phys";
    return n;
  }
};

struct AblationConfig {
  ToyBenchmarkConfig bench{};
  TrainConfig train{};
  std::uint64_t test_seed_offset = 500;  // held-out scenes come from bench.seed + offset
  std::array<double, kModalityCount> reference_spread{1.0, 1.0, 1.5};
  AttenuationConfig attenuation{};
};

struct AblationRow {
  AblationFlags flags;
  double miou = 0.0;
  double ambiguous_accuracy = 0.0;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  bool ordered = true;  // strictly increasing mIoU down the rows
  std::vector<std::string> violations;
};

/// Held-out evaluation scenes with reference-like rasters.
inline ToyBenchmark ablation_test_set(const AblationConfig& cfg) {
  ToyBenchmarkConfig tc = cfg.bench;
  tc.seed = cfg.bench.seed + cfg.test_seed_offset;
  ToyBenchmark test = make_toy_benchmark(tc);
  for (std::size_t s = 0; s < test.scenes.size(); ++s)
    for (Modality m : kAllModalities)
      test.scenes[s].rasters[m] =
          reference_raster(test.scenes[s].gt, test.graph, m, cfg.reference_spread[index_of(m)],
                           mix_seed(tc.seed ^ (0xAB1A7E00ULL + s)), cfg.bench.synth.background_fill[index_of(m)]);
  return test;
}

/// Runs one configuration. Without synthetic training data there is no
/// refiner and the coarse map is used as is; the phys-loss flag then has
/// nothing to act on.
inline AblationRow run_ablation_row(const ToyBenchmark& train_set, const ToyBenchmark& test_set,
                                    const AblationFlags& flags, const AblationConfig& cfg) {
  std::optional<RefinerParams> params;
  if (flags.use_synth_data) {
    TrainConfig tc = cfg.train;
    if (!flags.use_phys_loss) tc.weights.lambda2 = 0.0;
    params = train(train_set.scenes, train_set.graph, tc).params;
  }
  AttenuationConfig ac = cfg.attenuation;
  ac.available = flags.use_pckg_reweight ? std::set<Modality>(kAllModalities.begin(), kAllModalities.end())
                                         : std::set<Modality>{};
  std::set<int> ambiguous;
  for (auto [a, b] : test_set.ambiguity) ambiguous.insert({a, b});

  std::vector<LabelMask> preds;
  std::size_t amb_n = 0;
  double amb_ok = 0.0;
  for (const auto& s : test_set.scenes) {
    ProbMap probs = s.coarse;
    if (params) probs = refine(*params, assemble_joint(s.features, s.coarse, s.rasters, test_set.graph), s.coarse).refined;
    LabelMask labels = reweight(probs, s.rasters, test_set.graph, ac).labels;
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.gt.pixels(); ++i) n += ambiguous.contains(s.gt(i));
    amb_ok += accuracy_on(labels, s.gt, ambiguous) * static_cast<double>(n);
    amb_n += n;
    preds.push_back(std::move(labels));
  }
  return {flags, pooled_miou(preds, test_set.scenes, test_set.graph.size()),
          amb_n ? amb_ok / static_cast<double>(amb_n) : 0.0};
}

inline const std::vector<AblationFlags>& ablation_ladder() {
  static const std::vector<AblationFlags> ladder{
      {false, false, false}, {true, false, false}, {true, true, false}, {true, true, true}};
  return ladder;
}

inline AblationTable run_ablation(const AblationConfig& cfg,
                                  const std::vector<AblationFlags>& rows = ablation_ladder()) {
  const ToyBenchmark train_set = make_toy_benchmark(cfg.bench);
  const ToyBenchmark test_set = ablation_test_set(cfg);
  AblationTable t;
  for (const auto& f : rows) t.rows.push_back(run_ablation_row(train_set, test_set, f, cfg));
  for (std::size_t k = 1; k < t.rows.size(); ++k)
    if (!(t.rows[k].miou > t.rows[k - 1].miou)) {
      t.ordered = false;
      t.violations.push_back(t.rows[k].flags.name() + " (" + format_double(t.rows[k].miou) + ") does not exceed " +
                             t.rows[k - 1].flags.name() + " (" + format_double(t.rows[k - 1].miou) + ")");
    }
  return t;
}

inline nlohmann::ordered_json to_json(const AblationTable& t) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const auto& r = t.rows[k];
    rows.push_back({{"row", r.flags.name()},
                    {"use_synth_data", r.flags.use_synth_data},
                    {"use_pckg_reweight", r.flags.use_pckg_reweight},
                    {"use_phys_loss", r.flags.use_phys_loss},
                    {"miou", r.miou},
                    {"delta", k ? r.miou - t.rows[k - 1].miou : 0.0},
                    {"ambiguous_accuracy", r.ambiguous_accuracy}});
  }
  return {{"rows", rows}, {"ordered", t.ordered}, {"violations", t.violations}};
}

inline std::string format_ablation_text(const AblationTable& t) {
  std::ostringstream os;
  os << std::left << std::setw(26) << "row" << std::right << std::setw(10) << "mIoU" << std::setw(10) << "delta"
     << std::setw(12) << "amb.acc" << '\n';
  os << std::fixed;
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const auto& r = t.rows[k];
    os << std::left << std::setw(26) << r.flags.name() << std::right << std::setprecision(2) << std::setw(10)
       << 100.0 * r.miou;
    if (k)
      os << std::showpos << std::setw(10) << 100.0 * (r.miou - t.rows[k - 1].miou) << std::noshowpos;
    else
      os << std::setw(10) << "";
    os << std::setw(12) << 100.0 * r.ambiguous_accuracy << '\n';
  }
  for (const auto& v : t.violations) os << "ordering violated: " << v << '\n';
  return os.str();
}

}  // namespace priorseg
