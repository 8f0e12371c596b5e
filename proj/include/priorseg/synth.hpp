#pragma once

// Interval-constrained synthetic rasters drawn from a label mask.

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <thread>
#include <vector>

#include "priorseg/error.hpp"
#include "priorseg/grid.hpp"
#include "priorseg/pckg.hpp"

namespace priorseg {

enum class NoiseModel { uniform, truncated_gaussian };

struct SynthConfig {
  std::uint64_t seed = 0;
  NoiseModel noise_model = NoiseModel::truncated_gaussian;
  int smoothing_radius = 1;
  std::array<double, kModalityCount> background_fill{0.0, 0.0, -30.0};
  unsigned workers = 1;  // row-parallelism; output does not depend on it
};

/// SplitMix64 finalizer, used to derive independent sub-seeds.
inline constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t modality_seed(std::uint64_t seed, Modality m) noexcept {
  return mix_seed(seed ^ mix_seed(0x5EED0000ULL + index_of(m)));
}

/// One draw from the configured law, always inside [lo, hi].
template <typename Rng>
double sample_in_interval(const Interval& iv, NoiseModel model, Rng& rng) {
  if (iv.hi <= iv.lo) return iv.lo;
  if (model == NoiseModel::uniform) {
    std::uniform_real_distribution<double> u(iv.lo, iv.hi);
    return std::clamp(u(rng), iv.lo, iv.hi);
  }
  std::normal_distribution<double> n(iv.midpoint(), iv.width() / 4.0);
  for (int tries = 0; tries < 64; ++tries) {
    const double v = n(rng);
    if (iv.contains(v)) return v;
  }
  return std::clamp(n(rng), iv.lo, iv.hi);
}

inline void check_mask_resolves(const LabelMask& mask, const Pckg& graph) {
  for (std::size_t i = 0; i < mask.pixels(); ++i) {
    const int c = mask(i);
    if (c != 0 && !graph.has_class(c))
      throw SynthesisError("label " + std::to_string(c) + " does not resolve in the graph (" +
                           std::to_string(graph.size()) + " classes)");
  }
}

namespace detail {

template <typename RowFn>
void for_each_row(std::size_t rows, unsigned workers, RowFn&& fn) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(rows, 1))));
  if (workers == 1) {
    for (std::size_t r = 0; r < rows; ++r) fn(r);
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t r = w; r < rows; r += workers) fn(r);
    });
  for (auto& t : pool) t.join();
}

}  // namespace detail

inline Raster synthesize_raster(const LabelMask& mask, const Pckg& graph, Modality modality, const SynthConfig& config) {
  if (config.smoothing_radius < 0) throw ConfigError("smoothing_radius must be >= 0");
  check_mask_resolves(mask, graph);

  const std::size_t H = mask.height(), W = mask.width();
  const double fill = config.background_fill[index_of(modality)];
  const std::uint64_t base = modality_seed(config.seed, modality);

  Raster out(modality, H, W, fill);
  detail::for_each_row(H, config.workers, [&](std::size_t r) {
    std::mt19937_64 rng(mix_seed(base ^ mix_seed(r + 1)));
    for (std::size_t c = 0; c < W; ++c) {
      const int cls = mask.at(r, c);
      if (cls != 0) out.at(r, c) = sample_in_interval(graph.interval(cls, modality), config.noise_model, rng);
    }
  });

  if (config.smoothing_radius == 0) return out;

  // Box blur over labeled neighbours, then pull each pixel back into its own
  // class interval so containment survives the blur.
  const auto rad = static_cast<std::ptrdiff_t>(config.smoothing_radius);
  Raster blurred = out;
  detail::for_each_row(H, config.workers, [&](std::size_t r) {
    for (std::size_t c = 0; c < W; ++c) {
      const int cls = mask.at(r, c);
      if (cls == 0) continue;
      double sum = 0.0;
      int n = 0;
      for (std::ptrdiff_t dr = -rad; dr <= rad; ++dr) {
        const auto rr = static_cast<std::ptrdiff_t>(r) + dr;
        if (rr < 0 || rr >= static_cast<std::ptrdiff_t>(H)) continue;
        for (std::ptrdiff_t dc = -rad; dc <= rad; ++dc) {
          const auto cc = static_cast<std::ptrdiff_t>(c) + dc;
          if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(W)) continue;
          if (mask.at(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) == 0) continue;
          sum += out.at(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc));
          ++n;
        }
      }
      const Interval& iv = graph.interval(cls, modality);
      blurred.at(r, c) = std::clamp(sum / n, iv.lo, iv.hi);
    }
  });
  return blurred;
}

inline RasterSet synthesize_scene(const LabelMask& mask, const Pckg& graph, const std::set<Modality>& modalities,
                                  const SynthConfig& config) {
  RasterSet out;
  for (Modality m : modalities) out.emplace(m, synthesize_raster(mask, graph, m, config));
  return out;
}

}  // namespace priorseg
