#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "priorseg/benchmark.hpp"
#include "priorseg/pckg.hpp"

namespace priorseg::testing {

/// Random value on the 0.01 grid in [lo, hi].
inline double grid2(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_int_distribution<long> d(static_cast<long>(std::llround(lo * 100)), static_cast<long>(std::llround(hi * 100)));
  return static_cast<double>(d(rng)) / 100.0;
}

inline Interval random_interval(std::mt19937_64& rng, double lo, double hi) {
  double a = grid2(rng, lo, hi), b = grid2(rng, lo, hi);
  if (a > b) std::swap(a, b);
  return {a, b};
}

inline std::string random_text(std::mt19937_64& rng, std::size_t max_len = 24) {
  static const std::string alphabet =
      "abcdefghijklmnopqrstuvwxyz ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789,.;:'\"\\/-_()[]{}\xc3\xa9\xe2\x82\xac\t";
  std::uniform_int_distribution<std::size_t> len(1, max_len), pick(0, alphabet.size() - 1);
  std::string s;
  const std::size_t n = len(rng);
  while (s.size() < n) {
    char c = alphabet[pick(rng)];
    // keep multi-byte UTF-8 sequences intact
    if (static_cast<unsigned char>(c) >= 0x80) {
      if (c == '\xc3') s += "\xc3\xa9";
      else if (c == '\xe2') s += "\xe2\x82\xac";
      continue;
    }
    s += c;
  }
  return s;
}

inline PckgEntry random_entry(std::mt19937_64& rng, const std::string& category) {
  PckgEntry e;
  e.category = category;
  e.meaning = random_text(rng);
  e.modifier_analysis = random_text(rng);
  e.coarse_class = random_text(rng, 10);
  e.reasoning = random_text(rng, 60);
  e.range(Modality::ndvi) = random_interval(rng, -1.0, 1.0);
  e.range(Modality::dem) = random_interval(rng, -400.0, 8800.0);
  e.range(Modality::sar) = random_interval(rng, -40.0, 20.0);
  return e;
}

/// A graph with `classes` entries and disjoint-ish random intervals.
inline Pckg random_graph(std::mt19937_64& rng, std::size_t classes) {
  std::vector<PckgEntry> entries;
  for (std::size_t c = 0; c < classes; ++c) entries.push_back(random_entry(rng, "class " + std::to_string(c + 1)));
  return Pckg(std::move(entries));
}

inline ProbMap random_probs(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t c, double lo = 0.05) {
  ProbMap p(h, w, c);
  std::uniform_real_distribution<double> u(lo, 1.0);
  for (std::size_t i = 0; i < p.pixels(); ++i) {
    double s = 0;
    for (std::size_t k = 0; k < c; ++k) s += (p(i, k) = u(rng));
    for (std::size_t k = 0; k < c; ++k) p(i, k) /= s;
  }
  return p;
}

inline LabelMask random_labels(std::mt19937_64& rng, std::size_t h, std::size_t w, int classes, bool background = false) {
  LabelMask m(h, w);
  std::uniform_int_distribution<int> d(background ? 0 : 1, classes);
  for (std::size_t i = 0; i < m.pixels(); ++i) m(i) = d(rng);
  return m;
}

inline FeatureMap random_features(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t d) {
  FeatureMap f(h, w, d);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : f.values()) v = n(rng);
  return f;
}

inline Raster random_raster(std::mt19937_64& rng, Modality m, std::size_t h, std::size_t w, double lo, double hi) {
  Raster r(m, h, w);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : r.values()) v = u(rng);
  return r;
}

/// Central difference of f with respect to v[j], restoring v afterwards.
template <typename F>
double central_difference(std::vector<double>& v, std::size_t j, F&& f, double h = 1e-6) {
  const double keep = v[j];
  v[j] = keep + h;
  const double up = f();
  v[j] = keep - h;
  const double down = f();
  v[j] = keep;
  return (up - down) / (2.0 * h);
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("priorseg-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace priorseg::testing
