#pragma once

// Run configuration shared by the command-line tool: a JSON document whose
// values can be overridden flag by flag, plus provenance stamping.

#include <cstdint>
#include <cstdio>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <string>
#include <vector>

#include "priorseg/benchmark.hpp"
#include "priorseg/error.hpp"
#include "priorseg/extraction.hpp"
#include "priorseg/inference.hpp"
#include "priorseg/losses.hpp"
#include "priorseg/refiner.hpp"
#include "priorseg/synth.hpp"

namespace priorseg {

inline constexpr std::string_view kVersion = "0.1.0";

enum class InferenceMode { visual, physical };

struct RunPaths {
  std::string pckg, labels, features, coarse, params, pred, vocab, out;
  std::map<Modality, std::string> rasters;
  std::map<Modality, std::string> reference;
  std::vector<std::string> scenes;
};

struct RunConfig {
  std::uint64_t seed = 7;
  RunPaths paths;
  LossWeights weights;
  AttenuationConfig attenuation;
  SynthConfig synth;
  TrainConfig train;
  AblationFlags ablation{true, true, true};
  InferenceMode mode = InferenceMode::physical;
  bool include_background = false;
  ProviderConfig provider;
};

namespace detail {

template <typename E>
struct EnumNames;

template <>
struct EnumNames<ToleranceMode> {
  static constexpr std::array<std::pair<ToleranceMode, std::string_view>, 2> v{
      {{ToleranceMode::relative, "relative"}, {ToleranceMode::absolute, "absolute"}}};
};
template <>
struct EnumNames<NoiseModel> {
  static constexpr std::array<std::pair<NoiseModel, std::string_view>, 2> v{
      {{NoiseModel::uniform, "uniform"}, {NoiseModel::truncated_gaussian, "truncated_gaussian"}}};
};
template <>
struct EnumNames<PhysGradient> {
  static constexpr std::array<std::pair<PhysGradient, std::string_view>, 2> v{
      {{PhysGradient::none, "none"}, {PhysGradient::soft, "soft"}}};
};
template <>
struct EnumNames<DiceMode> {
  static constexpr std::array<std::pair<DiceMode, std::string_view>, 2> v{
      {{DiceMode::loss, "loss"}, {DiceMode::coefficient, "coefficient"}}};
};
template <>
struct EnumNames<InferenceMode> {
  static constexpr std::array<std::pair<InferenceMode, std::string_view>, 2> v{
      {{InferenceMode::visual, "visual"}, {InferenceMode::physical, "physical"}}};
};
template <>
struct EnumNames<ProviderMode> {
  static constexpr std::array<std::pair<ProviderMode, std::string_view>, 2> v{
      {{ProviderMode::live, "live"}, {ProviderMode::fixture, "fixture"}}};
};

inline void check_keys(const nlohmann::json& obj, std::string_view where, std::initializer_list<std::string_view> keys) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [k, _] : obj.items())
    if (std::find(keys.begin(), keys.end(), k) == keys.end())
      throw ConfigError("unknown config key '" + std::string(where) + "." + k + "'");
}

template <typename T>
void read(const nlohmann::json& obj, std::string_view key, T& out, std::string_view where) {
  auto it = obj.find(std::string(key));
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + std::string(where) + "." + std::string(key) + "' has the wrong type");
  }
}

}  // namespace detail

template <typename E>
std::string_view enum_name(E e) {
  for (auto [v, n] : detail::EnumNames<E>::v)
    if (v == e) return n;
  return "?";
}

template <typename E>
E parse_enum(std::string_view s, std::string_view what) {
  for (auto [v, n] : detail::EnumNames<E>::v)
    if (n == s) return v;
  std::string opts;
  for (auto [v, n] : detail::EnumNames<E>::v) opts += (opts.empty() ? "" : "|") + std::string(n);
  throw ConfigError(std::string(what) + " must be one of " + opts + ", got '" + std::string(s) + "'");
}

/// "ndvi=a.grid,sar=b.grid" -> {ndvi: a.grid, sar: b.grid}
inline std::map<Modality, std::string> parse_raster_list(std::string_view spec) {
  std::map<Modality, std::string> out;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const auto comma = spec.find(',', pos);
    const auto item = spec.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    if (!item.empty()) {
      const auto eq = item.find('=');
      if (eq == std::string_view::npos) throw ConfigError("raster spec '" + std::string(item) + "' is not MODALITY=PATH");
      const auto m = parse_modality(item.substr(0, eq));
      if (!m) throw ConfigError("unknown modality '" + std::string(item.substr(0, eq)) + "'");
      if (item.size() == eq + 1) throw ConfigError("empty path for " + std::string(to_string(*m)));
      if (!out.emplace(*m, std::string(item.substr(eq + 1))).second)
        throw ConfigError("modality " + std::string(to_string(*m)) + " given twice");
    }
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

inline nlohmann::ordered_json modality_map_json(const std::map<Modality, std::string>& m) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m) j[std::string(file_stem(k))] = v;
  return j;
}

inline std::map<Modality, std::string> modality_map_from(const nlohmann::json& j, std::string_view where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must map modality names to paths");
  std::map<Modality, std::string> out;
  for (const auto& [k, v] : j.items()) {
    const auto m = parse_modality(k);
    if (!m) throw ConfigError("unknown modality '" + k + "' in " + std::string(where));
    if (!v.is_string()) throw ConfigError(std::string(where) + "." + k + " must be a string");
    out[*m] = v.get<std::string>();
  }
  return out;
}

/// Overlays a JSON config document onto `cfg`. Unknown keys are rejected so
/// a typo cannot silently fall back to a default.
inline void apply_config_json(RunConfig& cfg, const nlohmann::json& doc) {
  using detail::check_keys;
  using detail::read;
  check_keys(doc, "config",
             {"seed", "paths", "loss_weights", "attenuation", "synth", "train", "ablation", "mode",
              "include_background", "provider"});
  read(doc, "seed", cfg.seed, "config");
  read(doc, "include_background", cfg.include_background, "config");
  if (auto it = doc.find("mode"); it != doc.end()) cfg.mode = parse_enum<InferenceMode>(it->get<std::string>(), "mode");

  if (auto it = doc.find("paths"); it != doc.end()) {
    const auto& p = *it;
    check_keys(p, "paths",
               {"pckg", "labels", "features", "coarse", "params", "pred", "vocab", "out", "rasters", "reference",
                "scenes"});
    read(p, "pckg", cfg.paths.pckg, "paths");
    read(p, "labels", cfg.paths.labels, "paths");
    read(p, "features", cfg.paths.features, "paths");
    read(p, "coarse", cfg.paths.coarse, "paths");
    read(p, "params", cfg.paths.params, "paths");
    read(p, "pred", cfg.paths.pred, "paths");
    read(p, "vocab", cfg.paths.vocab, "paths");
    read(p, "out", cfg.paths.out, "paths");
    read(p, "scenes", cfg.paths.scenes, "paths");
    if (p.contains("rasters")) cfg.paths.rasters = modality_map_from(p["rasters"], "paths.rasters");
    if (p.contains("reference")) cfg.paths.reference = modality_map_from(p["reference"], "paths.reference");
  }
  if (auto it = doc.find("loss_weights"); it != doc.end()) {
    check_keys(*it, "loss_weights", {"alpha", "lambda1", "lambda2"});
    read(*it, "alpha", cfg.weights.alpha, "loss_weights");
    read(*it, "lambda1", cfg.weights.lambda1, "loss_weights");
    read(*it, "lambda2", cfg.weights.lambda2, "loss_weights");
  }
  if (auto it = doc.find("attenuation"); it != doc.end()) {
    check_keys(*it, "attenuation", {"ndvi", "dem", "sar"});
    for (const auto& [k, v] : it->items()) {
      auto& t = cfg.attenuation.tolerance[index_of(*parse_modality(k))];
      check_keys(v, "attenuation." + k, {"mode", "sigma", "tau"});
      if (v.contains("mode")) t.mode = parse_enum<ToleranceMode>(v["mode"].get<std::string>(), "attenuation mode");
      read(v, "sigma", t.sigma, "attenuation." + k);
      read(v, "tau", t.tau, "attenuation." + k);
    }
  }
  if (auto it = doc.find("synth"); it != doc.end()) {
    check_keys(*it, "synth", {"noise_model", "smoothing_radius", "background_fill", "workers"});
    if (it->contains("noise_model"))
      cfg.synth.noise_model = parse_enum<NoiseModel>((*it)["noise_model"].get<std::string>(), "noise_model");
    read(*it, "smoothing_radius", cfg.synth.smoothing_radius, "synth");
    read(*it, "workers", cfg.synth.workers, "synth");
    if (auto bf = it->find("background_fill"); bf != it->end()) {
      check_keys(*bf, "synth.background_fill", {"ndvi", "dem", "sar"});
      for (const auto& [k, v] : bf->items()) cfg.synth.background_fill[index_of(*parse_modality(k))] = v.get<double>();
    }
  }
  if (auto it = doc.find("train"); it != doc.end()) {
    check_keys(*it, "train",
               {"learning_rate", "epochs", "batch_size", "modality_dropout_prob", "hidden", "residual_scale",
                "phys_gradient", "dice_mode"});
    read(*it, "learning_rate", cfg.train.learning_rate, "train");
    read(*it, "epochs", cfg.train.epochs, "train");
    read(*it, "batch_size", cfg.train.batch_size, "train");
    read(*it, "modality_dropout_prob", cfg.train.modality_dropout_prob, "train");
    read(*it, "hidden", cfg.train.hidden, "train");
    read(*it, "residual_scale", cfg.train.residual_scale, "train");
    if (it->contains("phys_gradient"))
      cfg.train.phys_gradient = parse_enum<PhysGradient>((*it)["phys_gradient"].get<std::string>(), "phys_gradient");
    if (it->contains("dice_mode"))
      cfg.train.dice_mode = parse_enum<DiceMode>((*it)["dice_mode"].get<std::string>(), "dice_mode");
  }
  if (auto it = doc.find("ablation"); it != doc.end()) {
    check_keys(*it, "ablation", {"use_synth_data", "use_pckg_reweight", "use_phys_loss"});
    read(*it, "use_synth_data", cfg.ablation.use_synth_data, "ablation");
    read(*it, "use_pckg_reweight", cfg.ablation.use_pckg_reweight, "ablation");
    read(*it, "use_phys_loss", cfg.ablation.use_phys_loss, "ablation");
  }
  if (auto it = doc.find("provider"); it != doc.end()) {
    check_keys(*it, "provider",
               {"mode", "endpoint", "model", "api_key_env", "fixture_dir", "request_timeout", "max_retries",
                "parallelism"});
    if (it->contains("mode")) cfg.provider.mode = parse_enum<ProviderMode>((*it)["mode"].get<std::string>(), "provider mode");
    read(*it, "endpoint", cfg.provider.endpoint, "provider");
    read(*it, "model", cfg.provider.model, "provider");
    read(*it, "api_key_env", cfg.provider.api_key_env, "provider");
    std::string dir;
    read(*it, "fixture_dir", dir, "provider");
    if (!dir.empty()) cfg.provider.fixture_dir = dir;
    read(*it, "request_timeout", cfg.provider.request_timeout, "provider");
    read(*it, "max_retries", cfg.provider.max_retries, "provider");
    read(*it, "parallelism", cfg.provider.parallelism, "provider");
  }
}

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["mode"] = enum_name(c.mode);
  j["include_background"] = c.include_background;
  j["paths"] = {{"pckg", c.paths.pckg},
                {"labels", c.paths.labels},
                {"features", c.paths.features},
                {"coarse", c.paths.coarse},
                {"params", c.paths.params},
                {"pred", c.paths.pred},
                {"vocab", c.paths.vocab},
                {"out", c.paths.out},
                {"rasters", modality_map_json(c.paths.rasters)},
                {"reference", modality_map_json(c.paths.reference)},
                {"scenes", c.paths.scenes}};
  j["loss_weights"] = {{"alpha", c.weights.alpha}, {"lambda1", c.weights.lambda1}, {"lambda2", c.weights.lambda2}};
  nlohmann::ordered_json att = nlohmann::ordered_json::object();
  for (Modality m : kAllModalities) {
    const auto& t = c.attenuation.tolerance[index_of(m)];
    att[std::string(file_stem(m))] = {{"mode", enum_name(t.mode)}, {"sigma", t.sigma}, {"tau", t.tau}};
  }
  j["attenuation"] = att;
  nlohmann::ordered_json fill = nlohmann::ordered_json::object();
  for (Modality m : kAllModalities) fill[std::string(file_stem(m))] = c.synth.background_fill[index_of(m)];
  j["synth"] = {{"noise_model", enum_name(c.synth.noise_model)},
                {"smoothing_radius", c.synth.smoothing_radius},
                {"background_fill", fill},
                {"workers", c.synth.workers}};
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"modality_dropout_prob", c.train.modality_dropout_prob},
                {"hidden", c.train.hidden},
                {"residual_scale", c.train.residual_scale},
                {"phys_gradient", enum_name(c.train.phys_gradient)},
                {"dice_mode", enum_name(c.train.dice_mode)}};
  j["ablation"] = {{"use_synth_data", c.ablation.use_synth_data},
                   {"use_pckg_reweight", c.ablation.use_pckg_reweight},
                   {"use_phys_loss", c.ablation.use_phys_loss}};
  j["provider"] = {{"mode", enum_name(c.provider.mode)},
                   {"endpoint", c.provider.endpoint},
                   {"model", c.provider.model},
                   {"api_key_env", c.provider.api_key_env},
                   {"fixture_dir", c.provider.fixture_dir.string()},
                   {"request_timeout", c.provider.request_timeout},
                   {"max_retries", c.provider.max_retries},
                   {"parallelism", c.provider.parallelism}};
  return j;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_digest(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json(c).dump())));
  return buf;
}

struct Provenance {
  std::string tool = "priorseg " + std::string(kVersion);
  std::string command;
  std::uint64_t seed = 0;
  std::string digest;

  [[nodiscard]] std::vector<std::string> comment_lines() const {
    return {tool, "command: " + command, "seed: " + std::to_string(seed), "config-digest: fnv1a64:" + digest};
  }
  [[nodiscard]] nlohmann::ordered_json json() const {
    return {{"tool", tool}, {"command", command}, {"seed", seed}, {"config_digest", "fnv1a64:" + digest}};
  }
};

inline Provenance make_provenance(const std::string& command, const RunConfig& c) {
  Provenance p;
  p.command = command;
  p.seed = c.seed;
  p.digest = config_digest(c);
  return p;
}

/// Toy-benchmark ablation settings derived from a run configuration; the run
/// seed drives the benchmark, the synthesis and the training.
inline AblationConfig ablation_config(const RunConfig& c) {
  AblationConfig ac;
  ac.bench.seed = c.seed;
  ac.bench.synth = c.synth;
  ac.bench.synth.seed = c.seed;
  ac.train = c.train;
  ac.train.seed = c.seed;
  ac.train.weights = c.weights;
  ac.attenuation = c.attenuation;
  return ac;
}

}  // namespace priorseg
