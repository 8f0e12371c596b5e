// priorseg: command-line front end for the physics-prior segmentation
// refinement pipeline (graph extraction, raster synthesis, training,
// inference, evaluation, ablation).

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "priorseg/benchmark.hpp"
#include "priorseg/extraction.hpp"
#include "priorseg/inference.hpp"
#include "priorseg/metrics.hpp"
#include "priorseg/pckg.hpp"
#include "priorseg/refiner.hpp"
#include "priorseg/run_config.hpp"
#include "priorseg/synth.hpp"

namespace fs = std::filesystem;
using namespace priorseg;

namespace {

// Flags that override the config file. Unset optionals leave the file (or
// the built-in default) alone.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> pckg, labels, features, coarse, params, pred, vocab, out, rasters, reference, mode;
  std::vector<std::string> scenes, terms;
  std::optional<std::string> fixtures, endpoint, model;
  std::optional<int> max_retries, parallelism;
  std::optional<int> epochs;
  std::optional<double> lr, alpha, lambda1, lambda2, dropout;
  std::optional<std::size_t> hidden, batch_size;
  std::optional<std::string> phys_gradient, noise;
  std::optional<int> smoothing;
  std::optional<std::string> modalities;
  bool include_background = false;
  bool demo = false;
  bool single = false;
  bool use_synth = false, use_reweight = false, use_phys = false;
};

std::string current_stage = "startup";

RunConfig resolve_config(const Overrides& o) {
  RunConfig cfg;
  if (!o.config.empty()) {
    const std::string text = read_text_file(o.config);
    auto doc = nlohmann::json::parse(text, nullptr, false);
    if (doc.is_discarded()) throw ParseError("config file " + o.config + " is not valid JSON");
    apply_config_json(cfg, doc);
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.pckg) cfg.paths.pckg = *o.pckg;
  if (o.labels) cfg.paths.labels = *o.labels;
  if (o.features) cfg.paths.features = *o.features;
  if (o.coarse) cfg.paths.coarse = *o.coarse;
  if (o.params) cfg.paths.params = *o.params;
  if (o.pred) cfg.paths.pred = *o.pred;
  if (o.vocab) cfg.paths.vocab = *o.vocab;
  if (o.out) cfg.paths.out = *o.out;
  if (o.rasters) cfg.paths.rasters = parse_raster_list(*o.rasters);
  if (o.reference) cfg.paths.reference = parse_raster_list(*o.reference);
  if (!o.scenes.empty()) cfg.paths.scenes = o.scenes;
  if (o.mode) cfg.mode = parse_enum<InferenceMode>(*o.mode, "--mode");
  if (o.include_background) cfg.include_background = true;
  if (o.fixtures) {
    cfg.provider.mode = ProviderMode::fixture;
    cfg.provider.fixture_dir = *o.fixtures;
  }
  if (o.endpoint) {
    cfg.provider.mode = ProviderMode::live;
    cfg.provider.endpoint = *o.endpoint;
  }
  if (o.model) cfg.provider.model = *o.model;
  if (o.max_retries) cfg.provider.max_retries = *o.max_retries;
  if (o.parallelism) cfg.provider.parallelism = *o.parallelism;
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.lr) cfg.train.learning_rate = *o.lr;
  if (o.alpha) cfg.weights.alpha = *o.alpha;
  if (o.lambda1) cfg.weights.lambda1 = *o.lambda1;
  if (o.lambda2) cfg.weights.lambda2 = *o.lambda2;
  if (o.dropout) cfg.train.modality_dropout_prob = *o.dropout;
  if (o.hidden) cfg.train.hidden = *o.hidden;
  if (o.batch_size) cfg.train.batch_size = *o.batch_size;
  if (o.phys_gradient) cfg.train.phys_gradient = parse_enum<PhysGradient>(*o.phys_gradient, "--phys-gradient");
  if (o.noise) cfg.synth.noise_model = parse_enum<NoiseModel>(*o.noise, "--noise");
  if (o.smoothing) cfg.synth.smoothing_radius = *o.smoothing;
  if (o.single) cfg.ablation = {o.use_synth, o.use_reweight, o.use_phys};
  cfg.train.seed = cfg.seed;
  cfg.train.weights = cfg.weights;
  cfg.synth.seed = cfg.seed;
  return cfg;
}

void require(const std::string& value, std::string_view flag) {
  if (value.empty()) throw InputError(std::string("missing required input ") + std::string(flag));
}

void require_file(const std::string& path, std::string_view flag) {
  require(path, flag);
  if (!fs::is_regular_file(path)) throw InputError(std::string(flag) + ": no such file " + path);
}

fs::path output_dir(const RunConfig& cfg) {
  require(cfg.paths.out, "--out");
  fs::create_directories(cfg.paths.out);
  return cfg.paths.out;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) { write_text_file(path.string(), j.dump(2) + "\n"); }

RasterSet load_rasters(const std::map<Modality, std::string>& paths) {
  RasterSet out;
  for (const auto& [m, p] : paths) {
    require_file(p, "--rasters " + std::string(to_string(m)));
    Raster r = parse_raster(read_text_file(p));
    if (r.modality != m)
      throw InputError(p + " holds a " + std::string(to_string(r.modality)) + " raster, expected " +
                       std::string(to_string(m)));
    out.emplace(m, std::move(r));
  }
  return out;
}

std::map<Modality, std::string> scene_raster_paths(const fs::path& dir) {
  std::map<Modality, std::string> out;
  for (Modality m : kAllModalities) {
    const fs::path p = dir / (std::string(file_stem(m)) + ".grid");
    if (fs::exists(p)) out[m] = p.string();
  }
  return out;
}

Scene load_scene_dir(const fs::path& dir, bool need_gt) {
  Scene s;
  const auto f = dir / "features.grid", c = dir / "coarse.grid", l = dir / "labels.grid";
  require_file(f.string(), "scene features");
  require_file(c.string(), "scene coarse map");
  s.features = parse_features(read_text_file(f.string()));
  s.coarse = parse_probs(read_text_file(c.string()));
  if (need_gt || fs::exists(l)) {
    require_file(l.string(), "scene labels");
    s.gt = parse_labels(read_text_file(l.string()));
  }
  s.rasters = load_rasters(scene_raster_paths(dir));
  return s;
}

/// Scenes from --scene directories, or a single scene from explicit paths.
std::vector<Scene> load_scenes(const RunConfig& cfg, bool need_gt) {
  std::vector<Scene> out;
  for (const auto& d : cfg.paths.scenes) {
    if (!fs::is_directory(d)) throw InputError("--scene: no such directory " + d);
    out.push_back(load_scene_dir(d, need_gt));
  }
  if (!out.empty()) return out;
  require_file(cfg.paths.features, "--features");
  require_file(cfg.paths.coarse, "--coarse");
  Scene s;
  s.features = parse_features(read_text_file(cfg.paths.features));
  s.coarse = parse_probs(read_text_file(cfg.paths.coarse));
  if (need_gt) {
    require_file(cfg.paths.labels, "--labels");
    s.gt = parse_labels(read_text_file(cfg.paths.labels));
  }
  s.rasters = load_rasters(cfg.paths.rasters);
  out.push_back(std::move(s));
  return out;
}

Pckg load_graph(const RunConfig& cfg, Diagnostics* diag = nullptr) {
  require_file(cfg.paths.pckg, "--pckg");
  return load_pckg(cfg.paths.pckg, diag);
}

std::set<Modality> parse_modality_list(std::string_view s) {
  std::set<Modality> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    const auto tok = s.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    if (!tok.empty()) {
      auto m = parse_modality(tok);
      if (!m) throw ConfigError("unknown modality '" + std::string(tok) + "'");
      out.insert(*m);
    }
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_pckg_validate(const RunConfig& cfg) {
  current_stage = "pckg validate";
  Diagnostics diag;
  const Pckg g = load_graph(cfg, &diag);
  nlohmann::ordered_json rep;
  rep["valid"] = true;
  rep["classes"] = g.size();
  nlohmann::ordered_json cats = nlohmann::ordered_json::array();
  for (const auto& e : g.entries()) cats.push_back(e.category);
  rep["categories"] = cats;
  rep["warnings"] = diag.warnings;
  std::cout << rep.dump(2) << '\n';
  return 0;
}

std::vector<std::string> read_vocab(const RunConfig& cfg, const std::vector<std::string>& terms) {
  std::vector<std::string> out = terms;
  if (!cfg.paths.vocab.empty()) {
    require_file(cfg.paths.vocab, "--vocab");
    std::istringstream is(read_text_file(cfg.paths.vocab));
    for (std::string line; std::getline(is, line);) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (!line.empty() && line.front() != '#') out.push_back(line);
    }
  }
  if (out.empty()) throw InputError("no vocabulary: pass --vocab FILE or --term");
  return out;
}

int cmd_pckg_extract(const RunConfig& cfg, const Provenance& prov, const std::vector<std::string>& terms) {
  current_stage = "pckg extract";
  const auto vocab = read_vocab(cfg, terms);
  if (cfg.provider.mode == ProviderMode::fixture && cfg.provider.fixture_dir.empty())
    throw ConfigError("fixture mode needs --fixtures DIR (or --endpoint URL for a live provider)");
  const fs::path out = output_dir(cfg);
  ExtractionResult res = extract_graph(vocab, cfg.provider);
  write_text_file((out / "pckg.json").string(), serialize_pckg(res.graph));
  nlohmann::ordered_json rep;
  rep["provenance"] = prov.json();
  rep["provider"] = {{"mode", enum_name(cfg.provider.mode)}, {"model", cfg.provider.model}};
  rep["classes"] = res.graph.size();
  const nlohmann::ordered_json report = to_json(res.report);
  for (const auto& [k, v] : report.items()) rep[k] = v;
  write_json(out / "extraction_report.json", rep);
  std::cout << "extracted " << res.graph.size() << " of " << vocab.size() << " terms -> " << (out / "pckg.json").string()
            << '\n';
  return 0;
}

void write_scene(const fs::path& dir, const Scene& s, const Provenance& prov) {
  fs::create_directories(dir);
  const auto c = prov.comment_lines();
  write_text_file((dir / "labels.grid").string(), format_labels(s.gt, c));
  write_text_file((dir / "features.grid").string(), format_features(s.features, c));
  write_text_file((dir / "coarse.grid").string(), format_probs(s.coarse, c));
  for (const auto& [m, r] : s.rasters)
    write_text_file((dir / (std::string(file_stem(m)) + ".grid")).string(), format_raster(r, c));
}

int cmd_synth(const RunConfig& cfg, const Provenance& prov, const Overrides& o) {
  current_stage = "synth";
  const fs::path out = output_dir(cfg);
  if (o.demo) {
    ToyBenchmarkConfig bc;
    bc.seed = cfg.seed;
    bc.synth = cfg.synth;
    const ToyBenchmark b = make_toy_benchmark(bc);
    write_text_file((out / "pckg.json").string(), serialize_pckg(b.graph));
    for (std::size_t k = 0; k < b.scenes.size(); ++k)
      write_scene(out / ("scene" + std::to_string(k + 1)), b.scenes[k], prov);
    std::cout << "wrote toy benchmark (" << b.scenes.size() << " scenes, " << b.graph.size() << " classes) to "
              << out.string() << '\n';
    return 0;
  }
  const Pckg g = load_graph(cfg);
  require_file(cfg.paths.labels, "--labels");
  const LabelMask mask = parse_labels(read_text_file(cfg.paths.labels));
  std::set<Modality> mods(kAllModalities.begin(), kAllModalities.end());
  if (o.modalities) mods = parse_modality_list(*o.modalities);
  const RasterSet rs = synthesize_scene(mask, g, mods, cfg.synth);
  for (const auto& [m, r] : rs)
    write_text_file((out / (std::string(file_stem(m)) + ".grid")).string(), format_raster(r, prov.comment_lines()));
  std::cout << "wrote " << rs.size() << " raster(s) to " << out.string() << '\n';
  return 0;
}

int cmd_train(const RunConfig& cfg, const Provenance& prov) {
  current_stage = "train";
  const Pckg g = load_graph(cfg);
  const auto scenes = load_scenes(cfg, true);
  const fs::path out = output_dir(cfg);
  TrainResult res;
  try {
    res = train(scenes, g, cfg.train);
  } catch (const TrainingError& e) {
    write_text_file((out / "params.last_finite.txt").string(),
                    format_params(e.last_finite(), prov.comment_lines()));
    throw;
  }
  write_text_file((out / "params.txt").string(), format_params(res.params, prov.comment_lines()));
  write_text_file((out / "loss_history.csv").string(), format_history_csv(res.history, prov.comment_lines()));
  if (!res.history.empty()) {
    const auto& last = res.history.back();
    std::cout << "trained " << res.history.size() << " steps; final loss " << format_double(last.total)
              << " (seg " << format_double(last.seg) << ", region " << format_double(last.region) << ", phys "
              << format_double(last.phys) << ")\n";
  }
  return 0;
}

int cmd_refine(const RunConfig& cfg, const Provenance& prov) {
  current_stage = "refine";
  const Pckg g = load_graph(cfg);
  require_file(cfg.paths.params, "--params");
  const RefinerParams params = parse_params(read_text_file(cfg.paths.params));
  RunConfig local = cfg;
  // Visual-only mode never reads physical inputs.
  if (cfg.mode == InferenceMode::visual) local.paths.rasters.clear();
  std::vector<Scene> scenes;
  if (!local.paths.scenes.empty()) {
    for (const auto& d : local.paths.scenes) {
      Scene s;
      const fs::path dir = d;
      require_file((dir / "features.grid").string(), "scene features");
      require_file((dir / "coarse.grid").string(), "scene coarse map");
      s.features = parse_features(read_text_file((dir / "features.grid").string()));
      s.coarse = parse_probs(read_text_file((dir / "coarse.grid").string()));
      if (cfg.mode == InferenceMode::physical) s.rasters = load_rasters(scene_raster_paths(dir));
      scenes.push_back(std::move(s));
    }
  } else {
    scenes = load_scenes(local, false);
  }
  const fs::path out = output_dir(cfg);
  nlohmann::ordered_json summary;
  summary["provenance"] = prov.json();
  summary["mode"] = enum_name(cfg.mode);
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < scenes.size(); ++k) {
    const Scene& s = scenes[k];
    AttenuationConfig ac = cfg.attenuation;
    ac.available.clear();
    for (const auto& [m, _] : s.rasters) ac.available.insert(m);
    const InferenceResult r = infer(params, s.features, s.coarse, s.rasters, g, ac);
    const fs::path dir = scenes.size() == 1 ? out : out / ("scene" + std::to_string(k + 1));
    fs::create_directories(dir);
    write_text_file((dir / "labels.grid").string(), format_labels(r.labels, prov.comment_lines()));
    write_text_file((dir / "probs.grid").string(), format_probs(r.probs, prov.comment_lines()));
    write_text_file((dir / "trace.jsonl").string(), format_trace_jsonl(r.trace, g));
    std::vector<std::string> avail;
    for (Modality m : ac.available) avail.emplace_back(to_string(m));
    for (const auto& w : r.trace.warnings) std::cerr << "warning: " << w << '\n';
    per.push_back({{"output", dir.string()},
                   {"available", avail},
                   {"flipped_pixels", r.trace.flips.size()},
                   {"warnings", r.trace.warnings}});
  }
  summary["scenes"] = per;
  write_json(out / "summary.json", summary);
  std::cout << "refined " << scenes.size() << " scene(s) in " << enum_name(cfg.mode) << " mode -> " << out.string()
            << '\n';
  return 0;
}

int cmd_eval(const RunConfig& cfg, const Provenance& prov) {
  current_stage = "eval";
  const Pckg g = load_graph(cfg);
  require_file(cfg.paths.pred, "--pred");
  require_file(cfg.paths.labels, "--labels");
  const LabelMask pred = parse_labels(read_text_file(cfg.paths.pred));
  const LabelMask gt = parse_labels(read_text_file(cfg.paths.labels));
  const fs::path out = output_dir(cfg);
  nlohmann::ordered_json rep;
  rep["provenance"] = prov.json();
  const IoUReport iou = miou(pred, gt, g.size(), cfg.include_background);
  rep["miou"] = to_json(iou);
  const RasterSet rasters = load_rasters(cfg.paths.rasters);
  if (!rasters.empty()) rep["plausibility"] = to_json(plausibility_rate(pred, rasters, g), g);
  if (!cfg.paths.reference.empty()) {
    if (rasters.empty()) throw InputError("--reference needs --rasters (the synthetic side of the comparison)");
    const RasterSet ref = load_rasters(cfg.paths.reference);
    const ReliabilityReport rel = reliability(rasters, ref, gt, g);
    rep["reliability"] = to_json(rel, g);
    write_text_file((out / "reliability.csv").string(), format_reliability_csv(rel, g));
  }
  write_json(out / "metrics.json", rep);
  std::cout << "mIoU: " << format_double(iou.miou) << '\n';
  return 0;
}

int cmd_ablate(const RunConfig& cfg, const Provenance& prov, const Overrides& o) {
  current_stage = "ablate";
  const AblationConfig ac = ablation_config(cfg);
  const std::vector<AblationFlags> rows =
      o.single ? std::vector<AblationFlags>{cfg.ablation} : ablation_ladder();
  const AblationTable t = run_ablation(ac, rows);
  const std::string text = format_ablation_text(t);
  std::cout << text;
  if (!cfg.paths.out.empty()) {
    const fs::path out = output_dir(cfg);
    auto j = to_json(t);
    j["provenance"] = prov.json();
    write_json(out / "ablation.json", j);
    std::string txt;
    for (const auto& c : prov.comment_lines()) txt += "# " + c + "\n";
    write_text_file((out / "ablation.txt").string(), txt + text);
  }
  return 0;
}

void emit_error(std::string_view kind, int code, std::string_view message) {
  nlohmann::ordered_json j;
  j["error"] = {{"kind", kind}, {"stage", current_stage}, {"exit_code", code}, {"message", message}};
  std::cerr << j.dump() << '\n';
}

void add_common(CLI::App* c, Overrides& o) {
  c->add_option("--config", o.config, "JSON run configuration; flags override it");
  c->add_option("--seed", o.seed, "Random seed");
  c->add_option("--out", o.out, "Output directory");
}

void add_graph(CLI::App* c, Overrides& o) { c->add_option("--pckg", o.pckg, "Knowledge graph (JSON)"); }

void add_train_flags(CLI::App* c, Overrides& o) {
  c->add_option("--epochs", o.epochs, "Training epochs");
  c->add_option("--lr", o.lr, "Learning rate");
  c->add_option("--alpha", o.alpha, "Dice weight");
  c->add_option("--lambda1", o.lambda1, "Region loss weight");
  c->add_option("--lambda2", o.lambda2, "Physics loss weight");
  c->add_option("--dropout", o.dropout, "Modality dropout probability");
  c->add_option("--hidden", o.hidden, "Refiner hidden width");
  c->add_option("--batch-size", o.batch_size, "Scenes per step (0 = all)");
  c->add_option("--phys-gradient", o.phys_gradient, "Physics loss gradient: soft|none");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"priorseg: physics-prior refinement of segmentation masks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  Overrides o;

  auto* pckg = app.add_subcommand("pckg", "Validate or extract a knowledge graph");
  pckg->require_subcommand(1);
  auto* validate = pckg->add_subcommand("validate", "Parse and check a graph file");
  add_common(validate, o);
  add_graph(validate, o);
  auto* extract = pckg->add_subcommand("extract", "Build a graph from vocabulary terms");
  add_common(extract, o);
  extract->add_option("--vocab", o.vocab, "Vocabulary file, one term per line");
  extract->add_option("--term", o.terms, "Vocabulary term (repeatable)");
  extract->add_option("--fixtures", o.fixtures, "Replay recorded replies from this directory");
  extract->add_option("--endpoint", o.endpoint, "Chat-completions URL of a live provider");
  extract->add_option("--model", o.model, "Model name sent to the provider");
  extract->add_option("--max-retries", o.max_retries, "Re-prompts per term after the first attempt");
  extract->add_option("--parallelism", o.parallelism, "Terms in flight at once");

  auto* synth = app.add_subcommand("synth", "Synthesize physical rasters from a label mask");
  add_common(synth, o);
  add_graph(synth, o);
  synth->add_option("--labels", o.labels, "Label mask grid");
  synth->add_option("--modalities", o.modalities, "Comma-separated subset of ndvi,dem,sar");
  synth->add_option("--noise", o.noise, "uniform|truncated_gaussian");
  synth->add_option("--smoothing", o.smoothing, "Box smoothing radius in pixels");
  synth->add_flag("--demo", o.demo, "Write the toy benchmark (graph and three scenes)");

  auto* train_cmd = app.add_subcommand("train", "Train the refiner");
  add_common(train_cmd, o);
  add_graph(train_cmd, o);
  train_cmd->add_option("--scene", o.scenes, "Scene directory (repeatable)");
  train_cmd->add_option("--labels", o.labels, "Ground-truth labels (single scene)");
  train_cmd->add_option("--features", o.features, "Backbone features (single scene)");
  train_cmd->add_option("--coarse", o.coarse, "Coarse probabilities (single scene)");
  train_cmd->add_option("--rasters", o.rasters, "ndvi=PATH,dem=PATH,sar=PATH (single scene)");
  add_train_flags(train_cmd, o);

  auto* refine_cmd = app.add_subcommand("refine", "Refine coarse masks with a trained model");
  add_common(refine_cmd, o);
  add_graph(refine_cmd, o);
  refine_cmd->add_option("--params", o.params, "Trained refiner parameters");
  refine_cmd->add_option("--scene", o.scenes, "Scene directory (repeatable)");
  refine_cmd->add_option("--features", o.features, "Backbone features");
  refine_cmd->add_option("--coarse", o.coarse, "Coarse probabilities");
  refine_cmd->add_option("--rasters", o.rasters, "ndvi=PATH,dem=PATH,sar=PATH");
  refine_cmd->add_option("--mode", o.mode, "visual|physical");

  auto* eval_cmd = app.add_subcommand("eval", "Score predictions");
  add_common(eval_cmd, o);
  add_graph(eval_cmd, o);
  eval_cmd->add_option("--pred", o.pred, "Predicted labels");
  eval_cmd->add_option("--labels", o.labels, "Ground-truth labels");
  eval_cmd->add_option("--rasters", o.rasters, "Rasters for the plausibility rate (and synthetic side of reliability)");
  eval_cmd->add_option("--reference", o.reference, "Reference rasters for the reliability report");
  eval_cmd->add_flag("--include-background", o.include_background, "Count class 0 in the mIoU mean");

  auto* ablate = app.add_subcommand("ablate", "Run the ablation ladder on the toy benchmark");
  add_common(ablate, o);
  add_train_flags(ablate, o);
  ablate->add_flag("--single", o.single, "Run one row selected by the flags below");
  ablate->add_flag("--synth-data", o.use_synth, "Row uses training on synthetic rasters");
  ablate->add_flag("--pckg-reweight", o.use_reweight, "Row uses graph re-weighting at inference");
  ablate->add_flag("--phys-loss", o.use_phys, "Row uses the physics loss in training");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("usage", 1, e.what());
    return 1;
  }

  std::string command = "priorseg";
  for (int i = 1; i < argc; ++i) command += std::string(" ") + argv[i];

  try {
    current_stage = "config";
    const RunConfig cfg = resolve_config(o);
    const Provenance prov = make_provenance(command, cfg);
    if (*validate) return cmd_pckg_validate(cfg);
    if (*extract) return cmd_pckg_extract(cfg, prov, o.terms);
    if (*synth) return cmd_synth(cfg, prov, o);
    if (*train_cmd) return cmd_train(cfg, prov);
    if (*refine_cmd) return cmd_refine(cfg, prov);
    if (*eval_cmd) return cmd_eval(cfg, prov);
    if (*ablate) return cmd_ablate(cfg, prov, o);
  } catch (const Error& e) {
    const int code = exit_code_for(e.error_class());
    emit_error(e.kind(), code, e.what());
    return code;
  } catch (const fs::filesystem_error& e) {
    emit_error("io", 1, e.what());
    return 1;
  } catch (const std::exception& e) {
    emit_error("internal", 2, e.what());
    return 2;
  }
  return 0;
}
