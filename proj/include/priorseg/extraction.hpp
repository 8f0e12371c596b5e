#pragma once

// Prior extraction: structured prompts to a chat-completion endpoint (or a
// directory of recorded replies), with error-feedback re-prompting.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <memory>
#include <nlohmann/json.hpp>
#include <set>
#include <string>
#include <vector>

#include <httplib.h>

#include "priorseg/error.hpp"
#include "priorseg/pckg.hpp"

namespace priorseg {

struct PromptSpec {
  std::string instruction_template_id = "pckg-v1";
  std::vector<std::string> required_fields{kRequiredFields.begin(), kRequiredFields.end()};
};

inline constexpr std::string_view kSystemPrompt =
    "You are a remote sensing scientist. You answer with a single JSON object and nothing else.";

/// Renders the user prompt for one category phrase.
inline std::string build_prompt(std::string_view vocab, const PromptSpec& spec = {}) {
  if (vocab.empty()) throw InputError("build_prompt: empty category phrase");
  if (spec.instruction_template_id != "pckg-v1")
    throw ConfigError("unknown prompt template '" + spec.instruction_template_id + "'");

  std::string fields;
  for (std::size_t i = 0; i < spec.required_fields.size(); ++i) {
    if (i) fields += ", ";
    fields += "\"" + spec.required_fields[i] + "\"";
  }

  std::string p;
  p += "Category phrase: \"" + std::string(vocab) + "\"\n\n";
  p += "Work through the following steps for this land-cover category as seen in satellite imagery:\n";
  p += "1. Parse the semantic structure of the category phrase: identify the target object and every modifier, "
       "and explain how each modifier changes its physical properties.\n";
  p += "2. Map the phrase to one coarse physical class (for example vegetation, road, water, building, bare land).\n";
  p += "3. Infer plausible numerical ranges for three physical variables, each as a closed interval [lo, hi] "
       "with exactly two decimal places:\n";
  p += "   - NDVI (unitless, within [-1.00, 1.00]),\n";
  p += "   - DEM elevation in meters,\n";
  p += "   - SAR backscatter in dB.\n";
  p += "4. Justify every interval with step-by-step reasoning.\n\n";
  p += "Return one JSON object with exactly these fields: " + fields + ".\n";
  p += "\"NDVI Range\", \"DEM Range\" and \"SAR Range\" are two-element number arrays [lo, hi] with lo <= hi. "
       "All other fields are strings; put the step-by-step justification in \"Reasoning\".\n";
  return p;
}

/// Follow-up prompt after a reply failed validation.
inline std::string build_repair_prompt(std::string_view vocab, const PromptSpec& spec, std::string_view error) {
  std::string p = build_prompt(vocab, spec);
  p += "\nYour previous answer was rejected: ";
  p += error;
  p += "\nCorrect the problem and answer again with the complete JSON object only.\n";
  return p;
}

enum class ProviderMode { live, fixture };

struct ProviderConfig {
  ProviderMode mode = ProviderMode::fixture;
  std::string endpoint;     // live: full URL of a chat-completions endpoint
  std::string model = "gpt-4o";
  std::string api_key_env = "PRIORSEG_LLM_API_KEY";
  std::filesystem::path fixture_dir;
  double request_timeout = 60.0;  // seconds
  int max_retries = 2;
  int parallelism = 1;
};

/// RFC 3986 unreserved characters pass through; everything else becomes %XX.
inline std::string percent_encode(std::string_view s) {
  static constexpr char hex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    }
  }
  return out;
}

/// One request/response exchange with the model.
class Transport {
 public:
  virtual ~Transport() = default;
  /// `attempt` is 0 for the first request of a term.
  virtual std::string complete(std::string_view system, std::string_view prompt, std::string_view term,
                               int attempt) = 0;
};

/// Replays `<fixture_dir>/<percent-encoded term>.json`. An attempt-specific
/// file `<term>.<attempt>.json` takes precedence when present. Never touches
/// the network.
class FixtureTransport final : public Transport {
 public:
  explicit FixtureTransport(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::string complete(std::string_view, std::string_view, std::string_view term, int attempt) override {
    const std::string stem = percent_encode(term);
    auto specific = dir_ / (stem + "." + std::to_string(attempt) + ".json");
    if (attempt > 0 && std::filesystem::exists(specific)) return read_text_file(specific.string());
    auto path = dir_ / (stem + ".json");
    if (!std::filesystem::exists(path)) throw InputError("no fixture for '" + std::string(term) + "' at " + path.string());
    return read_text_file(path.string());
  }

 private:
  std::filesystem::path dir_;
};

/// OpenAI-style chat-completions client.
class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(ProviderConfig cfg) : cfg_(std::move(cfg)) {
    const auto scheme_end = cfg_.endpoint.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint must be an absolute URL: " + cfg_.endpoint);
    const auto path_start = cfg_.endpoint.find('/', scheme_end + 3);
    base_ = cfg_.endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : cfg_.endpoint.substr(path_start);
  }

  std::string complete(std::string_view system, std::string_view prompt, std::string_view, int) override {
    httplib::Client cli(base_);
    const auto secs = static_cast<time_t>(cfg_.request_timeout);
    const auto usecs = static_cast<time_t>((cfg_.request_timeout - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);

    nlohmann::json body = {
        {"model", cfg_.model},
        {"temperature", 0},
        {"messages",
         {{{"role", "system"}, {"content", std::string(system)}}, {{"role", "user"}, {"content", std::string(prompt)}}}},
    };
    auto res = cli.Post(path_, headers, body.dump(), "application/json");
    if (!res) throw TransportError("request to " + cfg_.endpoint + " failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw TransportError("request to " + cfg_.endpoint + " returned HTTP " + std::to_string(res->status));

    // An unexpected envelope is the model's problem, not the network's: hand
    // back the raw body so validation rejects it and the term is re-prompted.
    auto doc = nlohmann::json::parse(res->body, nullptr, false);
    if (doc.is_discarded()) return res->body;
    try {
      return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      return res->body;
    }
  }

 private:
  ProviderConfig cfg_;
  std::string base_;
  std::string path_;
};

inline std::unique_ptr<Transport> make_transport(const ProviderConfig& cfg) {
  if (cfg.max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (cfg.mode == ProviderMode::fixture) return std::make_unique<FixtureTransport>(cfg.fixture_dir);
  return std::make_unique<HttpTransport>(cfg);
}

/// Pulls the JSON object out of a reply that may be wrapped in prose or a
/// markdown fence.
inline nlohmann::ordered_json parse_reply_object(std::string_view reply) {
  const auto open = reply.find('{');
  const auto close = reply.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open)
    throw ParseError("reply contains no JSON object");
  auto doc = nlohmann::ordered_json::parse(reply.substr(open, close - open + 1), nullptr, false);
  if (doc.is_discarded()) throw ParseError("reply JSON object is malformed");
  return doc;
}

struct TermReport {
  std::string term;
  bool ok = false;
  int attempts = 0;
  std::string error;                       // last error, empty on success
  std::vector<std::string> raw_failures;   // every rejected reply, in order
  bool transport_failure = false;
};

struct ExtractionReport {
  std::vector<TermReport> terms;

  [[nodiscard]] std::size_t failures() const {
    return static_cast<std::size_t>(std::count_if(terms.begin(), terms.end(), [](const auto& t) { return !t.ok; }));
  }
};

inline nlohmann::ordered_json to_json(const ExtractionReport& r) {
  nlohmann::ordered_json terms = nlohmann::ordered_json::array();
  for (const auto& t : r.terms) {
    nlohmann::ordered_json j;
    j["term"] = t.term;
    j["status"] = t.ok ? "ok" : (t.transport_failure ? "transport_error" : "failed");
    j["attempts"] = t.attempts;
    if (!t.error.empty()) j["error"] = t.error;
    j["raw_failing_responses"] = t.raw_failures;
    terms.push_back(std::move(j));
  }
  nlohmann::ordered_json out;
  out["succeeded"] = r.terms.size() - r.failures();
  out["failed"] = r.failures();
  out["terms"] = std::move(terms);
  return out;
}

/// Runs the prompt/validate/re-prompt loop for one term. Fills `report` and
/// returns the entry, or throws ExtractionError / TransportError.
inline PckgEntry extract_entry(std::string_view vocab, Transport& transport, int max_retries, TermReport& report,
                               const PromptSpec& spec = {}) {
  report = {};
  report.term = std::string(vocab);
  std::string prompt = build_prompt(vocab, spec);
  std::string last_raw;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    report.attempts = attempt + 1;
    std::string raw;
    try {
      raw = transport.complete(kSystemPrompt, prompt, vocab, attempt);
    } catch (const TransportError& e) {
      report.error = e.what();
      if (attempt == max_retries) {
        report.transport_failure = true;
        throw;
      }
      continue;
    }
    try {
      auto obj = parse_reply_object(raw);
      // The vocabulary term is the key; the model's spelling of it is not trusted.
      obj[std::string(field::category)] = std::string(vocab);
      PckgEntry e = parse_entry(obj);
      report.ok = true;
      report.error.clear();
      return e;
    } catch (const Error& e) {
      report.error = e.what();
      report.raw_failures.push_back(raw);
      last_raw = std::move(raw);
      prompt = build_repair_prompt(vocab, spec, e.what());
    }
  }
  throw ExtractionError("extraction failed for '" + std::string(vocab) + "' after " + std::to_string(report.attempts) +
                            " attempts: " + report.error,
                        last_raw, report.attempts);
}

inline PckgEntry extract_entry(std::string_view vocab, const ProviderConfig& provider, const PromptSpec& spec = {}) {
  auto transport = make_transport(provider);
  TermReport report;
  return extract_entry(vocab, *transport, provider.max_retries, report, spec);
}

struct ExtractionResult {
  Pckg graph;
  ExtractionReport report;
};

/// Extracts every term; terms are processed up to `parallelism` at a time but
/// the graph is always assembled in input order.
inline ExtractionResult extract_graph(const std::vector<std::string>& vocab_list, Transport& transport,
                                      const ProviderConfig& provider, const PromptSpec& spec = {}) {
  if (vocab_list.empty()) throw InputError("extract_graph: empty vocabulary");
  std::set<std::string> seen;
  for (const auto& t : vocab_list) {
    if (t.empty()) throw InputError("extract_graph: empty vocabulary term");
    if (!seen.insert(t).second) throw InputError("extract_graph: duplicate vocabulary term '" + t + "'");
  }

  const std::size_t n = vocab_list.size();
  std::vector<std::optional<PckgEntry>> entries(n);
  ExtractionReport report;
  report.terms.resize(n);

  const auto run_one = [&](std::size_t i) {
    try {
      entries[i] = extract_entry(vocab_list[i], transport, provider.max_retries, report.terms[i], spec);
    } catch (const Error& e) {
      report.terms[i].ok = false;
      report.terms[i].error = e.what();
    }
  };

  const std::size_t width = static_cast<std::size_t>(std::max(1, provider.parallelism));
  for (std::size_t start = 0; start < n; start += width) {
    const std::size_t stop = std::min(n, start + width);
    if (width == 1) {
      run_one(start);
      continue;
    }
    std::vector<std::future<void>> batch;
    for (std::size_t i = start; i < stop; ++i) batch.push_back(std::async(std::launch::async, run_one, i));
    for (auto& f : batch) f.get();
  }

  std::vector<PckgEntry> ok;
  for (auto& e : entries)
    if (e) ok.push_back(std::move(*e));
  if (ok.empty()) {
    const bool all_transport = std::all_of(report.terms.begin(), report.terms.end(),
                                           [](const TermReport& t) { return t.transport_failure; });
    if (all_transport) throw TransportError("every term failed: provider unreachable");
    throw EmptyGraphError("every term failed extraction; no graph produced");
  }
  return {Pckg(std::move(ok)), std::move(report)};
}

inline ExtractionResult extract_graph(const std::vector<std::string>& vocab_list, const ProviderConfig& provider,
                                      const PromptSpec& spec = {}) {
  auto transport = make_transport(provider);
  return extract_graph(vocab_list, *transport, provider, spec);
}

}  // namespace priorseg
