#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "priorseg/extraction.hpp"
#include "support.hpp"

using namespace priorseg;
using priorseg::testing::TempDir;

namespace {

std::string entry_json(const std::string& term, double sar_lo = -25.0, double sar_hi = -15.0) {
  nlohmann::ordered_json j;
  j["Category"] = term;
  j["Meaning"] = "meaning of " + term;
  j["Modifier Analysis"] = "none";
  j["Coarse Class"] = "misc";
  j["NDVI Range"] = {-0.5, 0.1};
  j["DEM Range"] = {0.0, 50.0};
  j["SAR Range"] = {sar_lo, sar_hi};
  j["Reasoning"] = "because";
  return j.dump(2);
}

void write_fixture(const std::filesystem::path& dir, const std::string& term, const std::string& body,
                   int attempt = -1) {
  const std::string stem = percent_encode(term) + (attempt >= 0 ? "." + std::to_string(attempt) : "");
  write_text_file((dir / (stem + ".json")).string(), body);
}

ProviderConfig fixture_cfg(const std::filesystem::path& dir, int retries = 2) {
  ProviderConfig c;
  c.mode = ProviderMode::fixture;
  c.fixture_dir = dir;
  c.max_retries = retries;
  return c;
}

/// Counts requests and answers from a fixed list.
class ScriptedTransport final : public Transport {
 public:
  explicit ScriptedTransport(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  std::string complete(std::string_view, std::string_view prompt, std::string_view, int attempt) override {
    prompts.emplace_back(prompt);
    attempts.push_back(attempt);
    const std::size_t k = std::min(calls++, replies_.size() - 1);
    if (replies_[k] == "!transport") throw TransportError("scripted outage");
    return replies_[k];
  }
  std::size_t calls = 0;
  std::vector<std::string> prompts;
  std::vector<int> attempts;

 private:
  std::vector<std::string> replies_;
};

}  // namespace

TEST(Prompt, ContainsTermAndAllFields) {
  const std::string p = build_prompt("bare soil");
  EXPECT_NE(p.find("bare soil"), std::string::npos);
  for (auto f : kRequiredFields) EXPECT_NE(p.find(std::string(f)), std::string::npos) << f;
  EXPECT_NE(build_prompt("urban park").find("urban park"), std::string::npos);
}

TEST(Prompt, EmptyTermIsInputError) { EXPECT_THROW(build_prompt(""), InputError); }

TEST(Prompt, UnknownTemplateIsConfigError) {
  PromptSpec s;
  s.instruction_template_id = "v9";
  EXPECT_THROW(build_prompt("water", s), ConfigError);
}

TEST(Prompt, RepairPromptCarriesError) {
  const std::string p = build_repair_prompt("water", {}, "inverted interval in 'water' field \"SAR Range\"");
  EXPECT_NE(p.find("water"), std::string::npos);
  EXPECT_NE(p.find("inverted interval"), std::string::npos);
}

TEST(Reply, ExtractsObjectFromFencedText) {
  const auto j = parse_reply_object("Sure!\n```json\n{\"a\": 1}\n```\n");
  EXPECT_EQ(j["a"], 1);
  EXPECT_THROW(parse_reply_object("no json here"), ParseError);
}

TEST(PercentEncode, Basics) {
  EXPECT_EQ(percent_encode("bare soil"), "bare%20soil");
  EXPECT_EQ(percent_encode("a/b"), "a%2Fb");
  EXPECT_EQ(percent_encode("x-y_z.~"), "x-y_z.~");
}

TEST(Fixture, ValidReplyGivesEntry) {
  TempDir dir("fx");
  write_fixture(dir.path(), "water", entry_json("water"));
  const PckgEntry e = extract_entry("water", fixture_cfg(dir.path()));
  EXPECT_EQ(e.category, "water");
  EXPECT_EQ(e.range(Modality::sar).lo, -25.0);
}

TEST(Fixture, CategoryIsTheVocabularyTerm) {
  TempDir dir("fx");
  write_fixture(dir.path(), "water", entry_json("Water body"));
  EXPECT_EQ(extract_entry("water", fixture_cfg(dir.path())).category, "water");
}

TEST(Fixture, InvertedIntervalFailsAfterRetries) {
  TempDir dir("fx");
  write_fixture(dir.path(), "water", entry_json("water", -15.0, -25.0));
  FixtureTransport t(dir.path());
  TermReport rep;
  try {
    extract_entry("water", t, 2, rep);
    FAIL() << "no error";
  } catch (const ExtractionError& e) {
    EXPECT_EQ(e.attempts(), 3);
    EXPECT_NE(e.raw_response().find("SAR Range"), std::string::npos);
    EXPECT_EQ(e.error_class(), ErrorClass::input);
  }
  EXPECT_EQ(rep.attempts, 3);
  EXPECT_EQ(rep.raw_failures.size(), 3u);
}

TEST(Fixture, AttemptSpecificFileRepairs) {
  TempDir dir("fx");
  write_fixture(dir.path(), "water", entry_json("water", -15.0, -25.0));
  write_fixture(dir.path(), "water", entry_json("water"), 1);
  FixtureTransport t(dir.path());
  TermReport rep;
  const PckgEntry e = extract_entry("water", t, 2, rep);
  EXPECT_EQ(e.category, "water");
  EXPECT_EQ(rep.attempts, 2);
  EXPECT_EQ(rep.raw_failures.size(), 1u);
}

TEST(Fixture, MissingFixtureIsInputError) {
  TempDir dir("fx");
  FixtureTransport t(dir.path());
  EXPECT_THROW(t.complete("", "", "nothing", 0), InputError);
}

TEST(Extract, RepairPromptFollowsInvalidReply) {
  ScriptedTransport t({"{\"Category\": \"x\"}", entry_json("water")});
  TermReport rep;
  extract_entry("water", t, 2, rep);
  ASSERT_EQ(t.prompts.size(), 2u);
  EXPECT_EQ(t.attempts, (std::vector<int>{0, 1}));
  EXPECT_NE(t.prompts[1].find("missing field"), std::string::npos);
}

TEST(Extract, AttemptsBoundedByRetries) {
  for (int retries : {0, 1, 4}) {
    ScriptedTransport t({"not json"});
    TermReport rep;
    EXPECT_THROW(extract_entry("water", t, retries, rep), ExtractionError);
    EXPECT_EQ(t.calls, static_cast<std::size_t>(retries + 1));
  }
}

TEST(Extract, TransportFailureAfterRetries) {
  ScriptedTransport t({"!transport"});
  TermReport rep;
  EXPECT_THROW(extract_entry("water", t, 2, rep), TransportError);
  EXPECT_EQ(t.calls, 3u);
  EXPECT_TRUE(rep.transport_failure);
}

TEST(Extract, TransientTransportFailureRecovers) {
  ScriptedTransport t({"!transport", entry_json("water")});
  TermReport rep;
  EXPECT_EQ(extract_entry("water", t, 2, rep).category, "water");
}

TEST(Batch, FiveValidFixturesGiveFiveClasses) {
  TempDir dir("fx");
  const std::vector<std::string> terms{"water", "bare soil", "urban park", "metal roof", "paddy field"};
  for (const auto& t : terms) write_fixture(dir.path(), t, entry_json(t));
  const auto res = extract_graph(terms, fixture_cfg(dir.path()));
  ASSERT_EQ(res.graph.size(), 5u);
  for (std::size_t i = 0; i < terms.size(); ++i) EXPECT_EQ(res.graph.entry(static_cast<int>(i) + 1).category, terms[i]);
  EXPECT_EQ(res.report.failures(), 0u);
}

TEST(Batch, OneInvalidFixtureIsReported) {
  TempDir dir("fx");
  write_fixture(dir.path(), "a", entry_json("a"));
  write_fixture(dir.path(), "b", entry_json("b", 3.0, 1.0));
  write_fixture(dir.path(), "c", entry_json("c"));
  const auto res = extract_graph({"a", "b", "c"}, fixture_cfg(dir.path()));
  EXPECT_EQ(res.graph.size(), 2u);
  EXPECT_EQ(res.report.failures(), 1u);
  EXPECT_FALSE(res.report.terms[1].ok);
  EXPECT_EQ(res.graph.class_id("c"), 2);
  const auto j = to_json(res.report);
  EXPECT_EQ(j["failed"], 1);
  EXPECT_EQ(j["terms"][1]["status"], "failed");
}

TEST(Batch, AllFailingIsEmptyGraphError) {
  TempDir dir("fx");
  write_fixture(dir.path(), "a", "garbage");
  EXPECT_THROW(extract_graph({"a"}, fixture_cfg(dir.path(), 0)), EmptyGraphError);
}

TEST(Batch, RejectsEmptyAndDuplicateVocabulary) {
  TempDir dir("fx");
  EXPECT_THROW(extract_graph({}, fixture_cfg(dir.path())), InputError);
  EXPECT_THROW(extract_graph({"a", "a"}, fixture_cfg(dir.path())), InputError);
  EXPECT_THROW(extract_graph({"a", ""}, fixture_cfg(dir.path())), InputError);
}

TEST(Batch, FixtureModeIsByteDeterministicAndOrderStable) {
  TempDir dir("fx");
  std::vector<std::string> terms;
  for (int k = 0; k < 12; ++k) {
    terms.push_back("term " + std::to_string(k));
    write_fixture(dir.path(), terms.back(), entry_json(terms.back()));
  }
  ProviderConfig serial = fixture_cfg(dir.path());
  ProviderConfig parallel = serial;
  parallel.parallelism = 4;
  const std::string a = serialize_pckg(extract_graph(terms, serial).graph);
  const std::string b = serialize_pckg(extract_graph(terms, serial).graph);
  const std::string c = serialize_pckg(extract_graph(terms, parallel).graph);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
}

TEST(Transport, NegativeRetriesRejected) {
  ProviderConfig c;
  c.max_retries = -1;
  EXPECT_THROW(make_transport(c), ConfigError);
}

// Live transport against a local chat-completions stand-in.
class HttpTransportTest : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      last_auth_ = req.get_header_value("Authorization");
      const auto body = nlohmann::json::parse(req.body);
      last_model_ = body["model"];
      const std::string prompt = body["messages"][1]["content"];
      if (mode_ == "fail") {
        res.status = 503;
        return;
      }
      std::string content = entry_json(prompt.find("bare soil") != std::string::npos ? "bare soil" : "x");
      if (mode_ == "envelope_then_ok" && requests_ == 1) {
        res.set_content("{\"unexpected\": true}", "application/json");
        return;
      }
      nlohmann::json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
      res.set_content(reply.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    setenv("PRIORSEG_TEST_KEY", "sk-test", 1);
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }
  ProviderConfig cfg(int retries = 2) {
    ProviderConfig c;
    c.mode = ProviderMode::live;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
    c.api_key_env = "PRIORSEG_TEST_KEY";
    c.model = "test-model";
    c.max_retries = retries;
    c.request_timeout = 5.0;
    return c;
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> requests_{0};
  std::string mode_ = "ok";
  std::string last_auth_, last_model_;
};

TEST_F(HttpTransportTest, ExtractsEntryOverHttp) {
  const PckgEntry e = extract_entry("bare soil", cfg());
  EXPECT_EQ(e.category, "bare soil");
  EXPECT_EQ(last_auth_, "Bearer sk-test");
  EXPECT_EQ(last_model_, "test-model");
  EXPECT_EQ(requests_, 1);
}

TEST_F(HttpTransportTest, ServerErrorsBecomeTransportErrorAfterRetries) {
  mode_ = "fail";
  EXPECT_THROW(extract_entry("bare soil", cfg(1)), TransportError);
  EXPECT_EQ(requests_, 2);
}

TEST_F(HttpTransportTest, UnexpectedEnvelopeIsRePrompted) {
  mode_ = "envelope_then_ok";
  EXPECT_EQ(extract_entry("bare soil", cfg()).category, "bare soil");
  EXPECT_EQ(requests_, 2);
}

TEST_F(HttpTransportTest, AllTermsUnreachableIsTransportError) {
  mode_ = "fail";
  EXPECT_THROW(extract_graph({"a", "b"}, cfg(0)), TransportError);
}

TEST(HttpTransport, UnreachableHostIsTransportError) {
  ProviderConfig c;
  c.mode = ProviderMode::live;
  c.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  c.request_timeout = 1.0;
  c.max_retries = 0;
  EXPECT_THROW(extract_entry("water", c), TransportError);
}

TEST(HttpTransport, RelativeEndpointIsConfigError) {
  ProviderConfig c;
  c.mode = ProviderMode::live;
  c.endpoint = "localhost/v1";
  EXPECT_THROW(make_transport(c), ConfigError);
}
