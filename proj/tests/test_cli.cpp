#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "priorseg/extraction.hpp"
#include "support.hpp"

#ifndef PRIORSEG_CLI_PATH
#error "PRIORSEG_CLI_PATH must point at the priorseg executable"
#endif

using namespace priorseg;
using priorseg::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

RunResult run(const fs::path& cwd, const std::string& args) {
  const fs::path out = cwd / ".stdout", err = cwd / ".stderr";
  const std::string cmd = "cd " + quote(cwd.string()) + " && " + quote(PRIORSEG_CLI_PATH) + " " + args + " >" +
                          quote(out.string()) + " 2>" + quote(err.string());
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

/// Grid text without the provenance comment lines.
std::string without_comments(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line))
    if (line.empty() || line[0] != '#') out += line + "\n";
  return out;
}

const std::string kWater = R"([{"Category": "water", "Meaning": "m", "Modifier Analysis": "a", "Coarse Class": "water",
  "NDVI Range": [0.60, 0.20], "DEM Range": [0.00, 50.00], "SAR Range": [-25.00, -15.00], "Reasoning": "r"}])";

}  // namespace

TEST(Cli, ValidateAcceptsDemoGraph) {
  TempDir dir("cli");
  ASSERT_EQ(run(dir.path(), "synth --demo --out demo").code, 0);
  const RunResult r = run(dir.path(), "pckg validate --pckg demo/pckg.json");
  EXPECT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["valid"], true);
  EXPECT_EQ(j["classes"], 4);
}

TEST(Cli, ValidateRejectsInvertedInterval) {
  TempDir dir("cli");
  std::ofstream(dir.path() / "bad.json") << kWater;
  const RunResult r = run(dir.path(), "pckg validate --pckg bad.json");
  EXPECT_EQ(r.code, 1);
  const auto j = nlohmann::json::parse(r.err);
  EXPECT_EQ(j["error"]["kind"], "validation");
  EXPECT_EQ(j["error"]["exit_code"], 1);
  const std::string msg = j["error"]["message"];
  EXPECT_NE(msg.find("water"), std::string::npos);
  EXPECT_NE(msg.find("NDVI Range"), std::string::npos);
}

TEST(Cli, ExtractFromFixtures) {
  TempDir dir("cli");
  const fs::path fx = dir.path() / "fx";
  fs::create_directories(fx);
  const char* terms[] = {"water", "forest", "bare soil", "wetland", "urban"};
  std::ofstream vocab(dir.path() / "vocab.txt");
  for (const char* t : terms) {
    vocab << t << "\n";
    PckgEntry e;
    e.category = t;
    e.meaning = e.modifier_analysis = e.coarse_class = e.reasoning = "x";
    e.range(Modality::ndvi) = {-0.2, 0.4};
    e.range(Modality::dem) = {0, 100};
    e.range(Modality::sar) = {-20, -5};
    std::ofstream(fx / (percent_encode(t) + ".json")) << serialize_entry(e);
  }
  vocab.close();
  const RunResult r = run(dir.path(), "pckg extract --vocab vocab.txt --fixtures fx --out g");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_pckg((dir.path() / "g" / "pckg.json").string()).size(), 5u);
  const auto rep = nlohmann::json::parse(slurp(dir.path() / "g" / "extraction_report.json"));
  EXPECT_EQ(rep["succeeded"], 5);
  EXPECT_TRUE(rep.contains("provenance"));
}

TEST(Cli, VisualModeIgnoresRasters) {
  TempDir dir("cli");
  ASSERT_EQ(run(dir.path(), "synth --demo --out d").code, 0);
  ASSERT_EQ(run(dir.path(), "train --pckg d/pckg.json --scene d/scene1 --epochs 10 --out m").code, 0);
  const RunResult a = run(dir.path(), "refine --pckg d/pckg.json --params m/params.txt --scene d/scene2 --mode visual --out va");
  ASSERT_EQ(a.code, 0) << a.err;
  const RunResult b = run(dir.path(),
                          "refine --pckg d/pckg.json --params m/params.txt --features d/scene2/features.grid "
                          "--coarse d/scene2/coarse.grid --mode visual --out vb");
  ASSERT_EQ(b.code, 0) << b.err;
  // with rasters listed explicitly, including a mislabeled one
  const RunResult c = run(dir.path(),
                          "refine --pckg d/pckg.json --params m/params.txt --features d/scene2/features.grid "
                          "--coarse d/scene2/coarse.grid --rasters ndvi=d/scene1/ndvi.grid,sar=d/scene2/dem.grid "
                          "--mode visual --out vc");
  ASSERT_EQ(c.code, 0) << c.err;
  for (const char* f : {"labels.grid", "probs.grid"}) {
    const std::string ref = without_comments(slurp(dir.path() / "vb" / f));
    EXPECT_EQ(without_comments(slurp(dir.path() / "va" / f)), ref) << f;
    EXPECT_EQ(without_comments(slurp(dir.path() / "vc" / f)), ref) << f;
  }
  const auto summary = nlohmann::json::parse(slurp(dir.path() / "va" / "summary.json"));
  EXPECT_TRUE(summary["scenes"][0]["available"].empty());
}

TEST(Cli, PhysicalModeUsesRastersAndEvalReports) {
  TempDir dir("cli");
  ASSERT_EQ(run(dir.path(), "synth --demo --out d").code, 0);
  ASSERT_EQ(run(dir.path(), "train --pckg d/pckg.json --scene d/scene1 --scene d/scene2 --epochs 40 --out m").code, 0);
  const RunResult r = run(dir.path(), "refine --pckg d/pckg.json --params m/params.txt --scene d/scene3 --out p");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = nlohmann::json::parse(slurp(dir.path() / "p" / "summary.json"));
  EXPECT_EQ(summary["scenes"][0]["available"].size(), 3u);
  const RunResult e = run(dir.path(),
                          "eval --pckg d/pckg.json --pred p/labels.grid --labels d/scene3/labels.grid "
                          "--rasters ndvi=d/scene3/ndvi.grid,dem=d/scene3/dem.grid,sar=d/scene3/sar.grid "
                          "--reference sar=d/scene3/sar.grid --out e");
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(e.out.rfind("mIoU: ", 0), 0u);
  const auto metrics = nlohmann::json::parse(slurp(dir.path() / "e" / "metrics.json"));
  EXPECT_TRUE(metrics.contains("plausibility"));
  EXPECT_TRUE(metrics.contains("reliability"));
  EXPECT_TRUE(fs::exists(dir.path() / "e" / "reliability.csv"));
}

TEST(Cli, SynthFromLabels) {
  TempDir dir("cli");
  ASSERT_EQ(run(dir.path(), "synth --demo --out d").code, 0);
  const RunResult r =
      run(dir.path(), "synth --pckg d/pckg.json --labels d/scene1/labels.grid --modalities ndvi,sar --noise uniform --out s");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir.path() / "s" / "ndvi.grid"));
  EXPECT_TRUE(fs::exists(dir.path() / "s" / "sar.grid"));
  EXPECT_FALSE(fs::exists(dir.path() / "s" / "dem.grid"));
}

TEST(Cli, ConfigFileWithFlagOverride) {
  TempDir dir("cli");
  std::ofstream(dir.path() / "cfg.json") << R"({"seed": 3, "train": {"epochs": 2}})";
  ASSERT_EQ(run(dir.path(), "synth --demo --out d").code, 0);
  const RunResult r = run(dir.path(), "train --config cfg.json --epochs 4 --pckg d/pckg.json --scene d/scene1 --out m");
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(dir.path() / "m" / "loss_history.csv");
  EXPECT_NE(csv.find("# seed: 3"), std::string::npos);
  EXPECT_NE(csv.find("\n3,"), std::string::npos);
  EXPECT_EQ(csv.find("\n4,"), std::string::npos);

  std::ofstream(dir.path() / "typo.json") << R"({"trian": {}})";
  const RunResult bad = run(dir.path(), "train --config typo.json --pckg d/pckg.json --scene d/scene1 --out m2");
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("trian"), std::string::npos);
}

TEST(Cli, ExitCodes) {
  TempDir dir("cli");
  EXPECT_EQ(run(dir.path(), "").code, 1);
  EXPECT_EQ(run(dir.path(), "bogus").code, 1);
  EXPECT_EQ(run(dir.path(), "pckg validate --pckg missing.json").code, 1);
  EXPECT_EQ(run(dir.path(), "refine --mode sideways").code, 1);
  EXPECT_EQ(run(dir.path(), "--version").code, 0);

  // non-finite parameters are a runtime failure
  ASSERT_EQ(run(dir.path(), "synth --demo --out d").code, 0);
  ASSERT_EQ(run(dir.path(), "train --pckg d/pckg.json --scene d/scene1 --epochs 1 --out m").code, 0);
  std::string params = slurp(dir.path() / "m" / "params.txt");
  const auto last = params.rfind('\n', params.size() - 2);
  params = params.substr(0, last + 1) + "nan\n";
  std::ofstream(dir.path() / "m" / "bad.txt") << params;
  const RunResult r = run(dir.path(), "refine --pckg d/pckg.json --params m/bad.txt --scene d/scene2 --out p");
  EXPECT_EQ(r.code, 2) << r.err;

  // nothing listening: transport failure
  std::ofstream(dir.path() / "v.txt") << "water\n";
  const RunResult t = run(dir.path(),
                          "pckg extract --vocab v.txt --endpoint http://127.0.0.1:1/v1/chat/completions "
                          "--max-retries 0 --out g");
  EXPECT_EQ(t.code, 3) << t.err;
  EXPECT_EQ(nlohmann::json::parse(t.err)["error"]["kind"], "transport");
}

TEST(Cli, ToyExampleFixturesReproduceDemoGraph) {
  TempDir dir("cli");
  const fs::path toy = fs::path(PRIORSEG_SOURCE_DIR) / "examples" / "toy";
  const RunResult r = run(dir.path(), "pckg extract --vocab " + quote((toy / "vocab.txt").string()) + " --fixtures " +
                                          quote((toy / "fixtures").string()) + " --out g");
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_EQ(run(dir.path(), "synth --demo --out d").code, 0);
  EXPECT_EQ(slurp(dir.path() / "g" / "pckg.json"), slurp(dir.path() / "d" / "pckg.json"));
  const auto rep = nlohmann::json::parse(slurp(dir.path() / "g" / "extraction_report.json"));
  EXPECT_EQ(rep["succeeded"], 4);
}
