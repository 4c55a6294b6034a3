#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "overlap_lab/errors.hpp"
#include "overlap_lab/runner.hpp"

using namespace overlap_lab;
namespace fs = std::filesystem;

namespace {

const fs::path kGolden = OVERLAP_LAB_GOLDEN_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("overlap_lab_test_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::string> problems_of(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ValidationError& e) {
    return e.problems();
  }
  return {};
}

bool mentions(const std::vector<std::string>& items, const std::string& needle) {
  return std::any_of(items.begin(), items.end(),
                     [&](const std::string& s) { return s.find(needle) != std::string::npos; });
}

int cli(const std::string& args) {
  const std::string cmd = std::string(OVERLAP_LAB_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

constexpr const char* kMinimal = R"({
  "measure": {"type": "tree", "branching": 20, "zetas": [0.5], "q": [1.0], "seed": 1},
  "checks": [{"name": "gg"}]
})";

}  // namespace

TEST(Config, MinimalTreeConfigParses) {
  const auto cfg = parse_config_text(kMinimal);
  ASSERT_EQ(cfg.checks.size(), 1u);
  EXPECT_EQ(cfg.checks[0].name, "gg");
  EXPECT_EQ(cfg.measure.at("type"), "tree");
  EXPECT_EQ(cfg.format, OutputFormat::both);
  EXPECT_TRUE(cfg.warnings.empty());
}

TEST(Config, WeightsNotSummingToOneNameTheField) {
  const auto p = problems_of(R"({
    "measure": {"type": "explicit", "atoms": [[1, 0], [0, 1]], "weights": [0.5, 0.4],
                "grid": {"levels": [0.0, 1.0]}},
    "checks": [{"name": "support"}]
  })");
  ASSERT_FALSE(p.empty());
  EXPECT_TRUE(mentions(p, "measure.weights"));
  EXPECT_TRUE(mentions(p, "0.9"));
}

TEST(Config, UnknownCheckListsAllowedNames) {
  const auto p = problems_of(R"({
    "measure": {"type": "adversarial"},
    "checks": [{"name": "gg"}, {"name": "bogus"}]
  })");
  ASSERT_EQ(p.size(), 1u);
  EXPECT_TRUE(mentions(p, "checks[1].name"));
  for (const auto& name : check_names()) EXPECT_TRUE(mentions(p, name)) << name;
  EXPECT_EQ(check_names().size(), 10u);
}

TEST(Config, EveryProblemIsReported) {
  const auto p = problems_of(R"({
    "measure": {"type": "tree", "branching": 1, "zetas": [0.5], "q": [1.0], "colour": 3},
    "checks": [{"name": "mass", "n_max": 1}, {"name": "nope"}],
    "seed": -4,
    "output": {"format": "xml"}
  })");
  EXPECT_GE(p.size(), 5u);
  EXPECT_TRUE(mentions(p, "measure.branching"));
  EXPECT_TRUE(mentions(p, "measure.colour"));
  EXPECT_TRUE(mentions(p, "checks[0].n_max"));
  EXPECT_TRUE(mentions(p, "checks[1].name"));
  EXPECT_TRUE(mentions(p, "seed"));
  EXPECT_TRUE(mentions(p, "output.format"));
}

TEST(Config, SyntaxErrorReportsLineAndColumn) {
  try {
    parse_config_text("{\n  \"measure\": {\n    \"type\": \"tree\",,\n  }\n}");
    FAIL();
  } catch (const ValidationError&) {
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::parse_error);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Config, MissingMeasureFileIsReported) {
  const auto p = problems_of(R"({
    "measure": {"type": "explicit", "file": "no_such_measure.json"},
    "checks": [{"name": "support"}]
  })");
  EXPECT_TRUE(mentions(p, "measure.file"));
}

TEST(Config, NegativeGridWarnsButIsAccepted) {
  const auto cfg = parse_config_text(R"({
    "measure": {"type": "explicit", "atoms": [[1, 0], [-0.5, 0.8660254037844386]],
                "weights": [0.5, 0.5], "grid": {"levels": [-0.5, 1.0]}},
    "checks": [{"name": "support"}]
  })");
  ASSERT_EQ(cfg.warnings.size(), 1u);
  EXPECT_NE(cfg.warnings[0].find("negative"), std::string::npos);
}

TEST(Config, HashIgnoresKeyOrder) {
  const auto a = nlohmann::json::parse(R"({"seed": 1, "measure": {"type": "tree", "q": [1]}})");
  const auto b = nlohmann::json::parse(R"({"measure": {"q": [1], "type": "tree"}, "seed": 1})");
  const auto c = nlohmann::json::parse(R"({"measure": {"q": [1], "type": "tree"}, "seed": 2})");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(c));
}

TEST(Golden, PassConfigExitsZero) {
  const auto out = scratch("pass");
  RunOptions o;
  o.out = out;
  const auto r = run(parse_config(kGolden / "pass.json"), o);
  EXPECT_EQ(r.exit_code, 0);
  for (const char* f : {"results.csv", "plot_data.csv", "summary.json", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(manifest.at("tool_version"), kToolVersion);
  EXPECT_EQ(manifest.at("exit_code"), 0);
  EXPECT_EQ(manifest.at("config_hash").get<std::string>().size(), 16u);
  EXPECT_EQ(manifest.at("checks").size(), r.results.size());
  EXPECT_TRUE(manifest.at("checks")[0].contains("wall_seconds"));
  EXPECT_EQ(cli("run " + (kGolden / "pass.json").string() + " --out " + out.string()), 0);
}

TEST(Golden, AdversarialGgExitsTwoWithFailingRow) {
  const auto out = scratch("fail");
  RunOptions o;
  o.out = out;
  const auto r = run(parse_config(kGolden / "fail.json"), o);
  EXPECT_EQ(r.exit_code, 2);
  const std::string csv = slurp(out / "results.csv");
  EXPECT_NE(csv.find("gg,adversarial,2,"), std::string::npos);
  EXPECT_NE(csv.find(",false\n"), std::string::npos);
  EXPECT_EQ(cli("run " + (kGolden / "fail.json").string() + " --out " + out.string()), 2);
}

TEST(Golden, MissingOutputParentExitsOne) {
  const auto cfg = parse_config(kGolden / "error.json");
  try {
    run(cfg, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::io_error);
  }
  EXPECT_EQ(cli("run " + (kGolden / "error.json").string()), 1);
}

TEST(Golden, OutputDirectoryIsCreatedUnderExistingParent) {
  const auto parent = scratch("created");
  fs::create_directory(parent);
  RunOptions o;
  o.out = parent / "fresh";
  o.format = OutputFormat::csv;
  run(parse_config_text(kMinimal), o);
  EXPECT_TRUE(fs::exists(parent / "fresh" / "results.csv"));
  EXPECT_FALSE(fs::exists(parent / "fresh" / "summary.json"));
  EXPECT_TRUE(fs::exists(parent / "fresh" / "manifest.json"));
}

TEST(Golden, CsvIsByteIdenticalAcrossJobCounts) {
  const auto cfg = parse_config(kGolden / "determinism.json");
  std::string results, plot;
  for (int jobs : {1, 4, 8}) {
    const auto out = scratch("jobs" + std::to_string(jobs));
    RunOptions o;
    o.out = out;
    o.jobs = jobs;
    run(cfg, o);
    const std::string a = slurp(out / "results.csv");
    const std::string b = slurp(out / "plot_data.csv");
    EXPECT_GT(std::count(a.begin(), a.end(), '\n'), 50);
    EXPECT_EQ(a.find('\r'), std::string::npos);
    if (jobs == 1) {
      results = a;
      plot = b;
    } else {
      EXPECT_EQ(a, results) << "jobs=" << jobs;
      EXPECT_EQ(b, plot) << "jobs=" << jobs;
    }
  }
}

TEST(Golden, SeedOverrideChangesMonteCarloOutput) {
  const auto cfg = parse_config(kGolden / "determinism.json");
  RunOptions o;
  o.write = false;
  const auto a = results_csv(run(cfg, o).results);
  o.seed = 43;
  const auto b = results_csv(run(cfg, o).results);
  EXPECT_NE(a, b);
}

TEST(Reports, EmptyPlotListThrows) {
  try {
    emit_plot_data({}, fs::temp_directory_path() / "overlap_lab_never.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_argument);
  }
}

TEST(Reports, MassCheckPlotsOneRowPerN) {
  const auto cfg = parse_config_text(R"({
    "measure": {"type": "tree", "branching": 50, "zetas": [0.5], "q": [1.0], "seed": 2},
    "mc": {"outer": 50, "inner": 20},
    "checks": [{"name": "mass", "n_max": 5}]
  })");
  RunOptions o;
  o.write = false;
  const auto r = run(cfg, o);
  ASSERT_EQ(r.results.size(), 1u);
  EXPECT_EQ(r.results[0].plot.size(), 4u);
  const std::string csv = plot_csv(r.results);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "check_name,series,n,estimate,reference,se");
}

TEST(Reports, CheckErrorsAreRecordedNotThrown) {
  const auto cfg = parse_config_text(R"({
    "measure": {"type": "tree", "branching": 20, "zetas": [0.5], "q": [1.0], "seed": 2},
    "checks": [{"name": "criterion", "q": -0.5, "patterns": [[1, 1, 1]]}, {"name": "support"}]
  })");
  RunOptions o;
  o.write = false;
  const auto r = run(cfg, o);
  ASSERT_EQ(r.results.size(), 2u);
  EXPECT_EQ(r.results[0].status, CheckStatus::error);
  EXPECT_FALSE(r.results[0].error.empty());
  EXPECT_EQ(r.results[1].status, CheckStatus::pass);
  EXPECT_EQ(r.exit_code, 1);
}

TEST(Cli, ValidateAndDescribe) {
  EXPECT_EQ(cli("validate " + (kGolden / "pass.json").string()), 0);
  EXPECT_EQ(cli("describe-measure " + (kGolden / "fail.json").string()), 0);
  EXPECT_EQ(cli("validate /nonexistent/config.json"), 1);
  EXPECT_EQ(cli("--version"), 0);
}
