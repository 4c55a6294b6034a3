// Command-line front end: run, validate, describe-measure, oracle.

#include <fmt/format.h>

#include <cstdio>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "overlap_lab/parallel.hpp"
#include "overlap_lab/runner.hpp"

namespace ol = overlap_lab;

namespace {

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out;
  std::optional<std::string> format;
};

void add_common(CLI::App* cmd, Args& args, bool run_flags) {
  cmd->add_option("config", args.config, "Experiment config (JSON)")->required();
  cmd->add_option("--seed", args.seed, "Master seed (overrides the config)");
  if (!run_flags) return;
  cmd->add_option("--jobs", args.jobs, "Worker threads (default: $OVERLAP_LAB_JOBS or all cores)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--out", args.out, "Output directory (overrides the config)");
  cmd->add_option("--format", args.format, "csv, json or both")
      ->check(CLI::IsMember({"csv", "json", "both"}));
}

ol::ExperimentConfig load(const std::string& path) {
  auto config = ol::parse_config(path);
  for (const auto& w : config.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  return config;
}

void print_problems(const ol::ValidationError& e) {
  std::fprintf(stderr, "invalid config:\n");
  for (const auto& p : e.problems()) std::fprintf(stderr, "  %s\n", p.c_str());
}

int run_command(const Args& args, bool oracle) {
  const auto config = load(args.config);
  ol::RunOptions options;
  options.seed = args.seed;
  options.jobs = args.jobs.value_or(ol::default_jobs());
  options.oracle = oracle;
  if (args.out) options.out = *args.out;
  if (args.format) {
    options.format = *args.format == "csv"    ? ol::OutputFormat::csv
                     : *args.format == "json" ? ol::OutputFormat::json
                                              : ol::OutputFormat::both;
  }
  const auto outcome = ol::run(config, options);
  for (const auto& r : outcome.results) {
    std::size_t failed = 0;
    for (const auto& row : r.rows) failed += row.pass ? 0 : 1;
    if (r.status == ol::CheckStatus::error) {
      fmt::print("{:<12} error  {}\n", r.name, r.error);
    } else {
      fmt::print("{:<12} {:<6} {} rows, {} failing, {:.2f}s\n", r.name, ol::to_string(r.status),
                 r.rows.size(), failed, r.wall_seconds);
    }
  }
  fmt::print("reports in {} (exit {})\n", outcome.out_dir.string(), outcome.exit_code);
  return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Replica overlap array verification laboratory"};
  app.set_version_flag("--version", ol::kToolVersion);
  app.require_subcommand(1);

  Args args;
  auto* run = app.add_subcommand("run", "Run every check and write reports");
  add_common(run, args, true);
  auto* oracle = app.add_subcommand("oracle", "Run with exact enumeration wherever feasible");
  add_common(oracle, args, true);
  auto* validate = app.add_subcommand("validate", "Parse and validate a config");
  add_common(validate, args, false);
  auto* describe = app.add_subcommand("describe-measure", "Print grid, level probabilities, atoms");
  add_common(describe, args, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (validate->parsed()) {
      const auto config = load(args.config);
      fmt::print("valid: {} check(s), measure type {}\n", config.checks.size(),
                 config.measure.at("type").get<std::string>());
      return 0;
    }
    if (describe->parsed()) {
      const auto config = load(args.config);
      fmt::print("{}", ol::describe_measure(config, args.seed));
      return 0;
    }
    return run_command(args, oracle->parsed());
  } catch (const ol::ValidationError& e) {
    print_problems(e);
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
