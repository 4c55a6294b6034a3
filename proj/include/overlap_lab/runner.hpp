#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "overlap_lab/errors.hpp"
#include "overlap_lab/estimation.hpp"
#include "overlap_lab/sampler.hpp"

namespace overlap_lab {

inline constexpr const char* kToolVersion = "0.1.0";

/// Every problem found in a config, in document order.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

enum class OutputFormat { csv, json, both };

struct CheckConfig {
  std::string name;
  nlohmann::json params = nlohmann::json::object();
};

struct ExperimentConfig {
  nlohmann::json measure;
  std::vector<CheckConfig> checks;
  std::uint64_t seed = 0;
  McSizes mc;
  std::string backend = "monte_carlo";  // monte_carlo | enumeration | auto
  std::filesystem::path output_dir = "out";
  OutputFormat format = OutputFormat::both;
  std::filesystem::path base_dir;  // resolves relative file references
  nlohmann::json raw;
  std::vector<std::string> warnings;  // accepted but unusual, e.g. negative grid levels
};

const std::vector<std::string>& check_names();

ExperimentConfig parse_config(const std::filesystem::path& path);
ExperimentConfig parse_config_text(std::string_view text,
                                   const std::filesystem::path& base_dir = {});

Model build_model(const ExperimentConfig& config);

/// 64-bit FNV-1a of the key-sorted compact dump.
std::uint64_t config_hash(const nlohmann::json& j);

struct ResultRow {
  std::string check_name;
  std::string model_id;
  int n = 0;
  std::string observable_id;
  double estimate = 0.0;
  double reference = 0.0;
  double residual = 0.0;
  double se = 0.0;
  bool pass = false;
};

struct PlotRow {
  std::string check_name;
  std::string series;
  int n = 0;
  double estimate = 0.0;
  double reference = 0.0;
  double se = 0.0;
};

enum class CheckStatus { pass, fail, error };
const char* to_string(CheckStatus s) noexcept;

struct CheckResult {
  std::string name;
  CheckStatus status = CheckStatus::pass;
  std::string error;
  std::vector<ResultRow> rows;
  std::vector<PlotRow> plot;
  nlohmann::json detail;
  double wall_seconds = 0.0;
};

struct RunOptions {
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::optional<std::filesystem::path> out;
  std::optional<OutputFormat> format;
  bool oracle = false;  // enumeration wherever feasible
  bool write = true;
};

struct RunOutcome {
  int exit_code = 0;
  std::vector<CheckResult> results;
  std::filesystem::path out_dir;
};

/// Runs one check. Errors are returned as a CheckResult with status error.
CheckResult run_check(const Model& model, const CheckConfig& check, const ExperimentConfig& config,
                      const RunOptions& options, std::uint64_t seed);

/// Runs every check and writes results.csv, plot_data.csv, summary.json and
/// manifest.json. Exit code 0 when all pass, 2 on any failure, 1 on any error.
RunOutcome run(const ExperimentConfig& config, const RunOptions& options);

std::string results_csv(const std::vector<CheckResult>& results);
std::string plot_csv(const std::vector<CheckResult>& results);

/// Throws invalid_argument on an empty list, io_error on write failure.
void emit_plot_data(const std::vector<CheckResult>& results, const std::filesystem::path& path);

/// Human-readable grid, probabilities and atom count.
std::string describe_measure(const ExperimentConfig& config, std::optional<std::uint64_t> seed);

}  // namespace overlap_lab
