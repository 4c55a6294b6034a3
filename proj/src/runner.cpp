#include "overlap_lab/runner.hpp"

#include <fmt/chrono.h>
#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "overlap_lab/induction.hpp"
#include "overlap_lab/observables.hpp"
#include "overlap_lab/rng.hpp"
#include "overlap_lab/ultrametric.hpp"
#include "overlap_lab/verifier.hpp"

namespace overlap_lab {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string join(const std::vector<std::string>& items, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::string summarize(const std::vector<std::string>& problems) {
  return fmt::format("{} problem(s): {}", problems.size(), join(problems, "; "));
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> problems)
    : Error(Errc::validation_error, summarize(problems)), problems_(std::move(problems)) {}

const std::vector<std::string>& check_names() {
  static const std::vector<std::string> names = {"gg",       "mass",       "lemma1",
                                                 "consistency", "marginal", "support",
                                                 "positivity",  "ultra",    "descend",
                                                 "criterion"};
  return names;
}

const char* to_string(CheckStatus s) noexcept {
  switch (s) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::fail: return "fail";
    case CheckStatus::error: return "error";
  }
  return "error";
}

std::uint64_t config_hash(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

class Problems {
 public:
  void add(const std::string& field, const std::string& msg) {
    items_.push_back(field + ": " + msg);
  }
  bool empty() const noexcept { return items_.empty(); }
  std::size_t size() const noexcept { return items_.size(); }
  std::vector<std::string>& items() noexcept { return items_; }

 private:
  std::vector<std::string> items_;
};

bool is_number(const json& j) { return j.is_number(); }

void expect_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed,
                 Problems& p) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) {
      std::vector<std::string> names(allowed.begin(), allowed.end());
      p.add(where + "." + key, "unknown field; allowed: " + join(names, ", "));
    }
  }
}

void expect_int(const json& obj, const char* key, const std::string& where, long lo, Problems& p) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < lo) {
    p.add(where + "." + key, fmt::format("must be an integer >= {}", lo));
  }
}

void expect_number_array(const json& obj, const char* key, const std::string& where,
                         Problems& p, bool required) {
  if (!obj.contains(key)) {
    if (required) p.add(where + "." + key, "required");
    return;
  }
  const auto& v = obj.at(key);
  if (!v.is_array() || v.empty() || !std::all_of(v.begin(), v.end(), is_number)) {
    p.add(where + "." + key, "must be a nonempty array of numbers");
  }
}

void check_probability_vector(const json& v, const std::string& field, Problems& p) {
  double sum = 0.0;
  for (const auto& x : v) {
    if (x.get<double>() <= 0.0) {
      p.add(field, "entries must be positive");
      return;
    }
    sum += x.get<double>();
  }
  if (std::abs(sum - 1.0) > 1e-12) p.add(field, fmt::format("sums to {}, expected 1", sum));
}

void validate_mc(const json& obj, const std::string& where, Problems& p) {
  if (!obj.contains("mc")) return;
  const auto& mc = obj.at("mc");
  if (!mc.is_object()) {
    p.add(where + ".mc", "must be an object");
    return;
  }
  expect_keys(mc, where + ".mc", {"outer", "inner"}, p);
  expect_int(mc, "outer", where + ".mc", 1, p);
  expect_int(mc, "inner", where + ".mc", 1, p);
}

void validate_backend(const json& obj, const std::string& where, Problems& p) {
  if (!obj.contains("backend")) return;
  const auto& b = obj.at("backend");
  if (!b.is_string() ||
      (b != "monte_carlo" && b != "enumeration" && b != "auto")) {
    p.add(where + ".backend", "must be one of monte_carlo, enumeration, auto");
  }
}

json load_measure_file(const json& m, const fs::path& base) {
  const fs::path file = base / m.at("file").get<std::string>();
  std::ifstream in(file);
  if (!in) throw Error(Errc::io_error, "cannot read " + file.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::parse_error, file.string() + ": " + e.what());
  }
}

void validate_measure(const json& m, const fs::path& base, Problems& p) {
  if (!m.is_object()) {
    p.add("measure", "required object");
    return;
  }
  if (!m.contains("type") || !m.at("type").is_string()) {
    p.add("measure.type", "required; one of tree, explicit, adversarial");
    return;
  }
  const std::string type = m.at("type");
  const std::size_t before = p.size();
  if (type == "tree") {
    expect_keys(m, "measure", {"type", "id", "branching", "zetas", "q", "seed", "frozen"}, p);
    if (!m.contains("branching")) p.add("measure.branching", "required");
    expect_int(m, "branching", "measure", 2, p);
    expect_number_array(m, "zetas", "measure", p, true);
    expect_number_array(m, "q", "measure", p, true);
    expect_int(m, "seed", "measure", 0, p);
    if (m.contains("frozen") && !m.at("frozen").is_boolean()) {
      p.add("measure.frozen", "must be a boolean");
    }
    if (p.size() == before && m.at("zetas").size() != m.at("q").size()) {
      p.add("measure.zetas", "needs one entry per level in measure.q");
    }
  } else if (type == "explicit") {
    expect_keys(m, "measure", {"type", "id", "atoms", "weights", "grid", "file"}, p);
    if (m.contains("file")) {
      if (!m.at("file").is_string()) {
        p.add("measure.file", "must be a path string");
      } else if (!fs::exists(base / m.at("file").get<std::string>())) {
        p.add("measure.file", "file not found: " + (base / m.at("file").get<std::string>()).string());
      }
      return;
    }
    if (!m.contains("atoms") || !m.at("atoms").is_array() || m.at("atoms").empty()) {
      p.add("measure.atoms", "required nonempty array of vectors");
    }
    expect_number_array(m, "weights", "measure", p, true);
    if (m.contains("weights") && m.at("weights").is_array() &&
        std::all_of(m.at("weights").begin(), m.at("weights").end(), is_number)) {
      check_probability_vector(m.at("weights"), "measure.weights", p);
    }
    if (!m.contains("grid") || !m.at("grid").is_object()) {
      p.add("measure.grid", "required object with levels, probs, self_overlap");
    } else {
      const auto& g = m.at("grid");
      expect_keys(g, "measure.grid", {"levels", "probs", "self_overlap"}, p);
      expect_number_array(g, "levels", "measure.grid", p, true);
      if (g.contains("probs") && !g.at("probs").is_null()) {
        const std::size_t b = p.size();
        expect_number_array(g, "probs", "measure.grid", p, true);
        if (p.size() == b) check_probability_vector(g.at("probs"), "measure.grid.probs", p);
      }
    }
  } else if (type == "adversarial") {
    expect_keys(m, "measure", {"type", "id", "seed"}, p);
    expect_int(m, "seed", "measure", 0, p);
  } else {
    p.add("measure.type", "unknown type '" + type + "'; allowed: tree, explicit, adversarial");
  }
}

const std::set<std::string> kCommonKeys = {"name", "mc", "tolerance", "backend"};

std::set<std::string> with_common(std::set<std::string> keys) {
  keys.insert(kCommonKeys.begin(), kCommonKeys.end());
  return keys;
}

void validate_observables(const json& obs, const std::string& where, Problems& p) {
  if (!obs.is_array() || obs.empty()) {
    p.add(where, "must be a nonempty array");
    return;
  }
  for (std::size_t i = 0; i < obs.size(); ++i) {
    try {
      observable_from_json(obs[i]);
    } catch (const Error& e) {
      p.add(fmt::format("{}[{}]", where, i), e.what());
    }
  }
}

void validate_check(const json& c, std::size_t index, Problems& p) {
  const std::string where = fmt::format("checks[{}]", index);
  if (!c.is_object()) {
    p.add(where, "must be an object");
    return;
  }
  if (!c.contains("name") || !c.at("name").is_string()) {
    p.add(where + ".name", "required; allowed: " + join(check_names(), ", "));
    return;
  }
  const std::string name = c.at("name");
  validate_mc(c, where, p);
  validate_backend(c, where, p);
  if (c.contains("tolerance")) {
    const auto& t = c.at("tolerance");
    if (!t.is_object()) {
      p.add(where + ".tolerance", "must be an object with z and abs_tol");
    } else {
      expect_keys(t, where + ".tolerance", {"z", "abs_tol"}, p);
      for (const char* k : {"z", "abs_tol"}) {
        if (t.contains(k) && (!t.at(k).is_number() || t.at(k).get<double>() < 0.0)) {
          p.add(where + ".tolerance." + k, "must be a nonnegative number");
        }
      }
    }
  }
  if (name == "gg") {
    expect_keys(c, where, with_common({"observables", "ns", "conditioned"}), p);
    if (c.contains("observables")) validate_observables(c.at("observables"), where + ".observables", p);
    if (c.contains("ns")) {
      const auto& ns = c.at("ns");
      if (!ns.is_array() || ns.empty() ||
          !std::all_of(ns.begin(), ns.end(),
                       [](const json& x) { return x.is_number_integer() && x.get<int>() >= 1; })) {
        p.add(where + ".ns", "must be a nonempty array of integers >= 1");
      }
    }
    if (c.contains("conditioned")) {
      const auto& e = c.at("conditioned");
      if (!e.is_object()) {
        p.add(where + ".conditioned", "must be an object {n, q?}");
      } else {
        expect_keys(e, where + ".conditioned", {"n", "q"}, p);
        expect_int(e, "n", where + ".conditioned", 2, p);
        if (e.contains("q") && !e.at("q").is_number()) p.add(where + ".conditioned.q", "must be a number");
      }
    }
  } else if (name == "mass") {
    expect_keys(c, where, with_common({"n_max"}), p);
    expect_int(c, "n_max", where, 2, p);
  } else if (name == "lemma1" || name == "consistency") {
    expect_keys(c, where, with_common({"f", "n"}), p);
    expect_int(c, "n", where, 2, p);
    if (c.contains("f")) {
      try {
        fspec_from_json(c.at("f"));
      } catch (const Error& e) {
        p.add(where + ".f", e.what());
      }
    }
  } else if (name == "marginal" || name == "support" || name == "positivity") {
    expect_keys(c, where, kCommonKeys, p);
  } else if (name == "ultra") {
    expect_keys(c, where, with_common({"triples"}), p);
    expect_int(c, "triples", where, 1, p);
  } else if (name == "descend") {
    expect_keys(c, where,
                with_common({"n_condition", "force", "psd_samples", "triples", "collision_pairs",
                             "observables", "psd_tol"}),
                p);
    expect_int(c, "n_condition", where, 2, p);
    expect_int(c, "psd_samples", where, 1, p);
    expect_int(c, "triples", where, 1, p);
    expect_int(c, "collision_pairs", where, 1, p);
    if (c.contains("force") && !c.at("force").is_boolean()) p.add(where + ".force", "must be a boolean");
    if (c.contains("psd_tol") && !c.at("psd_tol").is_number()) p.add(where + ".psd_tol", "must be a number");
    if (c.contains("observables")) validate_observables(c.at("observables"), where + ".observables", p);
  } else if (name == "criterion") {
    expect_keys(c, where, with_common({"q", "patterns", "n_max", "expect_consistent"}), p);
    if (!c.contains("q")) {
      p.add(where + ".q", "required number or array of numbers");
    } else if (!c.at("q").is_number() &&
               !(c.at("q").is_array() && !c.at("q").empty() &&
                 std::all_of(c.at("q").begin(), c.at("q").end(), is_number))) {
      p.add(where + ".q", "must be a number or nonempty array of numbers");
    }
    expect_int(c, "n_max", where, 3, p);
    if (!c.contains("patterns")) {
      p.add(where + ".patterns", "required array of [l12, l13, l23]");
    } else {
      const auto& pats = c.at("patterns");
      bool ok = pats.is_array() && !pats.empty();
      for (const auto& t : pats) {
        ok = ok && t.is_array() && t.size() == 3 &&
             std::all_of(t.begin(), t.end(), [](const json& x) { return x.is_number_integer(); });
      }
      if (!ok) p.add(where + ".patterns", "must be a nonempty array of [l12, l13, l23] integer triples");
    }
    if (c.contains("expect_consistent") && !c.at("expect_consistent").is_boolean()) {
      p.add(where + ".expect_consistent", "must be a boolean");
    }
  } else {
    p.add(where + ".name", "unknown check '" + name + "'; allowed: " + join(check_names(), ", "));
  }
}

}  // namespace

ExperimentConfig parse_config_text(std::string_view text, const fs::path& base_dir) {
  json raw;
  try {
    raw = json::parse(text);
  } catch (const json::parse_error& e) {
    // Byte offset to line/column.
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(Errc::parse_error, fmt::format("line {}, column {}: {}", line, col, e.what()));
  }
  Problems p;
  ExperimentConfig cfg;
  cfg.raw = raw;
  cfg.base_dir = base_dir;
  if (!raw.is_object()) {
    p.add("<root>", "config must be a JSON object");
    throw ValidationError(std::move(p.items()));
  }
  expect_keys(raw, "<root>", {"measure", "checks", "seed", "mc", "backend", "output"}, p);
  if (!raw.contains("measure")) {
    p.add("measure", "required");
  } else {
    validate_measure(raw.at("measure"), base_dir, p);
  }
  if (!raw.contains("checks") || !raw.at("checks").is_array() || raw.at("checks").empty()) {
    p.add("checks", "at least one check is required");
  } else {
    for (std::size_t i = 0; i < raw.at("checks").size(); ++i) {
      validate_check(raw.at("checks")[i], i, p);
    }
  }
  if (raw.contains("seed") && !raw.at("seed").is_number_unsigned()) {
    p.add("seed", "must be an unsigned 64-bit integer");
  }
  validate_mc(raw, "<root>", p);
  validate_backend(raw, "<root>", p);
  if (raw.contains("output")) {
    const auto& o = raw.at("output");
    if (!o.is_object()) {
      p.add("output", "must be an object {dir, format}");
    } else {
      expect_keys(o, "output", {"dir", "format"}, p);
      if (o.contains("dir") && !o.at("dir").is_string()) p.add("output.dir", "must be a string");
      if (o.contains("format") &&
          (!o.at("format").is_string() ||
           (o.at("format") != "csv" && o.at("format") != "json" && o.at("format") != "both"))) {
        p.add("output.format", "must be one of csv, json, both");
      }
    }
  }
  if (p.empty()) {
    // Semantic checks that need the constructed model.
    try {
      cfg.measure = raw.at("measure");
      const Model model = build_model(cfg);
      if (model.grid()->levels().front() < 0.0) {
        cfg.warnings.push_back(fmt::format("measure.grid.levels: lowest level {} is negative",
                                           model.grid()->levels().front()));
      }
    } catch (const Error& e) {
      p.add("measure", e.what());
    }
  }
  if (!p.empty()) throw ValidationError(std::move(p.items()));

  cfg.measure = raw.at("measure");
  for (const auto& c : raw.at("checks")) cfg.checks.push_back({c.at("name"), c});
  cfg.seed = raw.value("seed", std::uint64_t{0});
  if (raw.contains("mc")) {
    cfg.mc.outer = raw.at("mc").value("outer", cfg.mc.outer);
    cfg.mc.inner = raw.at("mc").value("inner", cfg.mc.inner);
  }
  cfg.backend = raw.value("backend", cfg.backend);
  if (raw.contains("output")) {
    const auto& o = raw.at("output");
    if (o.contains("dir")) cfg.output_dir = o.at("dir").get<std::string>();
    const std::string f = o.value("format", "both");
    cfg.format = f == "csv" ? OutputFormat::csv : f == "json" ? OutputFormat::json : OutputFormat::both;
  }
  return cfg;
}

ExperimentConfig parse_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config_text(ss.str(), path.parent_path());
  } catch (const ValidationError&) {
    throw;
  } catch (const Error& e) {
    if (e.code() == Errc::parse_error) {
      throw Error(Errc::parse_error, path.string() + ": " + e.what());
    }
    throw;
  }
}

Model build_model(const ExperimentConfig& config) {
  const json& m = config.measure;
  const std::string type = m.at("type");
  if (type == "tree") {
    TreeMeasureSpec spec;
    spec.grid = OverlapGrid::on_sphere(m.at("q").get<std::vector<double>>());
    spec.branching = m.at("branching").get<int>();
    spec.zetas = m.at("zetas").get<std::vector<double>>();
    spec.seed = m.value("seed", std::uint64_t{0});
    validate_tree_spec(spec);
    const std::string id = m.value(
        "id", fmt::format("tree_k{}_b{}", spec.zetas.size(), spec.branching));
    if (m.value("frozen", false)) return Model::frozen(build_tree_measure(spec), id);
    return Model::tree(spec, id);
  }
  if (type == "explicit") {
    if (m.contains("file")) {
      auto measure = measure_from_json(load_measure_file(m, config.base_dir));
      const std::string id = m.value("id", fmt::format("explicit_m{}", measure.size()));
      return Model::frozen(std::move(measure), id);
    }
    auto measure = explicit_measure(m.at("atoms").get<std::vector<std::vector<double>>>(),
                                    m.at("weights").get<std::vector<double>>(),
                                    grid_from_json(m.at("grid")));
    const std::string id = m.value("id", fmt::format("explicit_m{}", measure.size()));
    return Model::frozen(std::move(measure), id);
  }
  if (type == "adversarial") {
    return Model::frozen(adversarial_measure(m.value("seed", std::uint64_t{0})),
                         m.value("id", std::string("adversarial")));
  }
  throw Error(Errc::validation_error, "unknown measure type " + type);
}

// ---------------------------------------------------------------------------
// Checks

namespace {

struct CheckContext {
  const Model& model;
  const json& params;
  const ExperimentConfig& config;
  const RunOptions& options;
  std::uint64_t seed;
  CheckResult& out;

  EstimationSettings settings(int tuple_size) const {
    EstimationSettings s;
    s.mc = config.mc;
    if (params.contains("mc")) {
      s.mc.outer = params.at("mc").value("outer", s.mc.outer);
      s.mc.inner = params.at("mc").value("inner", s.mc.inner);
    }
    s.jobs = options.jobs;
    const std::string requested = options.oracle ? "auto" : params.value("backend", config.backend);
    if (requested == "enumeration") {
      s.backend = Backend::enumeration;
    } else if (requested == "auto" && enumeration_feasible(model, tuple_size)) {
      s.backend = Backend::enumeration;
    } else {
      s.backend = Backend::monte_carlo;
    }
    return s;
  }

  TolerancePolicy policy(const EstimationSettings& s) const {
    TolerancePolicy p = s.backend == Backend::enumeration ? TolerancePolicy::exact()
                                                           : TolerancePolicy{};
    if (params.contains("tolerance")) {
      p.z = params.at("tolerance").value("z", p.z);
      p.abs_tol = params.at("tolerance").value("abs_tol", p.abs_tol);
    }
    return p;
  }

  void row(int n, std::string obs, double estimate, double reference, double residual, double se,
           bool pass) {
    out.rows.push_back({out.name, model.id(), n, std::move(obs), estimate, reference, residual,
                        se, pass});
    if (!pass) out.status = CheckStatus::fail;
  }
  void plot(std::string series, int n, double estimate, double reference, double se) {
    out.plot.push_back({out.name, std::move(series), n, estimate, reference, se});
  }
};

json settings_json(const EstimationSettings& s) {
  return {{"backend", s.backend == Backend::enumeration ? "enumeration" : "monte_carlo"},
          {"outer", s.mc.outer},
          {"inner", s.mc.inner}};
}

double rhs_total(const ResidualReport& r) { return r.lhs.estimate - r.residual; }

void run_gg(CheckContext& ctx) {
  const auto& grid = *ctx.model.grid();
  std::vector<ObservableSpec> obs;
  if (ctx.params.contains("observables")) {
    for (const auto& o : ctx.params.at("observables")) obs.push_back(observable_from_json(o));
  } else {
    obs = default_observables(grid, ctx.params.value("ns", std::vector<int>{2, 3}));
  }
  std::optional<EventSpec> cond;
  if (ctx.params.contains("conditioned")) {
    const auto& c = ctx.params.at("conditioned");
    const int n = c.value("n", 2);
    cond = c.contains("q") ? EventSpec::below(n, c.at("q").get<double>()) : EventSpec::distinct(n);
  }
  int widest = 0;
  for (const auto& o : obs) widest = std::max(widest, o.n + 1);
  const auto s = ctx.settings(widest);
  const auto reports = gg_residuals(Ensemble(ctx.model), obs, s, ctx.seed, cond, ctx.policy(s));
  json items = json::array();
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto& r = reports[i];
    ctx.row(obs[i].n, obs[i].id(), r.lhs.estimate, rhs_total(r), r.residual, r.residual_se, r.pass);
    ctx.plot(obs[i].id(), obs[i].n, r.residual, 0.0, r.residual_se);
    auto j = to_json(r);
    j["observable"] = to_json(obs[i]);
    j["observable_id"] = obs[i].id();
    items.push_back(std::move(j));
  }
  ctx.out.detail = {{"settings", settings_json(s)},
                    {"conditioned", cond ? json(cond->describe()) : json()},
                    {"residuals", items}};
}

void run_mass(CheckContext& ctx) {
  const int n_max = ctx.params.value("n_max", 5);
  const auto s = ctx.settings(n_max);
  const auto r = distinct_mass_check(Ensemble(ctx.model), n_max, s, ctx.seed, ctx.policy(s));
  json pts = json::array();
  for (const auto& pt : r.points) {
    ctx.row(pt.n, "I(A_n)", pt.estimate, pt.reference, pt.residual, pt.se, pt.pass);
    ctx.plot("mass", pt.n, pt.estimate, pt.reference, pt.estimate_se);
    pts.push_back({{"n", pt.n},
                   {"estimate", pt.estimate},
                   {"estimate_se", pt.estimate_se},
                   {"reference", pt.reference},
                   {"residual", pt.residual},
                   {"se", pt.se},
                   {"pass", pt.pass}});
  }
  ctx.out.detail = {{"settings", settings_json(s)},
                    {"p_top", r.p_top},
                    {"p_top_se", r.p_top_se},
                    {"points", pts}};
}

void run_pair_identity(CheckContext& ctx, bool lemma) {
  const FSpec f = ctx.params.contains("f") ? fspec_from_json(ctx.params.at("f")) : FSpec::one();
  const int n = ctx.params.value("n", 2);
  const auto s = ctx.settings(n + 1);
  const auto r = lemma ? lemma1_check(Ensemble(ctx.model), f, n, s, ctx.seed, ctx.policy(s))
                       : consistency_check(Ensemble(ctx.model), f, n, s, ctx.seed, ctx.policy(s));
  ctx.row(n, f.id(), r.lhs.estimate, rhs_total(r), r.residual, r.residual_se, r.pass);
  ctx.plot(f.id(), n, r.residual, 0.0, r.residual_se);
  ctx.out.detail = {{"settings", settings_json(s)}, {"f", f.id()}, {"report", to_json(r)}};
}

void run_marginal(CheckContext& ctx) {
  const auto s = ctx.settings(2);
  const auto r = conditional_marginal_check(Ensemble(ctx.model), s, ctx.seed, ctx.policy(s));
  json pts = json::array();
  for (const auto& pt : r.points) {
    const std::string id = fmt::format("R12=L{}", pt.level);
    ctx.row(2, id, pt.conditional, pt.reference, pt.residual, pt.se, pt.pass);
    ctx.plot(id, 2, pt.conditional, pt.reference, pt.se);
    pts.push_back({{"level", pt.level},
                   {"conditional", pt.conditional},
                   {"conditional_se", pt.conditional_se},
                   {"reference", pt.reference},
                   {"reference_se", pt.reference_se},
                   {"residual", pt.residual},
                   {"se", pt.se},
                   {"pass", pt.pass}});
  }
  ctx.out.detail = {{"settings", settings_json(s)}, {"points", pts}};
}

void run_support(CheckContext& ctx) {
  const auto measure = ctx.model.draw(ctx.seed);
  const auto r = support_check(*measure);
  ctx.row(1, "norm2", r.max_deviation, 0.0, r.max_deviation, 0.0, r.pass);
  ctx.out.detail = {{"max_deviation", r.max_deviation},
                    {"worst_atom", r.worst_atom},
                    {"atoms_checked", r.atoms_checked},
                    {"pass", r.pass}};
}

void run_positivity(CheckContext& ctx) {
  const auto s = ctx.settings(2);
  const auto r = positivity_check(Ensemble(ctx.model), s, ctx.seed);
  ctx.row(2, "min R12", r.min_overlap, 0.0, std::min(r.min_overlap, 0.0), 0.0, r.pass);
  ctx.out.detail = {{"settings", settings_json(s)},
                    {"min_overlap", r.min_overlap},
                    {"pairs_checked", r.pairs_checked},
                    {"pass", r.pass}};
}

void run_ultra(CheckContext& ctx) {
  const auto s = ctx.settings(3);
  double rate = 0.0;
  double se = 0.0;
  std::uint64_t checked = 0;
  std::uint64_t violations = 0;
  if (s.backend == Backend::enumeration) {
    enumerate_tuples(*ctx.model.frozen_measure(), 3,
                     [&](const LevelView& v, std::span<const std::size_t>, double p) {
                       if (p <= 0.0) return;
                       ++checked;
                       if (check_ultrametric(v).violations > 0) {
                         ++violations;
                         rate += p;
                       }
                     });
  } else {
    const std::uint64_t count = ctx.params.value("triples", std::uint64_t{100'000});
    checked = sample_ensemble(Ensemble(ctx.model), 3, ctx.model.grid()->top_level(), count, s,
                              ctx.seed, [&](const LevelView& v, std::span<const std::size_t>) {
                                if (check_ultrametric(v).violations > 0) ++violations;
                              });
    rate = static_cast<double>(violations) / static_cast<double>(checked);
    se = std::sqrt(rate * (1.0 - rate) / static_cast<double>(checked));
  }
  ctx.row(3, "violation_rate", rate, 0.0, rate, se, violations == 0);
  ctx.out.detail = {{"settings", settings_json(s)},
                    {"triples_checked", checked},
                    {"violations", violations},
                    {"violation_rate", rate},
                    {"se", se}};
}

void descend_rows(CheckContext& ctx, const LevelReport& r, double psd_tol) {
  const int L = r.level;
  ctx.row(L, "collision", static_cast<double>(r.collision_pairs_checked), 0.0, 0.0, 0.0,
          r.collision_identity_pass);
  ctx.row(L, "ultra_at_level", static_cast<double>(r.ultra_violations_at_level), 0.0,
          static_cast<double>(r.ultra_violations_at_level), 0.0, r.ultra_violations_at_level == 0);
  for (std::size_t i = 0; i < r.gg.size(); ++i) {
    const auto& g = r.gg[i];
    ctx.row(L, "conditioned_gg:" + r.observables[i].id(), g.lhs.estimate, rhs_total(g), g.residual,
            g.residual_se, g.pass);
    ctx.plot("conditioned_gg:" + r.observables[i].id(), L, g.residual, 0.0, g.residual_se);
  }
  ctx.row(L, "truncated_psd", r.min_truncated_eigenvalue, -psd_tol,
          std::min(r.min_truncated_eigenvalue, 0.0), 0.0, r.truncated_psd_pass);
  if (r.child) descend_rows(ctx, *r.child, psd_tol);
}

void run_descend(CheckContext& ctx) {
  DescendConfig cfg;
  cfg.n_condition = ctx.params.value("n_condition", cfg.n_condition);
  cfg.force = ctx.params.value("force", cfg.force);
  cfg.psd_samples = ctx.params.value("psd_samples", cfg.psd_samples);
  cfg.triples = ctx.params.value("triples", cfg.triples);
  cfg.collision_pairs = ctx.params.value("collision_pairs", cfg.collision_pairs);
  cfg.psd_tol = ctx.params.value("psd_tol", cfg.psd_tol);
  if (ctx.params.contains("observables")) {
    for (const auto& o : ctx.params.at("observables")) cfg.observables.push_back(observable_from_json(o));
  }
  cfg.settings = ctx.settings(0);
  cfg.settings.backend = Backend::monte_carlo;
  cfg.tolerance = ctx.policy(cfg.settings);
  const auto r = descend(ctx.model, cfg, ctx.seed);
  descend_rows(ctx, r, cfg.psd_tol);
  ctx.out.detail = {{"n_condition", cfg.n_condition}, {"force", cfg.force}, {"report", to_json(r)}};
}

std::string pattern_id(const TriplePattern& p) {
  return fmt::format("B=({},{},{})", p[0], p[1], p[2]);
}

void run_criterion(CheckContext& ctx) {
  std::vector<double> qs;
  if (ctx.params.at("q").is_array()) {
    qs = ctx.params.at("q").get<std::vector<double>>();
  } else {
    qs.push_back(ctx.params.at("q").get<double>());
  }
  std::vector<TriplePattern> patterns;
  for (const auto& t : ctx.params.at("patterns")) {
    patterns.push_back({static_cast<Level>(t[0].get<int>()), static_cast<Level>(t[1].get<int>()),
                        static_cast<Level>(t[2].get<int>())});
  }
  const int n_max = ctx.params.value("n_max", 6);
  const bool expect = ctx.params.value("expect_consistent", !ctx.model.is_frozen() ||
                                                                ctx.config.measure.at("type") == "tree");
  const auto s = ctx.settings(n_max);
  json reports = json::array();
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const auto r = criterion_run(ctx.model, qs[i], patterns, n_max, s, derive_seed(ctx.seed, {i}));
    for (const auto& seq : r.patterns) {
      const std::string id = fmt::format("q={}:{}", qs[i], pattern_id(seq.pattern));
      for (const auto& pt : seq.sequence) {
        if (!pt.defined) continue;
        const bool ok = !expect || std::abs(pt.diff) <= 3.0 * pt.combined_se + (r.exact ? 1e-12 : 0.0);
        ctx.row(pt.n, id, pt.p, seq.p3, pt.diff, pt.combined_se, ok);
        ctx.plot(id, pt.n, pt.p, seq.p3, pt.se);
      }
    }
    reports.push_back(to_json(r));
  }
  ctx.out.detail = {{"settings", settings_json(s)}, {"asserted", expect}, {"runs", reports}};
}

}  // namespace

CheckResult run_check(const Model& model, const CheckConfig& check, const ExperimentConfig& config,
                      const RunOptions& options, std::uint64_t seed) {
  CheckResult out;
  out.name = check.name;
  const auto start = std::chrono::steady_clock::now();
  CheckContext ctx{model, check.params, config, options, seed, out};
  try {
    if (check.name == "gg") run_gg(ctx);
    else if (check.name == "mass") run_mass(ctx);
    else if (check.name == "lemma1") run_pair_identity(ctx, true);
    else if (check.name == "consistency") run_pair_identity(ctx, false);
    else if (check.name == "marginal") run_marginal(ctx);
    else if (check.name == "support") run_support(ctx);
    else if (check.name == "positivity") run_positivity(ctx);
    else if (check.name == "ultra") run_ultra(ctx);
    else if (check.name == "descend") run_descend(ctx);
    else if (check.name == "criterion") run_criterion(ctx);
    else throw Error(Errc::validation_error, "unknown check " + check.name);
  } catch (const std::exception& e) {
    out.status = CheckStatus::error;
    out.error = e.what();
    out.rows.clear();
    out.plot.clear();
    out.detail = json();
  }
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// ---------------------------------------------------------------------------
// Output

namespace {

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return fmt::format("{:.12g}", x);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  out << content;
  if (!out) throw Error(Errc::io_error, "write failed for " + path.string());
}

std::string utc_timestamp() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::time(nullptr)));
}

}  // namespace

std::string results_csv(const std::vector<CheckResult>& results) {
  std::string out = "check_name,model_id,n,observable_id,estimate,reference,residual,se,pass\n";
  for (const auto& r : results) {
    for (const auto& row : r.rows) {
      out += fmt::format("{},{},{},{},{},{},{},{},{}\n", csv_field(row.check_name),
                         csv_field(row.model_id), row.n, csv_field(row.observable_id),
                         num(row.estimate), num(row.reference), num(row.residual), num(row.se),
                         row.pass ? "true" : "false");
    }
  }
  return out;
}

std::string plot_csv(const std::vector<CheckResult>& results) {
  std::string out = "check_name,series,n,estimate,reference,se\n";
  for (const auto& r : results) {
    for (const auto& p : r.plot) {
      out += fmt::format("{},{},{},{},{},{}\n", csv_field(p.check_name), csv_field(p.series), p.n,
                         num(p.estimate), num(p.reference), num(p.se));
    }
  }
  return out;
}

void emit_plot_data(const std::vector<CheckResult>& results, const fs::path& path) {
  if (results.empty()) throw Error(Errc::invalid_argument, "no reports to plot");
  write_file(path, plot_csv(results));
}

RunOutcome run(const ExperimentConfig& config, const RunOptions& options) {
  RunOutcome outcome;
  const std::uint64_t seed = options.seed.value_or(config.seed);
  const OutputFormat format = options.format.value_or(config.format);
  outcome.out_dir = options.out.value_or(config.output_dir);
  if (options.write && !fs::is_directory(outcome.out_dir)) {
    const fs::path parent = fs::absolute(outcome.out_dir).parent_path();
    if (!fs::is_directory(parent)) {
      throw Error(Errc::io_error,
                  "output directory parent does not exist: " + parent.string());
    }
    fs::create_directory(outcome.out_dir);
  }

  const Model model = build_model(config);
  for (std::size_t i = 0; i < config.checks.size(); ++i) {
    outcome.results.push_back(
        run_check(model, config.checks[i], config, options, derive_seed(seed, {i})));
  }

  bool any_error = false;
  bool any_fail = false;
  for (const auto& r : outcome.results) {
    any_error = any_error || r.status == CheckStatus::error;
    any_fail = any_fail || r.status == CheckStatus::fail;
  }
  outcome.exit_code = any_error ? 1 : any_fail ? 2 : 0;
  if (!options.write) return outcome;

  if (format != OutputFormat::json) {
    write_file(outcome.out_dir / "results.csv", results_csv(outcome.results));
    emit_plot_data(outcome.results, outcome.out_dir / "plot_data.csv");
  }
  if (format != OutputFormat::csv) {
    json checks = json::array();
    for (const auto& r : outcome.results) {
      checks.push_back({{"name", r.name},
                        {"status", to_string(r.status)},
                        {"error", r.error.empty() ? json() : json(r.error)},
                        {"report", r.detail}});
    }
    const json summary{{"model_id", model.id()},
                       {"seed", seed},
                       {"oracle", options.oracle},
                       {"exit_code", outcome.exit_code},
                       {"checks", checks}};
    write_file(outcome.out_dir / "summary.json", summary.dump(2) + "\n");
  }
  json statuses = json::array();
  for (std::size_t i = 0; i < outcome.results.size(); ++i) {
    const auto& r = outcome.results[i];
    statuses.push_back({{"index", i},
                        {"name", r.name},
                        {"status", to_string(r.status)},
                        {"error", r.error.empty() ? json() : json(r.error)},
                        {"wall_seconds", r.wall_seconds}});
  }
  const json manifest{{"config_hash", fmt::format("{:016x}", config_hash(config.raw))},
                      {"tool_version", kToolVersion},
                      {"timestamp", utc_timestamp()},
                      {"seed", seed},
                      {"jobs", options.jobs},
                      {"exit_code", outcome.exit_code},
                      {"checks", statuses}};
  write_file(outcome.out_dir / "manifest.json", manifest.dump(2) + "\n");
  return outcome;
}

std::string describe_measure(const ExperimentConfig& config, std::optional<std::uint64_t> seed) {
  const Model model = build_model(config);
  const auto measure = model.draw(seed.value_or(config.seed));
  const auto probs = level_probabilities(*measure);
  const auto& grid = measure->grid();
  std::string out = fmt::format("model: {}\nkind: {}\natoms: {}\ndimension: {}\nself_overlap: {}\n",
                                model.id(), to_string(measure->kind()), measure->size(),
                                measure->dimension(), num(grid.value(kDiag)));
  out += "level  q             p\n";
  for (Level l = 1; l <= grid.top_level(); ++l) {
    out += fmt::format("{:<6} {:<13} {}\n", l, num(grid.value(l)), num(probs[l - 1]));
  }
  if (config.measure.at("type") == "tree") {
    const auto zetas = config.measure.at("zetas").get<std::vector<double>>();
    out += "limit  (infinite branching)\n";
    double prev = 0.0;
    for (std::size_t j = 0; j <= zetas.size(); ++j) {
      const double z = j < zetas.size() ? zetas[j] : 1.0;
      out += fmt::format("{:<6} {:<13} {}\n", j + 1, num(grid.value(static_cast<Level>(j + 1))),
                         num(z - prev));
      prev = z;
    }
  }
  return out;
}

}  // namespace overlap_lab
