#include "overlap_lab/observables.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "overlap_lab/errors.hpp"

namespace overlap_lab {

double FSpec::operator()(const LevelView& v) const {
  if (kind == Kind::pattern) {
    for (const auto& p : pattern) {
      if (v.at(p.a - 1, p.b - 1) != p.level) return 0.0;
    }
    return 1.0;
  }
  double x = 1.0;
  for (const auto& m : monomial) x *= std::pow(v.value(m.a - 1, m.b - 1), m.power);
  return x;
}

int FSpec::max_replica() const {
  int m = 0;
  for (const auto& p : pattern) m = std::max({m, p.a, p.b});
  for (const auto& p : monomial) m = std::max({m, p.a, p.b});
  return m;
}

std::string FSpec::id() const {
  std::ostringstream os;
  if (kind == Kind::pattern) {
    if (pattern.empty()) return "1";
    os << "I(";
    for (std::size_t i = 0; i < pattern.size(); ++i) {
      if (i) os << "&";
      os << "R" << pattern[i].a << pattern[i].b << "=L" << pattern[i].level;
    }
    os << ")";
  } else {
    for (std::size_t i = 0; i < monomial.size(); ++i) {
      if (i) os << "*";
      os << "R" << monomial[i].a << monomial[i].b << "^" << monomial[i].power;
    }
    if (monomial.empty()) os << "1";
  }
  return os.str();
}

double PsiSpec::operator()(Level l, const OverlapGrid& grid) const {
  if (kind == Kind::level) return l == param ? 1.0 : 0.0;
  return std::pow(grid.value(l), param);
}

std::string PsiSpec::id() const {
  return kind == Kind::level ? "I(L" + std::to_string(param) + ")"
                             : "x^" + std::to_string(param);
}

void ObservableSpec::validate(const OverlapGrid& grid) const {
  if (n < 2) throw Error(Errc::invalid_argument, "observable needs n >= 2");
  auto check_pair = [&](int a, int b) {
    if (a < 1 || b <= a || b > n) {
      throw Error(Errc::invalid_argument, "pair (" + std::to_string(a) + "," + std::to_string(b) +
                                              ") outside 1 <= a < b <= n");
    }
  };
  for (const auto& p : f.pattern) {
    check_pair(p.a, p.b);
    if (p.level < 1 || p.level > grid.top_level()) {
      throw Error(Errc::invalid_argument, "pattern level outside the grid");
    }
  }
  for (const auto& p : f.monomial) {
    check_pair(p.a, p.b);
    if (p.power < 1 || p.power > kMaxPower) {
      throw Error(Errc::invalid_argument, "monomial power outside 1..8");
    }
  }
  if (psi.kind == PsiSpec::Kind::power && (psi.param < 1 || psi.param > kMaxPower)) {
    throw Error(Errc::invalid_argument, "psi power outside 1..8");
  }
  if (psi.kind == PsiSpec::Kind::level && (psi.param < 1 || psi.param > grid.top_level())) {
    throw Error(Errc::invalid_argument, "psi level outside the grid");
  }
}

std::string ObservableSpec::id() const {
  return "n" + std::to_string(n) + ":f=" + f.id() + ":psi=" + psi.id();
}

std::vector<ObservableSpec> default_observables(const OverlapGrid& grid,
                                                const std::vector<int>& ns) {
  std::vector<FSpec> fs{FSpec::one()};
  for (Level l = 1; l <= grid.top_level(); ++l) fs.push_back(FSpec::levels({{1, 2, l}}));
  std::vector<PsiSpec> psis{PsiSpec::power(1), PsiSpec::power(2)};
  for (Level l = 1; l <= grid.top_level(); ++l) psis.push_back(PsiSpec::level(l));
  std::vector<ObservableSpec> out;
  for (int n : ns) {
    for (const auto& f : fs) {
      for (const auto& psi : psis) out.push_back({n, f, psi});
    }
  }
  return out;
}

nlohmann::json to_json(const FSpec& f) {
  nlohmann::json j = nlohmann::json::object();
  if (f.kind == FSpec::Kind::pattern) {
    auto arr = nlohmann::json::array();
    for (const auto& p : f.pattern) arr.push_back({p.a, p.b, static_cast<int>(p.level)});
    j["pattern"] = std::move(arr);
  } else {
    auto arr = nlohmann::json::array();
    for (const auto& p : f.monomial) arr.push_back({p.a, p.b, p.power});
    j["monomial"] = std::move(arr);
  }
  return j;
}

nlohmann::json to_json(const ObservableSpec& obs) {
  nlohmann::json psi;
  if (obs.psi.kind == PsiSpec::Kind::power) {
    psi["power"] = obs.psi.param;
  } else {
    psi["level"] = obs.psi.param;
  }
  return {{"n", obs.n}, {"f", to_json(obs.f)}, {"psi", psi}};
}

FSpec fspec_from_json(const nlohmann::json& j) {
  try {
    if (j.is_null()) return FSpec::one();
    if (j.contains("monomial")) {
      std::vector<PairPower> m;
      for (const auto& t : j.at("monomial")) {
        m.push_back({t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<int>()});
      }
      return FSpec::product(std::move(m));
    }
    std::vector<PairLevel> p;
    if (j.contains("pattern")) {
      for (const auto& t : j.at("pattern")) {
        p.push_back({t.at(0).get<int>(), t.at(1).get<int>(), static_cast<Level>(t.at(2).get<int>())});
      }
    }
    return FSpec::levels(std::move(p));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, std::string("observable f: ") + e.what());
  }
}

ObservableSpec observable_from_json(const nlohmann::json& j) {
  try {
    ObservableSpec obs;
    obs.n = j.value("n", 2);
    obs.f = fspec_from_json(j.contains("f") ? j.at("f") : nlohmann::json(nullptr));
    const auto& psi = j.at("psi");
    if (psi.contains("level")) {
      obs.psi = PsiSpec::level(static_cast<Level>(psi.at("level").get<int>()));
    } else {
      obs.psi = PsiSpec::power(psi.value("power", 1));
    }
    return obs;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, std::string("observable: ") + e.what());
  }
}

}  // namespace overlap_lab
