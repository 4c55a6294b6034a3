#include "overlap_lab/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "overlap_lab/errors.hpp"

namespace overlap_lab {

OverlapGrid::OverlapGrid(std::vector<double> levels,
                         std::optional<std::vector<double>> probs,
                         double self_overlap)
    : levels_(std::move(levels)),
      probs_(std::move(probs)),
      self_overlap_(self_overlap) {
  if (levels_.empty()) {
    throw Error(Errc::invalid_argument, "grid needs at least one level");
  }
  if (levels_.size() > 32000) {
    throw Error(Errc::invalid_argument, "grid has too many levels");
  }
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (!std::isfinite(levels_[i]) || levels_[i] < -1.0 || levels_[i] > 1.0) {
      throw Error(Errc::invalid_argument,
                  "grid level " + std::to_string(i + 1) + " outside [-1, 1]");
    }
    if (i > 0 && !(levels_[i] > levels_[i - 1])) {
      throw Error(Errc::invalid_argument, "grid levels must be strictly increasing");
    }
  }
  if (probs_) {
    if (probs_->size() != levels_.size()) {
      throw Error(Errc::bad_weights, "probs length differs from levels length");
    }
    for (double p : *probs_) {
      if (!(p > 0.0)) throw Error(Errc::bad_weights, "grid probs must be positive");
    }
    const double total = std::accumulate(probs_->begin(), probs_->end(), 0.0);
    if (std::abs(total - 1.0) > 1e-12) {
      throw Error(Errc::bad_weights, "grid probs sum to " + std::to_string(total));
    }
  }
  if (!std::isfinite(self_overlap_) || self_overlap_ < levels_.back()) {
    throw Error(Errc::invalid_argument, "self_overlap below the top level");
  }
}

OverlapGrid OverlapGrid::on_sphere(std::vector<double> levels) {
  const double top = levels.empty() ? 0.0 : levels.back();
  return OverlapGrid(std::move(levels), std::nullopt, top);
}

double OverlapGrid::value(Level level) const {
  if (level == kDiag) return self_overlap_;
  return levels_[static_cast<std::size_t>(level - 1)];
}

std::optional<Level> OverlapGrid::find_level(double x, double tol) const {
  auto it = std::lower_bound(levels_.begin(), levels_.end(), x);
  std::optional<Level> best;
  double best_dist = tol;
  auto consider = [&](std::vector<double>::const_iterator c) {
    const double d = std::abs(*c - x);
    if (d <= best_dist) {
      best_dist = d;
      best = static_cast<Level>(c - levels_.begin() + 1);
    }
  };
  if (it != levels_.end()) consider(it);
  if (it != levels_.begin()) consider(std::prev(it));
  return best;
}

Level OverlapGrid::level_below(double q) const noexcept {
  auto it = std::lower_bound(levels_.begin(), levels_.end(), q);
  return static_cast<Level>(it - levels_.begin());
}

OverlapGrid OverlapGrid::truncated(Level top) const {
  if (top < 1 || top > top_level()) {
    throw Error(Errc::invalid_argument, "truncation level out of range");
  }
  std::vector<double> levels(levels_.begin(), levels_.begin() + top);
  std::optional<std::vector<double>> probs;
  if (probs_) {
    probs.emplace(probs_->begin(), probs_->begin() + top);
    for (std::size_t i = top; i < probs_->size(); ++i) probs->back() += (*probs_)[i];
  }
  const double self = levels.back();
  return OverlapGrid(std::move(levels), std::move(probs), self);
}

nlohmann::json to_json(const OverlapGrid& grid) {
  nlohmann::json j;
  j["levels"] = grid.levels();
  j["probs"] = grid.probs() ? nlohmann::json(*grid.probs()) : nlohmann::json(nullptr);
  j["self_overlap"] = grid.self_overlap();
  return j;
}

OverlapGrid grid_from_json(const nlohmann::json& j) {
  try {
    auto levels = j.at("levels").get<std::vector<double>>();
    std::optional<std::vector<double>> probs;
    if (j.contains("probs") && !j.at("probs").is_null()) {
      probs = j.at("probs").get<std::vector<double>>();
    }
    const double self = j.contains("self_overlap") ? j.at("self_overlap").get<double>()
                                                   : (levels.empty() ? 0.0 : levels.back());
    return OverlapGrid(std::move(levels), std::move(probs), self);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, std::string("grid: ") + e.what());
  }
}

}  // namespace overlap_lab
