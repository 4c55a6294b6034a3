#include "overlap_lab/level_matrix.hpp"

#include <algorithm>
#include <string>

#include "overlap_lab/errors.hpp"

namespace overlap_lab {

Level LevelView::max_off_diagonal(int m) const noexcept {
  Level best = 0;
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) best = std::max(best, at(i, j));
  }
  return best;
}

Level LevelView::min_off_diagonal(int m) const noexcept {
  Level best = grid_->top_level();
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) best = std::min(best, at(i, j));
  }
  return m < 2 ? Level{0} : best;
}

LevelMatrix::LevelMatrix(std::shared_ptr<const OverlapGrid> grid, int n,
                         std::vector<Level> entries)
    : grid_(std::move(grid)), n_(n), entries_(std::move(entries)) {
  if (!grid_) throw Error(Errc::invalid_argument, "level matrix without a grid");
  if (n_ < 1) throw Error(Errc::invalid_argument, "level matrix needs n >= 1");
  if (entries_.size() != static_cast<std::size_t>(n_) * n_) {
    throw Error(Errc::invalid_argument, "level matrix entry count is not n*n");
  }
  const Level k = grid_->top_level();
  for (int i = 0; i < n_; ++i) {
    if (at(i, i) != kDiag) {
      throw Error(Errc::invalid_argument, "diagonal entry is not the diagonal marker");
    }
    for (int j = i + 1; j < n_; ++j) {
      const Level e = at(i, j);
      if (e < 1 || e > k) {
        throw Error(Errc::invalid_argument,
                    "entry (" + std::to_string(i) + "," + std::to_string(j) +
                        ") is not a valid level");
      }
      if (at(j, i) != e) throw Error(Errc::not_symmetric, "level matrix is not symmetric");
    }
  }
}

LevelMatrix LevelMatrix::from_pairs(std::shared_ptr<const OverlapGrid> grid, int n,
                                    const std::function<Level(int, int)>& level) {
  std::vector<Level> e(static_cast<std::size_t>(n) * n, kDiag);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const Level l = level(i, j);
      e[i * n + j] = l;
      e[j * n + i] = l;
    }
  }
  return LevelMatrix(std::move(grid), n, std::move(e));
}

LevelMatrix LevelMatrix::permuted(std::span<const int> perm) const {
  if (static_cast<int>(perm.size()) != n_) {
    throw Error(Errc::invalid_argument, "permutation size differs from n");
  }
  std::vector<Level> e(entries_.size());
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) e[i * n_ + j] = at(perm[i], perm[j]);
  }
  return LevelMatrix(grid_, n_, std::move(e));
}

LevelMatrix LevelMatrix::leading(int m) const {
  if (m < 1 || m > n_) throw Error(Errc::invalid_argument, "leading size out of range");
  std::vector<Level> e(static_cast<std::size_t>(m) * m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) e[i * m + j] = at(i, j);
  }
  return LevelMatrix(grid_, m, std::move(e));
}

DenseMatrix realize(const LevelView& m) {
  DenseMatrix out(m.n());
  for (int i = 0; i < m.n(); ++i) {
    for (int j = 0; j < m.n(); ++j) out(i, j) = m.value(i, j);
  }
  return out;
}

DenseMatrix realize(const LevelMatrix& m) { return realize(m.view()); }

LevelMatrix truncate_to(const LevelMatrix& m, Level top) {
  auto grid = std::make_shared<const OverlapGrid>(m.grid().truncated(top));
  std::vector<Level> e = m.entries();
  for (Level& x : e) {
    if (x != kDiag) x = std::min(x, top);
  }
  return LevelMatrix(std::move(grid), m.n(), std::move(e));
}

LevelMatrix truncate(const LevelMatrix& m) {
  if (m.grid().size() < 2) {
    throw Error(Errc::grid_too_small, "cannot truncate a single-level grid");
  }
  return truncate_to(m, static_cast<Level>(m.grid().top_level() - 1));
}

nlohmann::json to_json(const LevelMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.n(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.n(); ++j) {
      if (m.at(i, j) == kDiag) {
        row.push_back("D");
      } else {
        row.push_back(static_cast<int>(m.at(i, j)));
      }
    }
    rows.push_back(std::move(row));
  }
  return {{"n", m.n()}, {"grid", to_json(m.grid())}, {"entries", std::move(rows)}};
}

LevelMatrix level_matrix_from_json(const nlohmann::json& j) {
  try {
    const int n = j.at("n").get<int>();
    auto grid = std::make_shared<const OverlapGrid>(grid_from_json(j.at("grid")));
    const auto& rows = j.at("entries");
    if (!rows.is_array() || static_cast<int>(rows.size()) != n) {
      throw Error(Errc::parse_error, "entries must have n rows");
    }
    std::vector<Level> e;
    e.reserve(static_cast<std::size_t>(n) * n);
    for (const auto& row : rows) {
      if (!row.is_array() || static_cast<int>(row.size()) != n) {
        throw Error(Errc::parse_error, "each entries row must have n values");
      }
      for (const auto& x : row) {
        if (x.is_string()) {
          if (x.get<std::string>() != "D") throw Error(Errc::parse_error, "unknown entry symbol");
          e.push_back(kDiag);
        } else {
          const int v = x.get<int>();
          if (v < 1 || v > grid->size()) {
            throw Error(Errc::invalid_argument, "entry level out of range");
          }
          e.push_back(static_cast<Level>(v));
        }
      }
    }
    return LevelMatrix(std::move(grid), n, std::move(e));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, std::string("level matrix: ") + e.what());
  }
}

}  // namespace overlap_lab
