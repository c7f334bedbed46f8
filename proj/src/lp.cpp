#include "coed/lp.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

#include "coed/errors.hpp"

namespace coed {

namespace {

constexpr double kPivotTol = 1e-11;
constexpr double kRatioTieTol = 1e-12;

struct Tableau {
  std::size_t n = 0;       // structural variables
  std::size_t ncols = 0;   // structural + artificial
  std::vector<std::vector<double>> rows;  // each ncols + 1 (rhs last)
  std::vector<std::size_t> basis;         // per row

  double rhs(std::size_t r) const { return rows[r][ncols]; }

  void pivot(std::size_t r, std::size_t c) {
    std::vector<double>& piv = rows[r];
    const double inv = 1.0 / piv[c];
    for (double& v : piv) v *= inv;
    piv[c] = 1.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (i == r) continue;
      const double f = rows[i][c];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j <= ncols; ++j) rows[i][j] -= f * piv[j];
      rows[i][c] = 0.0;
    }
    basis[r] = c;
  }

  // Bland's rule: entering = lowest eligible column with negative reduced
  // cost, leaving = lowest basis variable among minimum-ratio rows
  void run_simplex(std::vector<double>& obj, std::size_t max_col) {
    const std::size_t iter_cap = 50 * (rows.size() + ncols + 10);
    for (std::size_t iter = 0; iter < iter_cap; ++iter) {
      std::size_t enter = max_col;
      for (std::size_t j = 0; j < max_col; ++j) {
        if (obj[j] < -kPivotTol) {
          enter = j;
          break;
        }
      }
      if (enter == max_col) return;  // optimal

      std::size_t leave = rows.size();
      double best_ratio = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const double a = rows[r][enter];
        if (a <= kPivotTol) continue;
        const double ratio = rhs(r) / a;
        if (ratio < best_ratio - kRatioTieTol * (1.0 + std::abs(ratio))) {
          best_ratio = ratio;
          leave = r;
        } else if (ratio <= best_ratio + kRatioTieTol * (1.0 + std::abs(ratio)) &&
                   leave < rows.size() && basis[r] < basis[leave]) {
          leave = r;
        }
      }
      if (leave == rows.size())
        throw Unbounded("simplex column unbounded over the simplex domain");

      const double f = obj[enter];
      pivot(leave, enter);
      for (std::size_t j = 0; j <= ncols; ++j) obj[j] -= f * rows[leave][j];
      obj[enter] = 0.0;
    }
    throw MaxIterations("simplex iteration cap exceeded");
  }
};

}  // namespace

LpSolution solve_lp(const LpProblem& p) {
  const std::size_t n = p.cost.size();
  if (n == 0) throw SchemaError("lp over an empty variable set");
  if (p.eq_rows.size() != p.eq_rhs.size())
    throw SchemaError("lp row and rhs counts differ");
  for (const std::vector<double>& row : p.eq_rows)
    if (row.size() != n) throw SchemaError("lp row width differs from cost");

  const std::size_t m = p.eq_rows.size() + 1;  // extra simplex row
  Tableau t;
  t.n = n;
  t.ncols = n + m;
  t.rows.assign(m, std::vector<double>(t.ncols + 1, 0.0));
  t.basis.resize(m);

  for (std::size_t j = 0; j < n; ++j) t.rows[0][j] = 1.0;
  t.rows[0][t.ncols] = 1.0;
  for (std::size_t r = 1; r < m; ++r) {
    const double sign = p.eq_rhs[r - 1] < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < n; ++j)
      t.rows[r][j] = sign * p.eq_rows[r - 1][j];
    t.rows[r][t.ncols] = sign * p.eq_rhs[r - 1];
  }
  for (std::size_t r = 0; r < m; ++r) {
    t.rows[r][n + r] = 1.0;
    t.basis[r] = n + r;
  }

  // phase 1: minimize the artificial sum; reduced costs start as the
  // negated row sums so the artificial columns price to zero
  std::vector<double> obj(t.ncols + 1, 0.0);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j <= t.ncols; ++j) obj[j] -= t.rows[r][j];
  for (std::size_t r = 0; r < m; ++r) obj[n + r] = 0.0;
  t.run_simplex(obj, t.ncols);

  double infeas = 0.0;
  for (std::size_t r = 0; r < m; ++r)
    if (t.basis[r] >= n) infeas += t.rhs(r);
  if (infeas > 1e-9)
    throw Infeasible("equality rows unreachable on the simplex (phase-1 gap " +
                     std::to_string(infeas) + ")");

  // pivot lingering artificials onto structural columns, or drop the row
  for (std::size_t r = 0; r < t.rows.size();) {
    if (t.basis[r] < n) {
      ++r;
      continue;
    }
    std::size_t col = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(t.rows[r][j]) > kPivotTol) {
        col = j;
        break;
      }
    }
    if (col < n) {
      t.pivot(r, col);
      ++r;
    } else {
      t.rows.erase(t.rows.begin() + static_cast<std::ptrdiff_t>(r));
      t.basis.erase(t.basis.begin() + static_cast<std::ptrdiff_t>(r));
    }
  }

  // phase 2 over the structural columns only
  std::vector<double> obj2(t.ncols + 1, 0.0);
  for (std::size_t j = 0; j < n; ++j) obj2[j] = p.cost[j];
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double cb = p.cost[t.basis[r]];
    if (cb == 0.0) continue;
    for (std::size_t j = 0; j <= t.ncols; ++j) obj2[j] -= cb * t.rows[r][j];
  }
  t.run_simplex(obj2, n);

  LpSolution out;
  out.weights.assign(n, 0.0);
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    out.weights[t.basis[r]] = std::max(0.0, t.rhs(r));
  out.optimum = 0.0;
  for (std::size_t j = 0; j < n; ++j) out.optimum += p.cost[j] * out.weights[j];
  return out;
}

}  // namespace coed
