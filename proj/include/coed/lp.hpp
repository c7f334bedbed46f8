#pragma once

#include <vector>

namespace coed {

// linear program over the probability simplex:
//   min cost.w  s.t.  eq_rows[r].w = eq_rhs[r],  sum_j w_j = 1,  w >= 0
struct LpProblem {
  std::vector<double> cost;
  std::vector<std::vector<double>> eq_rows;  // each sized like cost
  std::vector<double> eq_rhs;
};

struct LpSolution {
  std::vector<double> weights;
  double optimum = 0.0;
};

// dense two-phase simplex with Bland's rule and lowest-index tie breaks;
// throws Infeasible when the equality rows cannot be met on the simplex,
// Unbounded only on internal error (the simplex domain is compact)
LpSolution solve_lp(const LpProblem& p);

}  // namespace coed
