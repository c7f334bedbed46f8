#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "coed/criteria.hpp"
#include "coed/model.hpp"

namespace coed {

struct SolverTolerances {
  double kkt = 1e-8;
  double feas = 1e-9;
  double comp = 1e-8;
  double weight_floor = 1e-9;
  int max_iterations = 300;
};

// warm start aligned with WeightProblem::subspace; lambda aligned with the
// constraint list (may be empty)
struct WarmStart {
  std::vector<double> weights;
  MultiplierVector lambda;
};

struct WeightProblem {
  const CandidateSpace* space = nullptr;
  std::vector<std::size_t> subspace;  // candidate indices, unique
  CriterionKind objective;
  std::vector<ConstraintSpec> constraints;
  std::optional<WarmStart> start;
};

// design supported in the subspace plus multipliers covering exactly the
// problem constraints; the simplex normalization multiplier is eliminated
// internally so the Lagrangian sensitivity acts as the reduced gradient
struct SaddlePoint {
  Design design;
  MultiplierVector lambda;
  double kkt_residual = 0.0;
  double feas_residual = 0.0;
};

SaddlePoint solve_saddle(const WeightProblem& p,
                         const SolverTolerances& tol = {});

// strictly feasible design on the subspace: inequalities at most -margin,
// equalities within feas_tol, information matrix nonsingular; the design is
// pulled toward uniform as far as the margin allows
Design phase1_feasible(const WeightProblem& p, double margin);

}  // namespace coed
