#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "coed/criteria.hpp"
#include "coed/model.hpp"
#include "coed/solver.hpp"

namespace coed {

enum class SearchMode { kNeighbor, kNone };

struct IterationRecord {
  int iteration = 0;
  std::size_t subspace_size = 0;
  std::size_t support_size = 0;
  double objective = 0.0;
  std::vector<double> constraints;
  MultiplierVector lambda;
  double kkt_residual = 0.0;
  std::string branch;               // "violator" or "enumeration"
  double min_value = 0.0;           // sensitivity at the chosen point
  std::ptrdiff_t added_index = -1;  // -1 when the iteration terminated
};

struct AlgoSettings {
  double epsilon = 1e-3;  // 0 selects the exact enumeration loop
  double delta = 1e-4;    // minimizer approximation slack in the tests
  int max_iterations = 200;
  SearchMode search = SearchMode::kNeighbor;
  int starts = 64;  // random probes per violator search
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = hardware concurrency
  SolverTolerances solver;
  // called after each completed iteration, before the next solve
  std::function<void(const IterationRecord&)> on_iteration;
};

// strict feasibility, non-one-sidedness of the equality integrands, and the
// support cardinality bound, all on the initial discretization
struct PreflightReport {
  Design eta0;
  std::vector<double> directional_margins;  // two per integral equality
  std::size_t support_bound = 0;
};

PreflightReport preflight(const CandidateSpace& space, const Problem& problem,
                          const std::vector<std::size_t>& x0,
                          double margin = 1e-6);

std::size_t support_bound(const Problem& problem, int d_theta);

// exact argmin of the Lagrangian sensitivity over the full space, ties to
// the lowest index independent of thread count
std::pair<std::size_t, double> min_sensitivity(const Problem& problem,
                                               const Design& xi,
                                               const MultiplierVector& lambda,
                                               int threads = 0);

// first point with sensitivity below -epsilon among the support's grid
// neighbors (ascending index) and then seeded random probes
std::optional<std::size_t> search_violator(const Problem& problem,
                                           const Design& xi,
                                           const MultiplierVector& lambda,
                                           double epsilon,
                                           const AlgoSettings& settings);

struct Certificate {
  double epsilon_star = 0.0;
  std::size_t min_index = 0;
  double min_value = 0.0;
  std::size_t support_size = 0;
  std::size_t support_bound = 0;
  double feas_residual = 0.0;
};

Certificate certify(const Problem& problem, const Design& xi,
                    const MultiplierVector& lambda,
                    const SolverTolerances& tol = {}, int threads = 0);

enum class Termination { kCertified, kDuplicateCandidate, kMaxIterations };

struct RunTrace {
  std::vector<IterationRecord> records;
  Termination termination = Termination::kCertified;
  std::vector<std::string> warnings;
};

struct RunResult {
  Design design;
  MultiplierVector lambda;
  Certificate certificate;
  RunTrace trace;
};

// exact enumeration loop: refine until the enumeration minimum clears the
// approximation slack
RunResult run_special(const CandidateSpace& space, const Problem& problem,
                      const std::vector<std::size_t>& x0,
                      const AlgoSettings& settings);

// epsilon-relaxed loop: cheap violator search first, exact enumeration only
// when the search comes up empty
RunResult run_general(const CandidateSpace& space, const Problem& problem,
                      const std::vector<std::size_t>& x0,
                      const AlgoSettings& settings);

// classical unconstrained baseline: move toward the minimizing vertex with
// an exact line search until the sensitivity minimum clears -tol
Design vertex_direction_oracle(const CandidateSpace& space,
                               CriterionKind criterion, int max_iter,
                               double tol, int threads = 0);

}  // namespace coed
