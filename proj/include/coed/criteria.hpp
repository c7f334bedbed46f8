#pragma once

#include <string>
#include <utility>
#include <vector>

#include "coed/linalg.hpp"
#include "coed/model.hpp"

namespace coed {

enum class CriterionTag { D, A };

// D: -log det M; A: tr(M^-1). The offset supports constraint use, e.g. an
// A-value bound "tr(M^-1) - 5 <= 0".
struct CriterionKind {
  CriterionTag tag = CriterionTag::D;
  double offset = 0.0;
};

enum class Relation { LessEqual, Equal };
enum class ConstraintType { Moment, Integral };
enum class Continuity { Continuous, Lsc };

// Psi_i(xi): moment type Phi(M(xi)) + criterion.offset; integral type
// scale * sum_x w_x channel(x) + offset. Channels stay raw in the space;
// affine shaping ("4 - roi", "t_m - 5") lives here.
struct ConstraintSpec {
  std::string name;
  ConstraintType kind = ConstraintType::Integral;
  Relation relation = Relation::LessEqual;
  CriterionKind criterion;  // moment type only
  std::string channel;      // integral type only
  double scale = 1.0;       // integral type only
  double offset = 0.0;      // integral type only
  Continuity continuity = Continuity::Continuous;
};

struct Problem {
  CriterionKind objective;
  std::vector<ConstraintSpec> constraints;

  std::vector<std::size_t> inequality_ids() const;
  std::vector<std::size_t> equality_ids() const;
};

// Sparse design: support indices (ascending, unique) with weights on the
// probability simplex.
struct Design {
  const CandidateSpace* space = nullptr;
  std::vector<std::pair<std::size_t, double>> weights;

  void validate() const;  // throws SchemaError when the invariants fail
  double weight_sum() const;
};

// One multiplier per constraint, aligned with Problem::constraints.
// Inequality multipliers are >= 0; equality multipliers are unrestricted.
using MultiplierVector = std::vector<double>;

SymMatrix info_matrix(const Design& xi);

// +infinity sentinel when M is flagged singular.
double criterion_value(const CriterionKind& kind, const SymMatrix& m);

// Derivative of Phi at M as a packed linear form: DPhi(M)(H) = <g, H>.
// D: g = -M^-1; A: g = -M^-2. Throws DomainError on singular M.
struct GradientForm {
  SymMatrix g;
  double apply(const SymMatrix& h) const {
    return packed_sym_dot(g.packed(), h.packed());
  }
};
GradientForm criterion_gradient_form(const CriterionKind& kind,
                                     const SymMatrix& m);

double objective_value(const Problem& p, const Design& xi);
double constraint_value(const ConstraintSpec& c, const Design& xi);
std::vector<double> constraint_values(const Problem& p, const Design& xi);

// psi_0(xi, x) = DPhi(M)(m(x) - M); throws DomainError on singular M
double sensitivity_objective(const CriterionKind& kind, const Design& xi,
                             std::size_t x);
// moment: DPhi_i(M)(m(x) - M); integral: g_i(x) - Psi_i(xi)
double sensitivity_constraint(const ConstraintSpec& c, const Design& xi,
                              std::size_t x);
// psi_L = psi_0 + sum_i lambda_i psi_i; lambda may be empty (all zero)
double lagrangian_sensitivity(const Problem& p, const Design& xi,
                              const MultiplierVector& lambda, std::size_t x);

// Scan kernel for fixed (xi, lambda): folds the objective and all moment
// terms into one packed matrix P (off-diagonals pre-doubled) plus per-channel
// coefficients, so each candidate costs one packed dot product.
class LagrangianEvaluator {
 public:
  LagrangianEvaluator(const Problem& p, const Design& xi,
                      const MultiplierVector& lambda);

  double operator()(std::size_t x) const {
    const double* m = space_->info_ptr(x);
    double v = constant_;
    for (std::size_t k = 0; k < fold_.size(); ++k) v += fold_[k] * m[k];
    for (const auto& [ch, coef] : channel_terms_)
      v += coef * space_->scalar(x, ch);
    return v;
  }

 private:
  const CandidateSpace* space_;
  double constant_ = 0.0;
  std::vector<double> fold_;
  std::vector<std::pair<int, double>> channel_terms_;
};

}  // namespace coed
