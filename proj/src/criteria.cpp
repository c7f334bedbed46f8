#include "coed/criteria.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "coed/errors.hpp"

namespace coed {

std::vector<std::size_t> Problem::inequality_ids() const {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < constraints.size(); ++i)
    if (constraints[i].relation == Relation::LessEqual) ids.push_back(i);
  return ids;
}

std::vector<std::size_t> Problem::equality_ids() const {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < constraints.size(); ++i)
    if (constraints[i].relation == Relation::Equal) ids.push_back(i);
  return ids;
}

double Design::weight_sum() const {
  double s = 0.0;
  for (const auto& [idx, w] : weights) s += w;
  return s;
}

void Design::validate() const {
  if (!space) throw SchemaError("design has no candidate space");
  std::size_t prev = 0;
  bool first = true;
  for (const auto& [idx, w] : weights) {
    if (idx >= space->size())
      throw SchemaError("design index " + std::to_string(idx) +
                        " outside the candidate space");
    if (!first && idx <= prev)
      throw SchemaError("design support indices must be ascending and unique");
    if (w < 0.0)
      throw SchemaError("negative design weight " + std::to_string(w));
    prev = idx;
    first = false;
  }
  if (std::abs(weight_sum() - 1.0) > 1e-10)
    throw SchemaError("design weights sum to " + std::to_string(weight_sum()) +
                      ", expected 1");
}

SymMatrix info_matrix(const Design& xi) {
  xi.validate();
  const CandidateSpace& sp = *xi.space;
  SymMatrix m(sp.d_theta());
  const std::size_t pk = sp.packed_dim();
  for (const auto& [idx, w] : xi.weights) {
    const double* p = sp.info_ptr(idx);
    for (std::size_t k = 0; k < pk; ++k) m.packed()[k] += w * p[k];
  }
  return m;
}

double criterion_value(const CriterionKind& kind, const SymMatrix& m) {
  auto f = cholesky(m);
  if (!f) return std::numeric_limits<double>::infinity();
  switch (kind.tag) {
    case CriterionTag::D:
      return -f->logdet();
    case CriterionTag::A:
      return trace_product(*f, SymMatrix::identity(m.dim()));
  }
  throw SchemaError("unknown criterion tag");
}

GradientForm criterion_gradient_form(const CriterionKind& kind,
                                     const SymMatrix& m) {
  auto f = cholesky(m);
  if (!f)
    throw DomainError("criterion gradient requested at a singular matrix");
  SymMatrix inv = f->inverse();
  switch (kind.tag) {
    case CriterionTag::D: {
      for (double& v : inv.packed()) v = -v;
      return {std::move(inv)};
    }
    case CriterionTag::A: {
      Eigen::MatrixXd dense = inv.to_dense();
      SymMatrix minus_sq = SymMatrix::from_dense(-(dense * dense));
      return {std::move(minus_sq)};
    }
  }
  throw SchemaError("unknown criterion tag");
}

namespace {

double channel_average(const Design& xi, int ch) {
  double avg = 0.0;
  for (const auto& [idx, w] : xi.weights) avg += w * xi.space->scalar(idx, ch);
  return avg;
}

int require_channel(const ConstraintSpec& c, const CandidateSpace& sp) {
  const int ch = sp.channel(c.channel);
  if (ch < 0)
    throw SchemaError("constraint '" + c.name + "' references channel '" +
                      c.channel + "' absent from the candidate space");
  return ch;
}

}  // namespace

double objective_value(const Problem& p, const Design& xi) {
  return criterion_value(p.objective, info_matrix(xi)) + p.objective.offset;
}

double constraint_value(const ConstraintSpec& c, const Design& xi) {
  xi.validate();
  if (c.kind == ConstraintType::Moment)
    return criterion_value(c.criterion, info_matrix(xi)) + c.criterion.offset;
  const int ch = require_channel(c, *xi.space);
  return c.scale * channel_average(xi, ch) + c.offset;
}

std::vector<double> constraint_values(const Problem& p, const Design& xi) {
  std::vector<double> vals;
  vals.reserve(p.constraints.size());
  for (const ConstraintSpec& c : p.constraints)
    vals.push_back(constraint_value(c, xi));
  return vals;
}

double sensitivity_objective(const CriterionKind& kind, const Design& xi,
                             std::size_t x) {
  SymMatrix m = info_matrix(xi);
  GradientForm g = criterion_gradient_form(kind, m);
  return g.apply(xi.space->info(x)) - g.apply(m);
}

double sensitivity_constraint(const ConstraintSpec& c, const Design& xi,
                              std::size_t x) {
  if (c.kind == ConstraintType::Moment) {
    SymMatrix m = info_matrix(xi);
    GradientForm g = criterion_gradient_form(c.criterion, m);
    return g.apply(xi.space->info(x)) - g.apply(m);
  }
  xi.validate();
  const int ch = require_channel(c, *xi.space);
  // g_i(x) - Psi_i(xi); the affine offset cancels
  return c.scale * (xi.space->scalar(x, ch) - channel_average(xi, ch));
}

double lagrangian_sensitivity(const Problem& p, const Design& xi,
                              const MultiplierVector& lambda, std::size_t x) {
  return LagrangianEvaluator(p, xi, lambda)(x);
}

LagrangianEvaluator::LagrangianEvaluator(const Problem& p, const Design& xi,
                                         const MultiplierVector& lambda)
    : space_(xi.space) {
  xi.validate();
  if (!lambda.empty() && lambda.size() != p.constraints.size())
    throw SchemaError("multiplier vector has " +
                      std::to_string(lambda.size()) + " entries for " +
                      std::to_string(p.constraints.size()) + " constraints");
  auto lam = [&](std::size_t i) { return lambda.empty() ? 0.0 : lambda[i]; };

  const SymMatrix m = info_matrix(xi);
  const int d = m.dim();

  // accumulate P = G_0 + sum over moment constraints of lambda_i G_i
  GradientForm g0 = criterion_gradient_form(p.objective, m);
  std::vector<double> p_sym = g0.g.packed();
  for (std::size_t i = 0; i < p.constraints.size(); ++i) {
    const ConstraintSpec& c = p.constraints[i];
    if (c.kind != ConstraintType::Moment || lam(i) == 0.0) continue;
    GradientForm gi = criterion_gradient_form(c.criterion, m);
    for (std::size_t k = 0; k < p_sym.size(); ++k)
      p_sym[k] += lam(i) * gi.g.packed()[k];
  }
  // <P, M> folds into the constant; integral terms contribute
  // lambda_i * scale_i * (channel(x) - average)
  constant_ = -packed_sym_dot(p_sym, m.packed());
  std::map<int, double> coef;
  for (std::size_t i = 0; i < p.constraints.size(); ++i) {
    const ConstraintSpec& c = p.constraints[i];
    if (c.kind != ConstraintType::Integral || lam(i) == 0.0) continue;
    const int ch = require_channel(c, *space_);
    coef[ch] += lam(i) * c.scale;
    constant_ -= lam(i) * c.scale * channel_average(xi, ch);
  }
  channel_terms_.assign(coef.begin(), coef.end());

  // pre-double the off-diagonals so the scan is a plain dot product
  fold_ = std::move(p_sym);
  std::size_t k = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < i; ++j, ++k) fold_[k] *= 2.0;
    ++k;  // diagonal entry stays
  }
}

}  // namespace coed
