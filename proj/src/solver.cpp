#include "coed/solver.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "coed/errors.hpp"
#include "coed/linalg.hpp"
#include "coed/lp.hpp"

namespace coed {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// tr(a * b) without forming the product
double trace_of_product(const MatrixXd& a, const MatrixXd& b) {
  return a.cwiseProduct(b.transpose()).sum();
}

struct ConstraintData {
  const ConstraintSpec* spec = nullptr;
  bool moment = false;
  VectorXd lin;  // integral only: scale * channel value per subspace point
};

struct ProblemData {
  const CandidateSpace* space = nullptr;
  std::vector<std::size_t> sub;  // candidate indices
  std::size_t n = 0;
  int d = 0;
  CriterionKind objective;
  const std::vector<ConstraintSpec>* specs = nullptr;
  std::vector<ConstraintData> cons;
  std::vector<std::size_t> eq_ids, in_ids;
  std::vector<MatrixXd> m;
};

ProblemData build_data(const WeightProblem& p) {
  if (!p.space) throw SchemaError("weight problem has no candidate space");
  if (p.subspace.empty()) throw SchemaError("weight problem subspace is empty");
  ProblemData pd;
  pd.space = p.space;
  pd.sub = p.subspace;
  pd.n = p.subspace.size();
  pd.d = p.space->d_theta();
  pd.objective = p.objective;
  pd.specs = &p.constraints;
  {
    std::vector<std::size_t> sorted = pd.sub;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t j = 0; j < sorted.size(); ++j) {
      if (sorted[j] >= p.space->size())
        throw SchemaError("subspace index outside the candidate space");
      if (j > 0 && sorted[j] == sorted[j - 1])
        throw SchemaError("subspace indices must be unique");
    }
  }
  pd.m.reserve(pd.n);
  for (std::size_t idx : pd.sub) pd.m.push_back(p.space->info(idx).to_dense());
  pd.cons.resize(p.constraints.size());
  for (std::size_t i = 0; i < p.constraints.size(); ++i) {
    const ConstraintSpec& c = p.constraints[i];
    ConstraintData& cd = pd.cons[i];
    cd.spec = &c;
    cd.moment = c.kind == ConstraintType::Moment;
    if (!cd.moment) {
      const int ch = p.space->channel(c.channel);
      if (ch < 0)
        throw SchemaError("constraint '" + c.name + "' references channel '" +
                          c.channel + "' absent from the candidate space");
      cd.lin.resize(static_cast<Eigen::Index>(pd.n));
      for (std::size_t j = 0; j < pd.n; ++j)
        cd.lin[static_cast<Eigen::Index>(j)] =
            c.scale * p.space->scalar(pd.sub[j], ch);
    }
    (c.relation == Relation::Equal ? pd.eq_ids : pd.in_ids).push_back(i);
  }
  return pd;
}

// restriction of the data to a subset of subspace positions
ProblemData restrict_data(const ProblemData& pd,
                          const std::vector<std::size_t>& pos) {
  ProblemData out;
  out.space = pd.space;
  out.n = pos.size();
  out.d = pd.d;
  out.objective = pd.objective;
  out.specs = pd.specs;
  out.eq_ids = pd.eq_ids;
  out.in_ids = pd.in_ids;
  out.sub.reserve(pos.size());
  out.m.reserve(pos.size());
  for (std::size_t k : pos) {
    out.sub.push_back(pd.sub[k]);
    out.m.push_back(pd.m[k]);
  }
  out.cons.resize(pd.cons.size());
  for (std::size_t i = 0; i < pd.cons.size(); ++i) {
    out.cons[i].spec = pd.cons[i].spec;
    out.cons[i].moment = pd.cons[i].moment;
    if (!pd.cons[i].moment) {
      out.cons[i].lin.resize(static_cast<Eigen::Index>(pos.size()));
      for (std::size_t k = 0; k < pos.size(); ++k)
        out.cons[i].lin[static_cast<Eigen::Index>(k)] =
            pd.cons[i].lin[static_cast<Eigen::Index>(pos[k])];
    }
  }
  return out;
}

struct Eval {
  bool ok = false;
  MatrixXd M, Minv;
  double logdet = 0.0;
  std::vector<MatrixXd> K;  // Minv * m_j
  bool has_grad_d = false, has_grad_a = false;
  VectorXd grad_d, grad_a;

  bool factor(const ProblemData& pd, const VectorXd& w) {
    MatrixXd mm = MatrixXd::Zero(pd.d, pd.d);
    for (std::size_t j = 0; j < pd.n; ++j)
      mm += w[static_cast<Eigen::Index>(j)] * pd.m[j];
    auto f = cholesky(SymMatrix::from_dense(mm));
    ok = f.has_value();
    if (!ok) return false;
    M = std::move(mm);
    logdet = f->logdet();
    Minv = f->inverse().to_dense();
    K.clear();
    has_grad_d = has_grad_a = false;
    return true;
  }

  void need_k(const ProblemData& pd) {
    if (!K.empty()) return;
    K.resize(pd.n);
    for (std::size_t j = 0; j < pd.n; ++j) K[j] = Minv * pd.m[j];
  }

  double value(CriterionTag tag) const {
    return tag == CriterionTag::D ? -logdet : Minv.trace();
  }

  const VectorXd& grad(const ProblemData& pd, CriterionTag tag) {
    need_k(pd);
    if (tag == CriterionTag::D) {
      if (!has_grad_d) {
        grad_d.resize(static_cast<Eigen::Index>(pd.n));
        for (std::size_t j = 0; j < pd.n; ++j)
          grad_d[static_cast<Eigen::Index>(j)] = -K[j].trace();
        has_grad_d = true;
      }
      return grad_d;
    }
    if (!has_grad_a) {
      grad_a.resize(static_cast<Eigen::Index>(pd.n));
      for (std::size_t j = 0; j < pd.n; ++j)
        grad_a[static_cast<Eigen::Index>(j)] = -trace_of_product(Minv, K[j]);
      has_grad_a = true;
    }
    return grad_a;
  }
};

// exact second derivatives of the weight-space criterion compositions:
// D gives tr(K_j K_l), A gives 2 tr(K_j K_l M^-1)
void add_hessian(const ProblemData& pd, Eval& ev, double coef_d, double coef_a,
                 MatrixXd& h) {
  if (coef_d == 0.0 && coef_a == 0.0) return;
  ev.need_k(pd);
  std::vector<MatrixXd> km;
  if (coef_a != 0.0) {
    km.resize(pd.n);
    for (std::size_t j = 0; j < pd.n; ++j) km[j] = ev.K[j] * ev.Minv;
  }
  for (std::size_t j = 0; j < pd.n; ++j) {
    for (std::size_t l = j; l < pd.n; ++l) {
      double v = 0.0;
      if (coef_d != 0.0) v += coef_d * trace_of_product(ev.K[j], ev.K[l]);
      if (coef_a != 0.0)
        v += coef_a * 2.0 * trace_of_product(ev.K[j], km[l]);
      const auto jj = static_cast<Eigen::Index>(j);
      const auto ll = static_cast<Eigen::Index>(l);
      h(jj, ll) += v;
      if (l != j) h(ll, jj) += v;
    }
  }
}

double con_value(const ProblemData& pd, Eval& ev, const VectorXd& w,
                 std::size_t i) {
  const ConstraintData& cd = pd.cons[i];
  if (cd.moment)
    return ev.value(cd.spec->criterion.tag) + cd.spec->criterion.offset;
  return cd.lin.dot(w) + cd.spec->offset;
}

const VectorXd& con_grad(const ProblemData& pd, Eval& ev, std::size_t i) {
  const ConstraintData& cd = pd.cons[i];
  if (cd.moment) return ev.grad(pd, cd.spec->criterion.tag);
  return cd.lin;
}

bool any_moment(const ProblemData& pd) {
  for (const ConstraintData& cd : pd.cons)
    if (cd.moment) return true;
  return false;
}

double boundary_step(const VectorXd& x, const VectorXd& dx, double tau) {
  double a = 1.0;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (dx[i] < 0.0) a = std::min(a, -tau * x[i] / dx[i]);
  return a;
}

enum class Mode { kSaddle, kPhase1, kCenter };

struct IpmState {
  VectorXd w;
  double t = 0.0;
  VectorXd s, yI, z, yE;
  double nu = 0.0;
};

struct IpmOutcome {
  IpmState st;
  bool converged = false;
  bool early = false;
  double pinf = std::numeric_limits<double>::infinity();
  double dinf = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

// primal-dual interior-point iteration over the simplex with slacked
// inequalities and explicit equality multipliers; the phase-1 mode carries
// an extra free epigraph variable t bounding all inequalities
IpmOutcome run_ipm(const ProblemData& pd, Mode mode, IpmState st,
                   const SolverTolerances& tol, double margin) {
  const std::size_t n = pd.n;
  const std::size_t m_eq = pd.eq_ids.size();
  const std::size_t m_in = mode == Mode::kCenter ? 0 : pd.in_ids.size();
  const bool has_t = mode == Mode::kPhase1;
  const std::size_t nv = n + (has_t ? 1 : 0);
  const std::size_t dim = nv + 1 + m_eq;
  const bool need_m = mode == Mode::kSaddle || any_moment(pd);

  IpmOutcome out;
  Eval ev;
  for (int iter = 0; iter < tol.max_iterations; ++iter) {
    out.iterations = iter;
    if (need_m && !ev.factor(pd, st.w))
      throw DomainEscape(
          "weights give a singular information matrix on the subspace");

    VectorXd gf = VectorXd::Zero(static_cast<Eigen::Index>(n));
    double fval = 0.0;
    if (mode == Mode::kSaddle) {
      gf = ev.grad(pd, pd.objective.tag);
      fval = ev.value(pd.objective.tag) + pd.objective.offset;
    } else if (mode == Mode::kPhase1) {
      fval = st.t;
    }

    VectorXd f_eq(static_cast<Eigen::Index>(m_eq));
    VectorXd f_in(static_cast<Eigen::Index>(m_in));
    std::vector<const VectorXd*> g_eq(m_eq), g_in(m_in);
    for (std::size_t e = 0; e < m_eq; ++e) {
      f_eq[static_cast<Eigen::Index>(e)] =
          con_value(pd, ev, st.w, pd.eq_ids[e]);
      g_eq[e] = &con_grad(pd, ev, pd.eq_ids[e]);
    }
    for (std::size_t i = 0; i < m_in; ++i) {
      f_in[static_cast<Eigen::Index>(i)] =
          con_value(pd, ev, st.w, pd.in_ids[i]) - (has_t ? st.t : 0.0);
      g_in[i] = &con_grad(pd, ev, pd.in_ids[i]);
    }

    VectorXd rd = gf;
    for (std::size_t e = 0; e < m_eq; ++e)
      rd += st.yE[static_cast<Eigen::Index>(e)] * (*g_eq[e]);
    for (std::size_t i = 0; i < m_in; ++i)
      rd += st.yI[static_cast<Eigen::Index>(i)] * (*g_in[i]);
    rd.array() += st.nu;
    rd -= st.z;
    const double rd_t = has_t ? 1.0 - st.yI.sum() : 0.0;
    const double rsimp = st.w.sum() - 1.0;
    VectorXd ri = f_in + st.s;

    const double gap =
        (st.w.dot(st.z) + (m_in ? st.s.dot(st.yI) : 0.0)) /
        static_cast<double>(n + m_in);
    const double sd = 1.0 + gf.lpNorm<Eigen::Infinity>() +
                      st.z.lpNorm<Eigen::Infinity>() + std::abs(st.nu);
    const double dinf =
        std::max(rd.lpNorm<Eigen::Infinity>(), std::abs(rd_t)) / sd;
    const double pinf = std::max(
        {std::abs(rsimp),
         m_eq ? f_eq.lpNorm<Eigen::Infinity>() : 0.0,
         m_in ? ri.lpNorm<Eigen::Infinity>() : 0.0});
    out.pinf = pinf;
    out.dinf = dinf;

    if (mode == Mode::kPhase1) {
      const double max_true =
          m_in ? (f_in.array() + st.t).maxCoeff()
               : -std::numeric_limits<double>::infinity();
      const double eq_res = std::max(
          std::abs(rsimp), m_eq ? f_eq.lpNorm<Eigen::Infinity>() : 0.0);
      if (max_true <= -2.0 * margin && eq_res <= 0.5 * tol.feas) {
        out.converged = true;
        out.early = true;
        out.st = std::move(st);
        return out;
      }
    }
    const double gap_tol = 1e-12 * (1.0 + std::abs(fval));
    if (mode == Mode::kCenter) {
      const double comp_res =
          (st.w.array() * st.z.array() - 1e-2).abs().maxCoeff();
      if (pinf <= 1e-12 && dinf <= 1e-12 && comp_res <= 1e-10) {
        out.converged = true;
        out.st = std::move(st);
        return out;
      }
    } else if (pinf <= std::min(0.5 * tol.feas, 1e-9) && dinf <= 1e-9 &&
               gap <= gap_tol) {
      out.converged = true;
      out.st = std::move(st);
      return out;
    }

    const double mu =
        mode == Mode::kCenter ? 1e-2 : std::max(0.2 * gap, 1e-14);

    double coef_d = 0.0, coef_a = 0.0;
    if (mode == Mode::kSaddle)
      (pd.objective.tag == CriterionTag::D ? coef_d : coef_a) += 1.0;
    for (std::size_t e = 0; e < m_eq; ++e) {
      const ConstraintData& cd = pd.cons[pd.eq_ids[e]];
      if (cd.moment)
        (cd.spec->criterion.tag == CriterionTag::D ? coef_d : coef_a) +=
            st.yE[static_cast<Eigen::Index>(e)];
    }
    for (std::size_t i = 0; i < m_in; ++i) {
      const ConstraintData& cd = pd.cons[pd.in_ids[i]];
      if (cd.moment)
        (cd.spec->criterion.tag == CriterionTag::D ? coef_d : coef_a) +=
            st.yI[static_cast<Eigen::Index>(i)];
    }

    MatrixXd a = MatrixXd::Zero(static_cast<Eigen::Index>(dim),
                                static_cast<Eigen::Index>(dim));
    VectorXd rhs = VectorXd::Zero(static_cast<Eigen::Index>(dim));
    if (need_m) {
      MatrixXd h = MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                  static_cast<Eigen::Index>(n));
      add_hessian(pd, ev, coef_d, coef_a, h);
      a.topLeftCorner(static_cast<Eigen::Index>(n),
                      static_cast<Eigen::Index>(n)) = h;
    }
    for (std::size_t j = 0; j < n; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      a(jj, jj) += st.z[jj] / st.w[jj];
    }
    VectorXd corr = VectorXd::Zero(static_cast<Eigen::Index>(nv));
    for (std::size_t i = 0; i < m_in; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const VectorXd& g = *g_in[i];
      const double dscale = st.yI[ii] / st.s[ii];
      for (std::size_t j = 0; j < n; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        for (std::size_t l = 0; l < n; ++l)
          a(jj, static_cast<Eigen::Index>(l)) +=
              dscale * g[jj] * g[static_cast<Eigen::Index>(l)];
        if (has_t) {
          a(jj, static_cast<Eigen::Index>(n)) -= dscale * g[jj];
          a(static_cast<Eigen::Index>(n), jj) -= dscale * g[jj];
        }
      }
      if (has_t)
        a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) +=
            dscale;
      const double c1 =
          (mu - st.yI[ii] * st.s[ii]) / st.s[ii] + dscale * ri[ii];
      corr.head(static_cast<Eigen::Index>(n)) += c1 * g;
      if (has_t) corr[static_cast<Eigen::Index>(n)] -= c1;
    }
    rhs.head(static_cast<Eigen::Index>(n)) =
        -rd + (mu / st.w.array() - st.z.array()).matrix();
    if (has_t) rhs[static_cast<Eigen::Index>(n)] = -rd_t;
    rhs.head(static_cast<Eigen::Index>(nv)) -= corr;

    const auto simplex_col = static_cast<Eigen::Index>(nv);
    for (std::size_t j = 0; j < n; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      a(jj, simplex_col) = 1.0;
      a(simplex_col, jj) = 1.0;
    }
    a(simplex_col, simplex_col) = -1e-12;
    rhs[simplex_col] = -rsimp;
    for (std::size_t e = 0; e < m_eq; ++e) {
      const auto col = static_cast<Eigen::Index>(nv + 1 + e);
      const VectorXd& g = *g_eq[e];
      for (std::size_t j = 0; j < n; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        a(jj, col) = g[jj];
        a(col, jj) = g[jj];
      }
      a(col, col) = -1e-12;
      rhs[col] = -f_eq[static_cast<Eigen::Index>(e)];
    }

    Eigen::PartialPivLU<MatrixXd> lu(a);
    VectorXd delta = lu.solve(rhs);
    if (!delta.allFinite())
      throw DomainEscape("interior-point step failed to solve");

    VectorXd dw = delta.head(static_cast<Eigen::Index>(n));
    const double dt = has_t ? delta[static_cast<Eigen::Index>(n)] : 0.0;
    const double dnu = delta[simplex_col];
    VectorXd dy_eq = delta.tail(static_cast<Eigen::Index>(m_eq));

    VectorXd ds(static_cast<Eigen::Index>(m_in)),
        dy_in(static_cast<Eigen::Index>(m_in));
    for (std::size_t i = 0; i < m_in; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const double gdv = g_in[i]->dot(dw) - (has_t ? dt : 0.0);
      ds[ii] = -ri[ii] - gdv;
      dy_in[ii] = (mu - st.yI[ii] * st.s[ii]) / st.s[ii] -
                  (st.yI[ii] / st.s[ii]) * ds[ii];
    }
    VectorXd dz = (mu / st.w.array() - st.z.array() -
                   (st.z.array() / st.w.array()) * dw.array())
                      .matrix();

    const double tau = 0.995;
    double ap = std::min({1.0, boundary_step(st.w, dw, tau),
                          m_in ? boundary_step(st.s, ds, tau) : 1.0});
    const double ad = std::min({1.0, boundary_step(st.z, dz, tau),
                                m_in ? boundary_step(st.yI, dy_in, tau) : 1.0});
    if (need_m) {
      int halvings = 0;
      Eval probe;
      while (halvings < 60 && !probe.factor(pd, st.w + ap * dw)) {
        ap *= 0.5;
        ++halvings;
      }
      if (halvings >= 60)
        throw DomainEscape(
            "line search could not keep the information matrix nonsingular");
    }

    st.w += ap * dw;
    if (m_in) st.s += ap * ds;
    if (has_t) st.t += ap * dt;
    st.z += ad * dz;
    if (m_in) st.yI += ad * dy_in;
    st.yE += ad * dy_eq;
    st.nu += ad * dnu;
  }
  out.st = std::move(st);
  return out;
}

struct PolishOutput {
  std::vector<std::size_t> keep;  // positions into pd.sub
  VectorXd w;                     // aligned with keep
  VectorXd y_eq;
  std::vector<double> y_in;       // aligned with pd.in_ids
  std::vector<char> active;       // aligned with pd.in_ids
};

// equality-constrained Newton on the pruned support with an active-set
// outer loop; drives the weight-space KKT residuals to machine precision
PolishOutput polish(const ProblemData& pd, const IpmState& ipm,
                    const SolverTolerances& tol) {
  PolishOutput po;
  for (std::size_t j = 0; j < pd.n; ++j)
    if (ipm.w[static_cast<Eigen::Index>(j)] >= tol.weight_floor)
      po.keep.push_back(j);
  if (po.keep.empty())
    throw MaxIterations("all interior weights fell below the floor");
  po.y_eq = ipm.yE;
  po.y_in.assign(pd.in_ids.size(), 0.0);
  po.active.assign(pd.in_ids.size(), 0);
  for (std::size_t i = 0; i < pd.in_ids.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (ipm.yI[ii] > ipm.s[ii]) {
      po.active[i] = 1;
      po.y_in[i] = ipm.yI[ii];
    }
  }

  po.w.resize(static_cast<Eigen::Index>(po.keep.size()));
  for (std::size_t k = 0; k < po.keep.size(); ++k)
    po.w[static_cast<Eigen::Index>(k)] =
        ipm.w[static_cast<Eigen::Index>(po.keep[k])];
  po.w /= po.w.sum();

  for (int outer = 0; outer < 24; ++outer) {
    bool dropped = true;
    while (dropped) {
      dropped = false;
      ProblemData rd_data = restrict_data(pd, po.keep);
      const std::size_t k = po.keep.size();
      const std::size_t m_eq = pd.eq_ids.size();
      std::vector<std::size_t> act;
      for (std::size_t i = 0; i < pd.in_ids.size(); ++i)
        if (po.active[i]) act.push_back(i);
      const std::size_t m_act = act.size();
      const std::size_t dim = k + 1 + m_eq + m_act;

      Eval ev;
      double nu = 0.0;
      for (int it = 0; it < 60; ++it) {
        if (!ev.factor(rd_data, po.w)) {
          if (it == 0)
            throw DomainEscape(
                "pruned support gives a singular information matrix");
          break;
        }
        const VectorXd& gf = ev.grad(rd_data, pd.objective.tag);
        if (it == 0) {
          // center the simplex multiplier so the first residual is small
          nu = -po.w.dot(gf);
          for (std::size_t e = 0; e < m_eq; ++e)
            nu -= po.y_eq[static_cast<Eigen::Index>(e)] *
                  po.w.dot(con_grad(rd_data, ev, pd.eq_ids[e]));
          for (std::size_t ai = 0; ai < m_act; ++ai)
            nu -= po.y_in[act[ai]] *
                  po.w.dot(con_grad(rd_data, ev, pd.in_ids[act[ai]]));
        }

        VectorXd rdv = gf;
        for (std::size_t e = 0; e < m_eq; ++e)
          rdv += po.y_eq[static_cast<Eigen::Index>(e)] *
                 con_grad(rd_data, ev, pd.eq_ids[e]);
        for (std::size_t ai = 0; ai < m_act; ++ai)
          rdv += po.y_in[act[ai]] * con_grad(rd_data, ev, pd.in_ids[act[ai]]);
        rdv.array() += nu;
        const double rs = po.w.sum() - 1.0;
        VectorXd re(static_cast<Eigen::Index>(m_eq));
        for (std::size_t e = 0; e < m_eq; ++e)
          re[static_cast<Eigen::Index>(e)] =
              con_value(rd_data, ev, po.w, pd.eq_ids[e]);
        VectorXd ra(static_cast<Eigen::Index>(m_act));
        for (std::size_t ai = 0; ai < m_act; ++ai)
          ra[static_cast<Eigen::Index>(ai)] =
              con_value(rd_data, ev, po.w, pd.in_ids[act[ai]]);

        const double sd = 1.0 + gf.lpNorm<Eigen::Infinity>();
        const double res = std::max(
            {rdv.lpNorm<Eigen::Infinity>() / sd, std::abs(rs),
             m_eq ? re.lpNorm<Eigen::Infinity>() : 0.0,
             m_act ? ra.lpNorm<Eigen::Infinity>() : 0.0});
        if (res <= 1e-13) break;

        double coef_d = 0.0, coef_a = 0.0;
        (pd.objective.tag == CriterionTag::D ? coef_d : coef_a) += 1.0;
        for (std::size_t e = 0; e < m_eq; ++e) {
          const ConstraintData& cd = pd.cons[pd.eq_ids[e]];
          if (cd.moment)
            (cd.spec->criterion.tag == CriterionTag::D ? coef_d : coef_a) +=
                po.y_eq[static_cast<Eigen::Index>(e)];
        }
        for (std::size_t ai = 0; ai < m_act; ++ai) {
          const ConstraintData& cd = pd.cons[pd.in_ids[act[ai]]];
          if (cd.moment)
            (cd.spec->criterion.tag == CriterionTag::D ? coef_d : coef_a) +=
                po.y_in[act[ai]];
        }

        MatrixXd a = MatrixXd::Zero(static_cast<Eigen::Index>(dim),
                                    static_cast<Eigen::Index>(dim));
        VectorXd rhs = VectorXd::Zero(static_cast<Eigen::Index>(dim));
        {
          MatrixXd h = MatrixXd::Zero(static_cast<Eigen::Index>(k),
                                      static_cast<Eigen::Index>(k));
          add_hessian(rd_data, ev, coef_d, coef_a, h);
          a.topLeftCorner(static_cast<Eigen::Index>(k),
                          static_cast<Eigen::Index>(k)) = h;
        }
        const auto scol = static_cast<Eigen::Index>(k);
        for (std::size_t j = 0; j < k; ++j) {
          const auto jj = static_cast<Eigen::Index>(j);
          a(jj, scol) = 1.0;
          a(scol, jj) = 1.0;
        }
        a(scol, scol) = -1e-13;
        for (std::size_t e = 0; e < m_eq; ++e) {
          const auto col = static_cast<Eigen::Index>(k + 1 + e);
          const VectorXd& g = con_grad(rd_data, ev, pd.eq_ids[e]);
          for (std::size_t j = 0; j < k; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            a(jj, col) = g[jj];
            a(col, jj) = g[jj];
          }
          a(col, col) = -1e-13;
        }
        for (std::size_t ai = 0; ai < m_act; ++ai) {
          const auto col = static_cast<Eigen::Index>(k + 1 + m_eq + ai);
          const VectorXd& g = con_grad(rd_data, ev, pd.in_ids[act[ai]]);
          for (std::size_t j = 0; j < k; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            a(jj, col) = g[jj];
            a(col, jj) = g[jj];
          }
          a(col, col) = -1e-13;
        }
        rhs.head(static_cast<Eigen::Index>(k)) = -rdv;
        rhs[scol] = -rs;
        for (std::size_t e = 0; e < m_eq; ++e)
          rhs[static_cast<Eigen::Index>(k + 1 + e)] =
              -re[static_cast<Eigen::Index>(e)];
        for (std::size_t ai = 0; ai < m_act; ++ai)
          rhs[static_cast<Eigen::Index>(k + 1 + m_eq + ai)] =
              -ra[static_cast<Eigen::Index>(ai)];

        Eigen::PartialPivLU<MatrixXd> lu(a);
        VectorXd delta = lu.solve(rhs);
        if (!delta.allFinite())
          throw DomainEscape("polish step failed to solve");
        VectorXd dw = delta.head(static_cast<Eigen::Index>(k));

        double alpha = 1.0;
        const double bstep = boundary_step(po.w, dw, 1.0);
        if (bstep < 1.0) alpha = 0.9 * bstep;
        {
          Eval probe;
          int halvings = 0;
          while (halvings < 60 && !probe.factor(rd_data, po.w + alpha * dw)) {
            alpha *= 0.5;
            ++halvings;
          }
          if (halvings >= 60)
            throw DomainEscape(
                "polish line search left the criterion domain");
        }
        po.w += alpha * dw;
        nu += alpha * delta[scol];
        for (std::size_t e = 0; e < m_eq; ++e)
          po.y_eq[static_cast<Eigen::Index>(e)] +=
              alpha * delta[static_cast<Eigen::Index>(k + 1 + e)];
        for (std::size_t ai = 0; ai < m_act; ++ai)
          po.y_in[act[ai]] +=
              alpha * delta[static_cast<Eigen::Index>(k + 1 + m_eq + ai)];

        // a weight pinned at the boundary wants out of the support
        double wmin = po.w.minCoeff();
        if (wmin < 1e-12) {
          std::vector<std::size_t> next;
          VectorXd wn(static_cast<Eigen::Index>(k));
          Eigen::Index m = 0;
          for (std::size_t j = 0; j < k; ++j) {
            if (po.w[static_cast<Eigen::Index>(j)] >= 1e-12) {
              next.push_back(po.keep[j]);
              wn[m++] = po.w[static_cast<Eigen::Index>(j)];
            }
          }
          if (next.size() == po.keep.size() || next.empty()) break;
          po.keep = std::move(next);
          po.w = wn.head(m) / wn.head(m).sum();
          dropped = true;
          break;
        }
      }
    }

    // active-set corrections: negative multipliers leave, violations enter
    ProblemData rd_data = restrict_data(pd, po.keep);
    Eval ev;
    if (!ev.factor(rd_data, po.w))
      throw DomainEscape("polished design left the criterion domain");
    int worst_neg = -1;
    double most_neg = -1e-9;
    for (std::size_t i = 0; i < pd.in_ids.size(); ++i) {
      if (po.active[i] && po.y_in[i] < most_neg) {
        most_neg = po.y_in[i];
        worst_neg = static_cast<int>(i);
      }
    }
    if (worst_neg >= 0) {
      po.active[static_cast<std::size_t>(worst_neg)] = 0;
      po.y_in[static_cast<std::size_t>(worst_neg)] = 0.0;
      continue;
    }
    int worst_violation = -1;
    double most_violated = tol.feas;
    for (std::size_t i = 0; i < pd.in_ids.size(); ++i) {
      if (po.active[i]) continue;
      const double v = con_value(rd_data, ev, po.w, pd.in_ids[i]);
      if (v > most_violated) {
        most_violated = v;
        worst_violation = static_cast<int>(i);
      }
    }
    if (worst_violation >= 0) {
      po.active[static_cast<std::size_t>(worst_violation)] = 1;
      po.y_in[static_cast<std::size_t>(worst_violation)] = 0.0;
      continue;
    }
    return po;
  }
  throw MaxIterations("active-set polish failed to settle");
}

SaddlePoint assemble(const ProblemData& pd, const PolishOutput& po,
                     const SolverTolerances& tol) {
  std::vector<std::pair<std::size_t, double>> pairs;
  pairs.reserve(po.keep.size());
  for (std::size_t k = 0; k < po.keep.size(); ++k)
    pairs.emplace_back(pd.sub[po.keep[k]],
                       po.w[static_cast<Eigen::Index>(k)]);
  std::sort(pairs.begin(), pairs.end());
  Design xi{pd.space, std::move(pairs)};

  MultiplierVector lambda(pd.cons.size(), 0.0);
  for (std::size_t e = 0; e < pd.eq_ids.size(); ++e)
    lambda[pd.eq_ids[e]] = po.y_eq[static_cast<Eigen::Index>(e)];
  for (std::size_t i = 0; i < pd.in_ids.size(); ++i)
    if (po.active[i]) lambda[pd.in_ids[i]] = std::max(0.0, po.y_in[i]);

  Problem prob{pd.objective, *pd.specs};
  LagrangianEvaluator psi(prob, xi, lambda);
  double min_psi = std::numeric_limits<double>::infinity();
  for (std::size_t idx : pd.sub) min_psi = std::min(min_psi, psi(idx));
  double support_abs = 0.0;
  for (const auto& [idx, w] : xi.weights)
    support_abs = std::max(support_abs, std::abs(psi(idx)));
  const double kkt =
      std::max(std::max(0.0, -min_psi), support_abs);

  double feas = 0.0, comp = 0.0;
  const std::vector<double> vals = constraint_values(prob, xi);
  for (std::size_t i = 0; i < pd.cons.size(); ++i) {
    if (pd.cons[i].spec->relation == Relation::Equal) {
      feas = std::max(feas, std::abs(vals[i]));
    } else {
      feas = std::max(feas, std::max(0.0, vals[i]));
      comp = std::max(comp, std::abs(lambda[i] * vals[i]));
    }
  }
  if (kkt > tol.kkt || feas > tol.feas || comp > tol.comp) {
    std::ostringstream msg;
    msg << "solver finished without meeting the requested tolerances"
        << " (kkt " << kkt << ", feas " << feas << ", comp " << comp << ")";
    throw MaxIterations(msg.str());
  }
  return SaddlePoint{std::move(xi), std::move(lambda), kkt, feas};
}

void check_tolerances(const SolverTolerances& tol) {
  if (tol.weight_floor < 0.0)
    throw SchemaError("weight_floor must be nonnegative");
  if (tol.kkt <= 0.0 || tol.feas <= 0.0 || tol.comp <= 0.0)
    throw SchemaError("solver tolerances must be positive");
  if (tol.max_iterations < 1)
    throw SchemaError("max_iterations must be at least 1");
}

Design uniform_design(const ProblemData& pd) {
  std::vector<std::pair<std::size_t, double>> pairs;
  pairs.reserve(pd.n);
  for (std::size_t idx : pd.sub)
    pairs.emplace_back(idx, 1.0 / static_cast<double>(pd.n));
  std::sort(pairs.begin(), pairs.end());
  return Design{pd.space, std::move(pairs)};
}

Design design_from_weights(const ProblemData& pd, const VectorXd& w) {
  std::vector<std::pair<std::size_t, double>> pairs;
  pairs.reserve(pd.n);
  double total = 0.0;
  for (Eigen::Index j = 0; j < w.size(); ++j) total += std::max(0.0, w[j]);
  for (std::size_t j = 0; j < pd.n; ++j) {
    const double v = std::max(0.0, w[static_cast<Eigen::Index>(j)]);
    if (v > 0.0) pairs.emplace_back(pd.sub[j], v / total);
  }
  std::sort(pairs.begin(), pairs.end());
  return Design{pd.space, std::move(pairs)};
}

// feasibility of the linear equalities alone, via the simplex method
void lp_equality_precheck(const ProblemData& pd) {
  LpProblem lp;
  lp.cost.assign(pd.n, 0.0);
  for (std::size_t e : pd.eq_ids) {
    const ConstraintData& cd = pd.cons[e];
    if (cd.moment) continue;
    std::vector<double> row(pd.n);
    for (std::size_t j = 0; j < pd.n; ++j)
      row[j] = cd.lin[static_cast<Eigen::Index>(j)];
    lp.eq_rows.push_back(std::move(row));
    lp.eq_rhs.push_back(-cd.spec->offset);
  }
  if (!lp.eq_rows.empty()) (void)solve_lp(lp);
}

IpmState init_state(const ProblemData& pd, const VectorXd& w0, Mode mode,
                    const MultiplierVector& lambda) {
  const std::size_t m_eq = pd.eq_ids.size();
  const std::size_t m_in = mode == Mode::kCenter ? 0 : pd.in_ids.size();
  IpmState st;
  st.w = w0;
  st.yE.resize(static_cast<Eigen::Index>(m_eq));
  for (std::size_t e = 0; e < m_eq; ++e)
    st.yE[static_cast<Eigen::Index>(e)] =
        lambda.empty() ? 0.0 : lambda[pd.eq_ids[e]];
  const double mu0 = 1e-2;
  st.z = (mu0 / st.w.array()).matrix();
  st.s.resize(static_cast<Eigen::Index>(m_in));
  st.yI.resize(static_cast<Eigen::Index>(m_in));
  st.nu = 0.0;
  return st;
}

}  // namespace

SaddlePoint solve_saddle(const WeightProblem& p, const SolverTolerances& tol) {
  check_tolerances(tol);
  ProblemData pd = build_data(p);

  if (pd.n == 1) {
    Design xi{pd.space, {{pd.sub[0], 1.0}}};
    Problem prob{pd.objective, *pd.specs};
    const std::vector<double> vals = constraint_values(prob, xi);
    double feas = 0.0;
    for (std::size_t i = 0; i < pd.cons.size(); ++i) {
      if (pd.cons[i].spec->relation == Relation::Equal)
        feas = std::max(feas, std::abs(vals[i]));
      else
        feas = std::max(feas, std::max(0.0, vals[i]));
    }
    if (feas > tol.feas)
      throw Infeasible("single-point subspace violates the constraints");
    return SaddlePoint{std::move(xi),
                       MultiplierVector(pd.cons.size(), 0.0), 0.0, feas};
  }

  VectorXd uniform =
      VectorXd::Constant(static_cast<Eigen::Index>(pd.n),
                         1.0 / static_cast<double>(pd.n));
  VectorXd w0 = uniform;
  MultiplierVector warm_lambda;
  if (p.start) {
    if (p.start->weights.size() != pd.n)
      throw SchemaError("warm-start weights are not aligned with subspace");
    if (!p.start->lambda.empty() &&
        p.start->lambda.size() != pd.cons.size())
      throw SchemaError("warm-start multipliers are not aligned with "
                        "constraints");
    VectorXd ws(static_cast<Eigen::Index>(pd.n));
    for (std::size_t j = 0; j < pd.n; ++j)
      ws[static_cast<Eigen::Index>(j)] = std::max(0.0, p.start->weights[j]);
    const double total = ws.sum();
    if (total > 0.0) w0 = 0.99 * (ws / total) + 0.01 * uniform;
    warm_lambda = p.start->lambda;
  }

  IpmState st = init_state(pd, w0, Mode::kSaddle, warm_lambda);
  {
    Eval ev;
    if (!ev.factor(pd, st.w))
      throw DomainEscape(
          "no design on the subspace has a nonsingular information matrix");
    for (std::size_t i = 0; i < pd.in_ids.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const double f = con_value(pd, ev, st.w, pd.in_ids[i]);
      st.s[ii] = std::max(1e-2, -f);
      const double warm =
          warm_lambda.empty() ? 0.0 : warm_lambda[pd.in_ids[i]];
      st.yI[ii] = std::max(warm, 1e-1);
    }
    st.nu = -st.w.dot(ev.grad(pd, pd.objective.tag));
  }

  IpmOutcome out = run_ipm(pd, Mode::kSaddle, std::move(st), tol, 0.0);
  if (!out.converged) {
    if (out.pinf > 100.0 * tol.feas)
      throw Infeasible(
          "weight problem appears infeasible on the subspace (primal "
          "residual " +
          std::to_string(out.pinf) + ")");
    throw MaxIterations("interior-point iteration limit reached");
  }
  PolishOutput po = polish(pd, out.st, tol);
  return assemble(pd, po, tol);
}

Design phase1_feasible(const WeightProblem& p, double margin) {
  if (margin <= 0.0) throw SchemaError("phase-1 margin must be positive");
  SolverTolerances tol;
  ProblemData pd = build_data(p);
  VectorXd uniform =
      VectorXd::Constant(static_cast<Eigen::Index>(pd.n),
                         1.0 / static_cast<double>(pd.n));

  if (pd.cons.empty()) {
    Eval ev;
    if (!ev.factor(pd, uniform))
      throw Infeasible(
          "every design on the subspace has a singular information matrix");
    return uniform_design(pd);
  }

  lp_equality_precheck(pd);

  if (pd.in_ids.empty()) {
    // equalities only: center the design inside the feasible slice
    IpmState st = init_state(pd, uniform, Mode::kCenter, {});
    IpmOutcome out = run_ipm(pd, Mode::kCenter, std::move(st), tol, margin);
    if (!out.converged)
      throw MaxIterations("phase-1 centering did not converge");
    Eval ev;
    if (!ev.factor(pd, out.st.w))
      throw Infeasible(
          "no strictly feasible design has a nonsingular information matrix");
    return design_from_weights(pd, out.st.w);
  }

  if (any_moment(pd)) {
    Eval ev;
    if (!ev.factor(pd, uniform))
      throw Infeasible(
          "moment constraints are infinite on every design of the subspace");
  }

  IpmState st = init_state(pd, uniform, Mode::kPhase1, {});
  {
    Eval ev;
    const bool need = any_moment(pd);
    if (need) ev.factor(pd, uniform);
    double fmax = -std::numeric_limits<double>::infinity();
    std::vector<double> fvals(pd.in_ids.size());
    for (std::size_t i = 0; i < pd.in_ids.size(); ++i) {
      fvals[i] = con_value(pd, ev, st.w, pd.in_ids[i]);
      fmax = std::max(fmax, fvals[i]);
    }
    st.t = fmax + 1.0;
    for (std::size_t i = 0; i < pd.in_ids.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      st.s[ii] = st.t - fvals[i];
      st.yI[ii] = 1.0 / static_cast<double>(pd.in_ids.size());
    }
  }
  IpmOutcome out = run_ipm(pd, Mode::kPhase1, std::move(st), tol, margin);
  if (!out.converged)
    throw MaxIterations("phase-1 minimax iteration limit reached");

  VectorXd w = out.st.w;
  Eval ev;
  const bool need = any_moment(pd);
  bool have_factor = ev.factor(pd, w);
  if (need && !have_factor)
    throw Infeasible("phase-1 design left the criterion domain");
  auto ineq_max = [&](const VectorXd& ww, Eval& e) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pd.in_ids.size(); ++i)
      mx = std::max(mx, con_value(pd, e, ww, pd.in_ids[i]));
    return mx;
  };
  if (ineq_max(w, ev) > -margin)
    throw Infeasible("no design on the subspace meets the inequality margin");

  // pull toward uniform as far as the margin and the equalities allow
  double beta = 1.0;
  {
    Eval evu;
    if (!evu.factor(pd, uniform) && need) beta = 0.0;
    if (beta > 0.0) {
      for (std::size_t e : pd.eq_ids) {
        const double fu = std::abs(con_value(pd, evu, uniform, e));
        if (fu > 0.0) beta = std::min(beta, 0.4 * tol.feas / fu);
      }
    }
    while (beta > 1e-16) {
      VectorXd wb = (1.0 - beta) * w + beta * uniform;
      Eval evb;
      if (evb.factor(pd, wb) || !need) {
        bool ok = ineq_max(wb, evb) <= -margin;
        if (ok) {
          for (std::size_t e : pd.eq_ids)
            ok = ok && std::abs(con_value(pd, evb, wb, e)) <= tol.feas;
        }
        if (ok) {
          w = wb;
          break;
        }
      }
      beta *= 0.5;
    }
  }
  Eval evf;
  if (!evf.factor(pd, w))
    throw Infeasible(
        "no strictly feasible design has a nonsingular information matrix");
  return design_from_weights(pd, w);
}

}  // namespace coed
