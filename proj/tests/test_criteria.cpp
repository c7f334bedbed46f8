#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "coed/criteria.hpp"
#include "coed/errors.hpp"
#include "coed/linalg.hpp"
#include "coed/model.hpp"
#include "coed/rng.hpp"

using coed::CandidateSpace;
using coed::ConstraintSpec;
using coed::ConstraintType;
using coed::CriterionKind;
using coed::CriterionTag;
using coed::Design;
using coed::GradientForm;
using coed::ModelConfig;
using coed::ModelKind;
using coed::MultiplierVector;
using coed::Problem;
using coed::Relation;
using coed::Rng;
using coed::SymMatrix;

namespace {

const CandidateSpace& exponential_space() {
  static CandidateSpace sp = [] {
    ModelConfig cfg;
    cfg.kind = ModelKind::exponential;
    return coed::build_exponential_space(cfg);
  }();
  return sp;
}

// single-trajectory kinetics space at one (t, a0, b0, c0, T) combination
CandidateSpace one_point_kinetics(double t, double temp) {
  ModelConfig cfg;
  cfg.kind = ModelKind::kinetics;
  cfg.grid["t_m"] = {t, t, 1.0};
  cfg.grid["a0"] = {0.8, 0.8, 0.1};
  cfg.grid["b0"] = {0.1, 0.1, 0.1};
  cfg.grid["c0"] = {0.1, 0.1, 0.1};
  cfg.grid["T"] = {temp, temp, 1.0};
  return coed::build_kinetics_space(cfg);
}

Design delta(const CandidateSpace& sp, std::size_t idx) {
  return Design{&sp, {{idx, 1.0}}};
}

// eta0 = half weight at x = -1, half at x = 0 (indices 0 and 1000)
Design eta0() { return Design{&exponential_space(), {{0, 0.5}, {1000, 0.5}}}; }

Design random_design(Rng& rng, const CandidateSpace& sp, std::size_t support) {
  std::set<std::size_t> picked;
  while (picked.size() < support) picked.insert(rng.next_below(sp.size()));
  Design xi{&sp, {}};
  double total = 0.0;
  for (std::size_t idx : picked) {
    const double w = 0.05 + rng.next_double();
    xi.weights.emplace_back(idx, w);
    total += w;
  }
  for (auto& [idx, w] : xi.weights) w /= total;
  return xi;
}

Design mix(const Design& a, const Design& b, double t) {
  std::map<std::size_t, double> merged;
  for (const auto& [idx, w] : a.weights) merged[idx] += t * w;
  for (const auto& [idx, w] : b.weights) merged[idx] += (1.0 - t) * w;
  Design out{a.space, {}};
  for (const auto& [idx, w] : merged) out.weights.emplace_back(idx, w);
  return out;
}

SymMatrix random_pd(Rng& rng, int dim) {
  Eigen::MatrixXd a(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) a(i, j) = 2.0 * rng.next_double() - 1.0;
  Eigen::MatrixXd m = a.transpose() * a + 0.5 * Eigen::MatrixXd::Identity(dim, dim);
  return SymMatrix::from_dense(m);
}

SymMatrix random_symmetric(Rng& rng, int dim) {
  Eigen::MatrixXd h(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j <= i; ++j) {
      const double v = 2.0 * rng.next_double() - 1.0;
      h(i, j) = v;
      h(j, i) = v;
    }
  return SymMatrix::from_dense(h);
}

ConstraintSpec indicator_eq() {
  ConstraintSpec c;
  c.name = "indicator";
  c.kind = ConstraintType::Integral;
  c.relation = Relation::Equal;
  c.channel = "g1";
  c.continuity = coed::Continuity::Lsc;
  return c;
}

ConstraintSpec mean_x_eq() {
  ConstraintSpec c;
  c.name = "mean_x";
  c.kind = ConstraintType::Integral;
  c.relation = Relation::Equal;
  c.channel = "g2";
  return c;
}

ConstraintSpec a_bound(double bound) {
  ConstraintSpec c;
  c.name = "a_bound";
  c.kind = ConstraintType::Moment;
  c.relation = Relation::LessEqual;
  c.criterion = {CriterionTag::A, -bound};
  return c;
}

constexpr double kLogDetEtaHalf = -7.386294361119891;
constexpr double kTraceInvEtaHalf = 810.8575869854702;

}  // namespace

TEST_CASE("info matrix accumulates weighted point information") {
  const CandidateSpace& sp = exponential_space();

  Design point = delta(sp, 2000);
  SymMatrix m1 = coed::info_matrix(point);
  const double e6 = std::exp(6.0);
  CHECK(m1(0, 0) == doctest::Approx(e6).epsilon(1e-14));
  CHECK(m1(1, 0) == doctest::Approx(e6).epsilon(1e-14));
  CHECK(m1(1, 1) == doctest::Approx(e6).epsilon(1e-14));

  SymMatrix m = coed::info_matrix(eta0());
  const double em6 = std::exp(-6.0);
  CHECK(m(0, 0) == doctest::Approx(0.5 * (em6 + 1.0)).epsilon(1e-15));
  CHECK(m(1, 0) == doctest::Approx(-0.5 * em6).epsilon(1e-15));
  CHECK(m(1, 1) == doctest::Approx(0.5 * em6).epsilon(1e-15));

  Design three{&sp, {{0, 0.2}, {700, 0.5}, {2000, 0.3}}};
  Eigen::MatrixXd hand = Eigen::MatrixXd::Zero(2, 2);
  for (const auto& [idx, w] : three.weights)
    hand += w * sp.info(idx).to_dense();
  SymMatrix got = coed::info_matrix(three);
  CHECK(got(0, 0) == doctest::Approx(hand(0, 0)).epsilon(1e-15));
  CHECK(got(1, 0) == doctest::Approx(hand(1, 0)).epsilon(1e-15));
  CHECK(got(1, 1) == doctest::Approx(hand(1, 1)).epsilon(1e-15));
}

TEST_CASE("criterion values match closed forms") {
  CHECK(coed::criterion_value({CriterionTag::D, 0.0}, SymMatrix::identity(6)) ==
        doctest::Approx(0.0).epsilon(1e-15));
  CHECK(coed::criterion_value({CriterionTag::A, 0.0}, SymMatrix::identity(2)) ==
        doctest::Approx(2.0).epsilon(1e-14));

  SymMatrix m = coed::info_matrix(eta0());
  CHECK(coed::criterion_value({CriterionTag::D, 0.0}, m) ==
        doctest::Approx(-kLogDetEtaHalf).epsilon(1e-13));
  CHECK(coed::criterion_value({CriterionTag::A, 0.0}, m) ==
        doctest::Approx(kTraceInvEtaHalf).epsilon(1e-13));

  // a one-point design for this model has a rank-1 information matrix
  Design rank1 = delta(exponential_space(), 2000);
  SymMatrix singular = coed::info_matrix(rank1);
  CHECK(coed::criterion_value({CriterionTag::D, 0.0}, singular) ==
        std::numeric_limits<double>::infinity());
  CHECK(coed::criterion_value({CriterionTag::A, 0.0}, singular) ==
        std::numeric_limits<double>::infinity());
  Problem p;
  CHECK(coed::objective_value(p, rank1) ==
        std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS((void)coed::criterion_gradient_form({CriterionTag::D, 0.0},
                                                      singular),
                  coed::DomainError);
  CHECK_THROWS_AS((void)coed::sensitivity_objective({CriterionTag::A, 0.0},
                                                    rank1, 17),
                  coed::DomainError);
}

TEST_CASE("criterion offsets shift objective and moment constraint values") {
  Problem p;
  p.objective = {CriterionTag::D, -1.25};
  CHECK(coed::objective_value(p, eta0()) ==
        doctest::Approx(-kLogDetEtaHalf - 1.25).epsilon(1e-13));

  ConstraintSpec c = a_bound(5.0);
  CHECK(coed::constraint_value(c, eta0()) ==
        doctest::Approx(kTraceInvEtaHalf - 5.0).epsilon(1e-13));
}

TEST_CASE("gradient form matches central differences") {
  Rng rng(20240817);
  const double eps = 1e-6;
  for (int dim = 1; dim <= 6; ++dim) {
    SymMatrix m = random_pd(rng, dim);
    for (CriterionTag tag : {CriterionTag::D, CriterionTag::A}) {
      CriterionKind kind{tag, 0.0};
      GradientForm g = coed::criterion_gradient_form(kind, m);
      for (int rep = 0; rep < 20; ++rep) {
        SymMatrix h = random_symmetric(rng, dim);
        SymMatrix plus = m;
        SymMatrix minus = m;
        for (std::size_t k = 0; k < plus.packed().size(); ++k) {
          plus.packed()[k] += eps * h.packed()[k];
          minus.packed()[k] -= eps * h.packed()[k];
        }
        const double fd = (coed::criterion_value(kind, plus) -
                           coed::criterion_value(kind, minus)) /
                          (2.0 * eps);
        CHECK(g.apply(h) == doctest::Approx(fd).epsilon(1e-5));
      }
    }
  }

  // at the identity the derivative of -log det is -trace
  SymMatrix h = random_symmetric(rng, 4);
  GradientForm gid =
      coed::criterion_gradient_form({CriterionTag::D, 0.0}, SymMatrix::identity(4));
  double tr = 0.0;
  for (int i = 0; i < 4; ++i) tr += h(i, i);
  CHECK(gid.apply(h) == doctest::Approx(-tr).epsilon(1e-13));
}

TEST_CASE("objective sensitivity reduces to d minus a trace for the determinant") {
  Rng rng(7);
  const CandidateSpace& sp = exponential_space();
  for (int rep = 0; rep < 10; ++rep) {
    Design xi = random_design(rng, sp, 2 + rep % 5);
    SymMatrix m = coed::info_matrix(xi);
    auto f = coed::cholesky(m);
    REQUIRE(f.has_value());
    for (int probe = 0; probe < 5; ++probe) {
      const std::size_t x = rng.next_below(sp.size());
      const double reduced = 2.0 - coed::trace_product(*f, sp.info(x));
      const double generic =
          coed::sensitivity_objective({CriterionTag::D, 0.0}, xi, x);
      CHECK(generic == doctest::Approx(reduced).epsilon(1e-10));
    }
  }
}

TEST_CASE("sensitivities integrate to zero against the design") {
  Rng rng(99);
  const CandidateSpace& sp = exponential_space();
  Problem p;
  p.objective = {CriterionTag::D, 0.0};
  p.constraints = {a_bound(5.0), indicator_eq(), mean_x_eq()};
  p.constraints[2].scale = -2.0;
  p.constraints[2].offset = 3.0;

  for (int rep = 0; rep < 50; ++rep) {
    Design xi = random_design(rng, sp, 2 + rep % 7);
    MultiplierVector lambda = {rng.next_double(), 2.0 * rng.next_double() - 1.0,
                               2.0 * rng.next_double() - 1.0};
    double sum_obj = 0.0, sum_mom = 0.0, sum_g1 = 0.0, sum_g2 = 0.0,
           sum_lag = 0.0, scale = 1.0;
    for (const auto& [idx, w] : xi.weights) {
      const double s0 =
          coed::sensitivity_objective({CriterionTag::A, 0.0}, xi, idx);
      sum_obj += w * s0;
      sum_mom += w * coed::sensitivity_constraint(p.constraints[0], xi, idx);
      sum_g1 += w * coed::sensitivity_constraint(p.constraints[1], xi, idx);
      sum_g2 += w * coed::sensitivity_constraint(p.constraints[2], xi, idx);
      sum_lag += w * coed::lagrangian_sensitivity(p, xi, lambda, idx);
      scale = std::max(scale, std::abs(s0));
    }
    CHECK(std::abs(sum_obj) <= 1e-10 * scale);
    CHECK(std::abs(sum_mom) <= 1e-10 * scale);
    CHECK(std::abs(sum_g1) <= 1e-12);
    CHECK(std::abs(sum_g2) <= 1e-12);
    CHECK(std::abs(sum_lag) <= 1e-9 * scale);
  }
}

TEST_CASE("one point table space has zero self sensitivity") {
  const std::string path = "/tmp/coed_criteria_identity.csv";
  {
    std::ofstream out(path);
    out << "1,2,0\n0,1,0,1\n";
  }
  CandidateSpace sp = coed::load_tabulated_space(path);
  Design xi = delta(sp, 0);
  CHECK(coed::sensitivity_objective({CriterionTag::D, 0.0}, xi, 0) == 0.0);
  CHECK(coed::sensitivity_objective({CriterionTag::A, 0.0}, xi, 0) == 0.0);
}

TEST_CASE("integral sensitivity plus constraint value recovers the channel") {
  Rng rng(301);
  const CandidateSpace& sp = exponential_space();
  for (int rep = 0; rep < 25; ++rep) {
    Design xi = random_design(rng, sp, 2 + rep % 6);
    ConstraintSpec c = rep % 2 == 0 ? indicator_eq() : mean_x_eq();
    c.scale = 2.0 * rng.next_double() - 1.0;
    c.offset = 2.0 * rng.next_double() - 1.0;
    const int ch = sp.channel(c.channel);
    REQUIRE(ch >= 0);
    const double psi_value = coed::constraint_value(c, xi);
    for (int probe = 0; probe < 4; ++probe) {
      const std::size_t x = rng.next_below(sp.size());
      const double pointwise = c.scale * sp.scalar(x, ch) + c.offset;
      CHECK(coed::sensitivity_constraint(c, xi, x) + psi_value ==
            doctest::Approx(pointwise).epsilon(1e-12));
    }
  }
}

TEST_CASE("indicator channel sensitivity jumps across zero") {
  Design xi = eta0();
  ConstraintSpec c = indicator_eq();
  CHECK(coed::sensitivity_constraint(c, xi, 1000) ==
        doctest::Approx(0.0).epsilon(1e-13));
  CHECK(coed::sensitivity_constraint(c, xi, 1001) ==
        doctest::Approx(1.0).epsilon(1e-13));
  CHECK(coed::sensitivity_constraint(c, xi, 0) ==
        doctest::Approx(0.0).epsilon(1e-13));
}

TEST_CASE("equality pair holds the documented values at the starting design") {
  Problem p;
  p.objective = {CriterionTag::D, 0.0};
  p.constraints = {indicator_eq(), mean_x_eq()};
  std::vector<double> vals = coed::constraint_values(p, eta0());
  REQUIRE(vals.size() == 2);
  CHECK(vals[0] == doctest::Approx(-0.1).epsilon(1e-14));
  CHECK(vals[1] == doctest::Approx(0.0).epsilon(1e-14));

  p.constraints.push_back(a_bound(5.0));
  CHECK(p.equality_ids() == std::vector<std::size_t>{0, 1});
  CHECK(p.inequality_ids() == std::vector<std::size_t>{2});
}

TEST_CASE("kinetics integral channels shift as configured") {
  CandidateSpace at5 = one_point_kinetics(5.0, 300.0);
  REQUIRE(at5.size() == 1);
  ConstraintSpec min_time;
  min_time.kind = ConstraintType::Integral;
  min_time.channel = "time";
  min_time.scale = 1.0;
  min_time.offset = -5.0;
  CHECK(coed::constraint_value(min_time, delta(at5, 0)) == 0.0);

  CandidateSpace at10 = one_point_kinetics(10.0, 300.0);
  REQUIRE(at10.size() == 1);
  ConstraintSpec min_roi;
  min_roi.kind = ConstraintType::Integral;
  min_roi.channel = "roi";
  min_roi.scale = -1.0;
  min_roi.offset = 4.0;
  CHECK(coed::constraint_value(min_roi, delta(at10, 0)) ==
        doctest::Approx(4.0 - 4.2998).epsilon(0.003));
}

TEST_CASE("criterion and moment constraints are convex along mixtures") {
  Rng rng(555);
  const CandidateSpace& sp = exponential_space();
  for (int rep = 0; rep < 100; ++rep) {
    Design a = random_design(rng, sp, 2 + rep % 4);
    Design b = random_design(rng, sp, 2 + (rep + 1) % 4);
    const double t = 0.37;
    Design m = mix(a, b, t);
    for (CriterionTag tag : {CriterionTag::D, CriterionTag::A}) {
      CriterionKind kind{tag, 0.0};
      const double lhs = coed::criterion_value(kind, coed::info_matrix(m));
      const double rhs =
          t * coed::criterion_value(kind, coed::info_matrix(a)) +
          (1.0 - t) * coed::criterion_value(kind, coed::info_matrix(b));
      CHECK(lhs <= rhs + 1e-9 * (1.0 + std::abs(rhs)));
    }
  }
}

TEST_CASE("sensitivity is the directional derivative toward a vertex") {
  Rng rng(808);
  const CandidateSpace& sp = exponential_space();
  Problem p;
  p.objective = {CriterionTag::D, 0.0};
  // the step shrinks with the slope so the curvature term stays negligible
  auto step_for = [](double psi) {
    return std::min(1e-5, 1e-4 / (1.0 + std::abs(psi)));
  };
  for (int rep = 0; rep < 20; ++rep) {
    Design xi = random_design(rng, sp, 3 + rep % 4);
    const std::size_t x = rng.next_below(sp.size());

    const double psi0 =
        coed::sensitivity_objective({CriterionTag::D, 0.0}, xi, x);
    double alpha = step_for(psi0);
    Design stepped = mix(delta(sp, x), xi, alpha);
    const double d0 = coed::objective_value(p, xi);
    const double d1 = coed::objective_value(p, stepped);
    CHECK((d1 - d0) / alpha ==
          doctest::Approx(psi0).epsilon(1e-3).scale(1.0 + std::abs(psi0)));

    ConstraintSpec mom = a_bound(5.0);
    const double psi_m = coed::sensitivity_constraint(mom, xi, x);
    alpha = step_for(psi_m);
    stepped = mix(delta(sp, x), xi, alpha);
    const double c0 = coed::constraint_value(mom, xi);
    const double c1 = coed::constraint_value(mom, stepped);
    CHECK((c1 - c0) / alpha ==
          doctest::Approx(psi_m).epsilon(1e-3).scale(1.0 + std::abs(psi_m)));

    ConstraintSpec lin = mean_x_eq();
    alpha = 1e-5;
    stepped = mix(delta(sp, x), xi, alpha);
    const double l0 = coed::constraint_value(lin, xi);
    const double l1 = coed::constraint_value(lin, stepped);
    const double psi_l = coed::sensitivity_constraint(lin, xi, x);
    CHECK((l1 - l0) / alpha ==
          doctest::Approx(psi_l).epsilon(1e-6).scale(1.0 + std::abs(psi_l)));
  }
}

TEST_CASE("lagrangian evaluator matches the sum of parts") {
  Rng rng(4242);
  const CandidateSpace& sp = exponential_space();
  Problem p;
  p.objective = {CriterionTag::D, 0.0};
  p.constraints = {a_bound(5.0), indicator_eq(), mean_x_eq()};

  for (int rep = 0; rep < 20; ++rep) {
    Design xi = random_design(rng, sp, 2 + rep % 5);
    MultiplierVector lambda = {rng.next_double(), 2.0 * rng.next_double() - 1.0,
                               2.0 * rng.next_double() - 1.0};
    coed::LagrangianEvaluator eval(p, xi, lambda);
    for (int probe = 0; probe < 10; ++probe) {
      const std::size_t x = rng.next_below(sp.size());
      double expected =
          coed::sensitivity_objective(p.objective, xi, x);
      for (std::size_t i = 0; i < p.constraints.size(); ++i)
        expected +=
            lambda[i] * coed::sensitivity_constraint(p.constraints[i], xi, x);
      CHECK(eval(x) ==
            doctest::Approx(expected).epsilon(1e-9).scale(1.0 + std::abs(expected)));
      CHECK(coed::lagrangian_sensitivity(p, xi, lambda, x) ==
            doctest::Approx(eval(x)).epsilon(1e-15));
    }
  }

  // repeated channels fold additively
  Problem twice;
  twice.objective = {CriterionTag::D, 0.0};
  twice.constraints = {mean_x_eq(), mean_x_eq()};
  twice.constraints[1].scale = -2.0;
  Design xi = eta0();
  MultiplierVector lam = {0.7, 0.3};
  const std::size_t probe = 1700;
  double parts = coed::sensitivity_objective(twice.objective, xi, probe);
  parts += 0.7 * coed::sensitivity_constraint(twice.constraints[0], xi, probe);
  parts += 0.3 * coed::sensitivity_constraint(twice.constraints[1], xi, probe);
  CHECK(coed::lagrangian_sensitivity(twice, xi, lam, probe) ==
        doctest::Approx(parts).epsilon(1e-12).scale(1.0 + std::abs(parts)));

  // an empty multiplier vector means the plain objective sensitivity
  CHECK(coed::lagrangian_sensitivity(p, xi, {}, probe) ==
        doctest::Approx(coed::sensitivity_objective(p.objective, xi, probe))
            .epsilon(1e-12));

  CHECK_THROWS_AS((void)coed::lagrangian_sensitivity(p, xi, {1.0}, probe),
                  coed::SchemaError);
}

TEST_CASE("design validation rejects malformed weight lists") {
  const CandidateSpace& sp = exponential_space();
  CHECK_THROWS_AS((Design{nullptr, {{0, 1.0}}}).validate(), coed::SchemaError);
  CHECK_THROWS_AS((Design{&sp, {{2001, 1.0}}}).validate(), coed::SchemaError);
  CHECK_THROWS_AS((Design{&sp, {{5, 0.5}, {3, 0.5}}}).validate(),
                  coed::SchemaError);
  CHECK_THROWS_AS((Design{&sp, {{5, 0.5}, {5, 0.5}}}).validate(),
                  coed::SchemaError);
  CHECK_THROWS_AS((Design{&sp, {{0, 1.5}, {9, -0.5}}}).validate(),
                  coed::SchemaError);
  CHECK_THROWS_AS((Design{&sp, {{0, 0.45}, {9, 0.45}}}).validate(),
                  coed::SchemaError);
  CHECK_NOTHROW((Design{&sp, {{0, 0.5}, {9, 0.5}}}).validate());

  ConstraintSpec missing;
  missing.kind = ConstraintType::Integral;
  missing.channel = "nonexistent";
  CHECK_THROWS_AS((void)coed::constraint_value(missing, eta0()),
                  coed::SchemaError);
  Problem p;
  p.constraints = {missing};
  CHECK_THROWS_AS(coed::LagrangianEvaluator(p, eta0(), {1.0}),
                  coed::SchemaError);
}
