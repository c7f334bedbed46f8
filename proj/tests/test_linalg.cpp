#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "coed/errors.hpp"
#include "coed/linalg.hpp"
#include "coed/rng.hpp"

using coed::CholeskyFactor;
using coed::Rng;
using coed::SymMatrix;

namespace {

SymMatrix random_pd(Rng& rng, int dim) {
  Eigen::MatrixXd g(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) g(i, j) = 2.0 * rng.next_double() - 1.0;
  Eigen::MatrixXd a =
      g * g.transpose() + 0.1 * Eigen::MatrixXd::Identity(dim, dim);
  return SymMatrix::from_dense(a);
}

SymMatrix random_sym(Rng& rng, int dim) {
  SymMatrix s(dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j <= i; ++j) s.at_lower(i, j) = 2.0 * rng.next_double() - 1.0;
  return s;
}

// two-point information matrix of the exponential-growth model at the
// nominal parameters: weight alpha at x=-1, 1-alpha at x=0
SymMatrix two_point_info(double alpha) {
  const double e6 = std::exp(-6.0);
  SymMatrix m(2);
  m.at_lower(0, 0) = alpha * e6 + (1.0 - alpha);
  m.at_lower(1, 0) = -alpha * e6;
  m.at_lower(1, 1) = alpha * e6;
  return m;
}

}  // namespace

TEST_CASE("packed storage indexes the lower triangle row-major") {
  SymMatrix a(3);
  a.at_lower(0, 0) = 1.0;
  a.at_lower(1, 0) = 2.0;
  a.at_lower(1, 1) = 3.0;
  a.at_lower(2, 0) = 4.0;
  a.at_lower(2, 1) = 5.0;
  a.at_lower(2, 2) = 6.0;
  CHECK(a.packed() == std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(a(0, 2) == 4.0);
  CHECK(a(2, 0) == 4.0);
  CHECK(a(1, 2) == 5.0);
  Eigen::MatrixXd d = a.to_dense();
  CHECK(d(0, 1) == 2.0);
  CHECK(SymMatrix::from_dense(d).packed() == a.packed());
}

TEST_CASE("cholesky of [[4,2],[2,2]] is [[2,0],[1,1]]") {
  SymMatrix a(2);
  a.at_lower(0, 0) = 4.0;
  a.at_lower(1, 0) = 2.0;
  a.at_lower(1, 1) = 2.0;
  auto f = coed::cholesky(a);
  REQUIRE(f.has_value());
  CHECK(f->packed()[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(f->packed()[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(f->packed()[2] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(f->logdet() == doctest::Approx(std::log(4.0)).epsilon(1e-14));

  SymMatrix inv = f->inverse();
  CHECK(inv(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(inv(1, 0) == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(inv(1, 1) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("rank-deficient matrix trips the singular flag") {
  SymMatrix a(2);
  a.at_lower(0, 0) = 1.0;
  a.at_lower(1, 0) = 1.0;
  a.at_lower(1, 1) = 1.0;
  CHECK(!coed::cholesky(a).has_value());
  CHECK(coed::logdet(a) == std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(coed::solve_spd(a, Eigen::MatrixXd::Identity(2, 2)),
                  coed::DomainError);
}

TEST_CASE("two-point exponential design: determinant and trace identities") {
  // closed forms: det = alpha*(1-alpha)*exp(-6),
  // tr(inverse) = 2/(1-alpha) + exp(6)/alpha
  SymMatrix half = two_point_info(0.5);
  CHECK(coed::logdet(half) == doctest::Approx(-7.386294361119891).epsilon(1e-13));
  auto f_half = coed::cholesky(half);
  REQUIRE(f_half.has_value());
  CHECK(coed::trace_product(*f_half, SymMatrix::identity(2)) ==
        doctest::Approx(810.8575869854702).epsilon(1e-12));

  for (double alpha : {0.1, 0.3, 0.9}) {
    SymMatrix m = two_point_info(alpha);
    CHECK(coed::logdet(m) ==
          doctest::Approx(std::log(alpha * (1.0 - alpha)) - 6.0).epsilon(1e-12));
    auto f = coed::cholesky(m);
    REQUIRE(f.has_value());
    CHECK(coed::trace_product(*f, SymMatrix::identity(2)) ==
          doctest::Approx(2.0 / (1.0 - alpha) + std::exp(6.0) / alpha)
              .epsilon(1e-12));
  }
}

TEST_CASE("trace_product matches the explicit inverse") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    int dim = 1 + static_cast<int>(rng.next_below(6));
    SymMatrix a = random_pd(rng, dim);
    SymMatrix b = random_sym(rng, dim);
    auto f = coed::cholesky(a);
    REQUIRE(f.has_value());
    double expect = (a.to_dense().inverse() * b.to_dense()).trace();
    CHECK(coed::trace_product(*f, b) ==
          doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("packed_sym_dot equals the dense trace of a product") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    int dim = 1 + static_cast<int>(rng.next_below(6));
    SymMatrix p = random_sym(rng, dim);
    SymMatrix q = random_sym(rng, dim);
    double expect = (p.to_dense() * q.to_dense()).trace();
    CHECK(coed::packed_sym_dot(p.packed(), q.packed()) ==
          doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("random PD matrices: reconstruction, scaling, solve round-trip") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    int dim = 1 + static_cast<int>(rng.next_below(8));
    SymMatrix a = random_pd(rng, dim);
    Eigen::MatrixXd ad = a.to_dense();
    auto f = coed::cholesky(a);
    REQUIRE(f.has_value());

    Eigen::MatrixXd l = f->to_dense();
    double recon_err = (l * l.transpose() - ad).cwiseAbs().maxCoeff();
    CHECK(recon_err <= 1e-11 * (1.0 + ad.cwiseAbs().maxCoeff()));

    const double c = 3.7;
    SymMatrix ca = SymMatrix::from_dense(c * ad);
    double ld = coed::logdet(a);
    CHECK(coed::logdet(ca) ==
          doctest::Approx(dim * std::log(c) + ld).epsilon(1e-10));

    Eigen::MatrixXd b(dim, 3);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < 3; ++j) b(i, j) = 2.0 * rng.next_double() - 1.0;
    Eigen::MatrixXd x = coed::solve_spd(a, b);
    double solve_err = (ad * x - b).cwiseAbs().maxCoeff();
    CHECK(solve_err <= 1e-10 * (1.0 + b.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("is_psd accepts the PSD boundary and rejects indefinite input") {
  SymMatrix psd(2);
  psd.at_lower(0, 0) = 1.0;
  psd.at_lower(1, 0) = 1.0;
  psd.at_lower(1, 1) = 1.0;
  CHECK(coed::is_psd(psd));
  CHECK(coed::is_psd(SymMatrix(3)));
  CHECK(coed::is_psd(SymMatrix::identity(4)));

  SymMatrix indef(2);
  indef.at_lower(0, 0) = 1.0;
  indef.at_lower(1, 0) = 2.0;
  indef.at_lower(1, 1) = 1.0;
  CHECK(!coed::is_psd(indef));
}

TEST_CASE("dimension one still works") {
  SymMatrix a(1);
  a.at_lower(0, 0) = 9.0;
  auto f = coed::cholesky(a);
  REQUIRE(f.has_value());
  CHECK(f->packed()[0] == doctest::Approx(3.0));
  CHECK(coed::logdet(a) == doctest::Approx(2.0 * std::log(3.0)));
  Eigen::VectorXd b(1);
  b << 18.0;
  f->solve_in_place(b);
  CHECK(b[0] == doctest::Approx(2.0));
}
