#include "coed/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>

#include "coed/errors.hpp"

namespace coed {

SymMatrix SymMatrix::identity(int dim) {
  SymMatrix a(dim);
  for (int i = 0; i < dim; ++i) a.at_lower(i, i) = 1.0;
  return a;
}

SymMatrix SymMatrix::from_dense(const Eigen::MatrixXd& a) {
  assert(a.rows() == a.cols());
  SymMatrix s(static_cast<int>(a.rows()));
  for (int i = 0; i < s.dim(); ++i)
    for (int j = 0; j <= i; ++j) s.at_lower(i, j) = a(i, j);
  return s;
}

Eigen::MatrixXd SymMatrix::to_dense() const {
  Eigen::MatrixXd a(dim_, dim_);
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j <= i; ++j) a(i, j) = a(j, i) = data_[idx(i, j)];
  return a;
}

double SymMatrix::max_diagonal() const {
  double m = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < dim_; ++i) m = std::max(m, data_[idx(i, i)]);
  return m;
}

Eigen::MatrixXd CholeskyFactor::to_dense() const {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(dim_, dim_);
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j <= i; ++j) l(i, j) = data_[idx(i, j)];
  return l;
}

double CholeskyFactor::logdet() const {
  double s = 0.0;
  for (int i = 0; i < dim_; ++i) s += std::log(data_[idx(i, i)]);
  return 2.0 * s;
}

void CholeskyFactor::solve_in_place(Eigen::Ref<Eigen::VectorXd> b) const {
  // forward: L y = b
  for (int i = 0; i < dim_; ++i) {
    double s = b[i];
    for (int j = 0; j < i; ++j) s -= data_[idx(i, j)] * b[j];
    b[i] = s / data_[idx(i, i)];
  }
  // backward: L^T x = y
  for (int i = dim_ - 1; i >= 0; --i) {
    double s = b[i];
    for (int j = i + 1; j < dim_; ++j) s -= data_[idx(j, i)] * b[j];
    b[i] = s / data_[idx(i, i)];
  }
}

Eigen::MatrixXd CholeskyFactor::solve(const Eigen::MatrixXd& b) const {
  Eigen::MatrixXd x = b;
  for (Eigen::Index c = 0; c < x.cols(); ++c) solve_in_place(x.col(c));
  return x;
}

SymMatrix CholeskyFactor::inverse() const {
  Eigen::MatrixXd inv = solve(Eigen::MatrixXd::Identity(dim_, dim_));
  return SymMatrix::from_dense(inv);
}

std::optional<CholeskyFactor> cholesky(const SymMatrix& a) {
  const int n = a.dim();
  const double tol = 1e-13 * (1.0 + a.max_diagonal());
  std::vector<double> l(SymMatrix::packed_size(n), 0.0);
  auto idx = [](int i, int j) {
    return static_cast<std::size_t>(i) * (i + 1) / 2 + j;
  };
  for (int j = 0; j < n; ++j) {
    double pivot = a(j, j);
    for (int k = 0; k < j; ++k) pivot -= l[idx(j, k)] * l[idx(j, k)];
    if (pivot <= tol) return std::nullopt;
    const double ljj = std::sqrt(pivot);
    l[idx(j, j)] = ljj;
    for (int i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (int k = 0; k < j; ++k) s -= l[idx(i, k)] * l[idx(j, k)];
      l[idx(i, j)] = s / ljj;
    }
  }
  return CholeskyFactor(n, std::move(l));
}

double logdet(const SymMatrix& a) {
  auto f = cholesky(a);
  if (!f) return std::numeric_limits<double>::infinity();
  return f->logdet();
}

Eigen::MatrixXd solve_spd(const SymMatrix& a, const Eigen::MatrixXd& b) {
  auto f = cholesky(a);
  if (!f) throw DomainError("solve_spd: matrix numerically singular");
  return f->solve(b);
}

double trace_product(const CholeskyFactor& a_factor, const SymMatrix& b) {
  // tr(A^-1 B) = sum_j e_j^T A^-1 B e_j; with n <= ~25 the column solves are
  // cheap and avoid forming A^-1 B
  const int n = a_factor.dim();
  Eigen::MatrixXd bd = b.to_dense();
  double t = 0.0;
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd col = bd.col(j);
    a_factor.solve_in_place(col);
    t += col[j];
  }
  return t;
}

double packed_sym_dot(const std::vector<double>& p, const std::vector<double>& q) {
  assert(p.size() == q.size());
  // diagonal entries sit at slot i*(i+1)/2 + i; walk rows so each entry is
  // classified without division
  double diag = 0.0, off = 0.0;
  std::size_t k = 0;
  for (int i = 0; k < p.size(); ++i) {
    for (int j = 0; j < i; ++j, ++k) off += p[k] * q[k];
    diag += p[k] * q[k];
    ++k;
  }
  return diag + 2.0 * off;
}

bool is_psd(const SymMatrix& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.to_dense(),
                                                    Eigen::EigenvaluesOnly);
  const double tol = -1e-12 * (1.0 + a.max_diagonal());
  return es.eigenvalues().minCoeff() >= tol;
}

}  // namespace coed
