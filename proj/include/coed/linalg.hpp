#pragma once

#include <Eigen/Core>
#include <cassert>
#include <cstddef>
#include <optional>
#include <vector>

namespace coed {

// Symmetric matrix in packed lower-triangle storage, row-major:
// data = [a00, a10, a11, a20, a21, a22, ...], dim*(dim+1)/2 entries.
// Everything in play (information matrices, noise covariances) is symmetric
// and small, and candidate tables hold millions of them, so only one triangle
// is stored.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(int dim) : dim_(dim), data_(packed_size(dim), 0.0) {}
  SymMatrix(int dim, std::vector<double> packed)
      : dim_(dim), data_(std::move(packed)) {
    assert(data_.size() == packed_size(dim_));
  }

  static std::size_t packed_size(int dim) {
    return static_cast<std::size_t>(dim) * (dim + 1) / 2;
  }
  static SymMatrix identity(int dim);
  static SymMatrix from_dense(const Eigen::MatrixXd& a);

  int dim() const { return dim_; }
  const std::vector<double>& packed() const { return data_; }
  std::vector<double>& packed() { return data_; }

  double operator()(int i, int j) const {
    return i >= j ? data_[idx(i, j)] : data_[idx(j, i)];
  }
  double& at_lower(int i, int j) {
    assert(i >= j);
    return data_[idx(i, j)];
  }

  Eigen::MatrixXd to_dense() const;
  double max_diagonal() const;

 private:
  static std::size_t idx(int i, int j) {
    return static_cast<std::size_t>(i) * (i + 1) / 2 + j;
  }
  int dim_ = 0;
  std::vector<double> data_;
};

// Lower-triangular Cholesky factor, same packed layout. Produced by
// cholesky(); carries the solves and determinant used by the criteria.
class CholeskyFactor {
 public:
  CholeskyFactor(int dim, std::vector<double> packed)
      : dim_(dim), data_(std::move(packed)) {}

  int dim() const { return dim_; }
  const std::vector<double>& packed() const { return data_; }
  Eigen::MatrixXd to_dense() const;

  // log det A = 2 * sum log L_ii
  double logdet() const;

  // in-place solve A x = b via forward/back substitution
  void solve_in_place(Eigen::Ref<Eigen::VectorXd> b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;

  // packed representation of A^-1 (and of A^-2 when requested); used by the
  // candidate scans, which reduce trace terms to packed dot products
  SymMatrix inverse() const;

 private:
  std::size_t idx(int i, int j) const {
    return static_cast<std::size_t>(i) * (i + 1) / 2 + j;
  }
  int dim_ = 0;
  std::vector<double> data_;
};

// Cholesky without pivoting; matrices here are tiny and callers guard
// positive definiteness. Returns nullopt (the singular flag) when any pivot
// falls at or below 1e-13 * (1 + max diagonal of A); callers map that to a
// +infinity criterion value.
std::optional<CholeskyFactor> cholesky(const SymMatrix& a);

// log det(A), +infinity sentinel when the factorization flags singularity.
double logdet(const SymMatrix& a);

// Solve A X = B for PD A. Throws DomainError when A is flagged singular.
Eigen::MatrixXd solve_spd(const SymMatrix& a, const Eigen::MatrixXd& b);

// tr(A^-1 B) through a cached factorization.
double trace_product(const CholeskyFactor& a_factor, const SymMatrix& b);

// tr(P Q) for symmetric P, Q in packed storage: diagonal entries once,
// off-diagonal twice. The hot kernel of the sensitivity scans.
double packed_sym_dot(const std::vector<double>& p, const std::vector<double>& q);

// PSD label check: smallest eigenvalue >= -1e-12 * (1 + max diagonal).
// Validation-path only (space construction, table loading); not a hot kernel.
bool is_psd(const SymMatrix& a);

}  // namespace coed
