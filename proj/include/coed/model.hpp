#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "coed/linalg.hpp"
#include "coed/ode.hpp"

namespace coed {

struct GridAxis {
  double min = 0.0;
  double max = 0.0;
  double step = 1.0;

  int count() const;             // number of grid values, GridEmpty if none
  double value(int i) const { return min + i * step; }
  // nearest grid index for v, or -1 when v is off-grid beyond 1e-9
  int index_of(double v) const;
};

enum class ModelKind { exponential, kinetics, tabulated };

struct ModelConfig {
  ModelKind kind = ModelKind::exponential;
  Eigen::VectorXd theta_bar;             // empty: default for the kind
  std::map<std::string, GridAxis> grid;  // empty: default for the kind
  std::string noise;                     // empty: default for the kind
  std::string table_path;                // tabulated kind only
  IntegratorSettings ode;                // kinetics kind only
  int threads = 0;                       // 0: hardware concurrency
};

// Ordered finite candidate set with cached one-point information matrices
// and named scalar channels. Storage is flat so multi-million-point spaces
// stay cache-friendly; the object is immutable after construction.
class CandidateSpace {
 public:
  int dim_x() const { return dim_x_; }
  int d_theta() const { return d_theta_; }
  std::size_t packed_dim() const { return SymMatrix::packed_size(d_theta_); }
  std::size_t size() const { return n_; }

  Eigen::Map<const Eigen::VectorXd> point(std::size_t i) const {
    return {coords_.data() + i * dim_x_, dim_x_};
  }
  const double* info_ptr(std::size_t i) const {
    return info_.data() + i * packed_dim();
  }
  SymMatrix info(std::size_t i) const {
    const double* p = info_ptr(i);
    return SymMatrix(d_theta_, std::vector<double>(p, p + packed_dim()));
  }

  const std::vector<std::string>& scalar_names() const { return scalar_names_; }
  // channel position by name, -1 when absent
  int channel(const std::string& name) const;
  double scalar(std::size_t i, int ch) const {
    return scalars_[i * scalar_names_.size() + ch];
  }

  // points skipped by the kinetics mole-fraction floor
  std::size_t excluded_count() const { return excluded_; }

  // grid adjacency for the violator search. Grid-built spaces return the
  // points within `radius` steps per axis (ascending index); loaded tables
  // have no grid and fall back to candidate-index adjacency.
  void neighbors(std::size_t i, int radius, std::vector<std::size_t>& out) const;

  // exact-coordinate lookup, -1 when absent (used to resolve configured
  // start points against the space, 1e-9 relative tolerance per coordinate)
  std::ptrdiff_t find_point(const Eigen::VectorXd& coords) const;

 private:
  int dim_x_ = 0;
  int d_theta_ = 0;
  std::size_t n_ = 0;
  std::vector<double> coords_;
  std::vector<double> info_;
  std::vector<std::string> scalar_names_;
  std::vector<double> scalars_;
  std::size_t excluded_ = 0;

  int grid_axes_ = 0;
  std::vector<std::int32_t> multi_index_;  // n * grid_axes
  std::vector<std::int64_t> axis_size_;
  std::unordered_map<std::uint64_t, std::size_t> grid_lookup_;

  std::uint64_t grid_key(const std::int32_t* mi) const;
  friend CandidateSpace build_exponential_space(const ModelConfig&);
  friend CandidateSpace build_kinetics_space(const ModelConfig&);
  friend CandidateSpace load_tabulated_space(const std::string&);
};

// Fill in per-kind defaults (theta_bar, grid axes, noise rule) and validate
// the result; unknown grid axes and mismatched dimensions are SchemaErrors.
ModelConfig materialize_model_defaults(const ModelConfig& cfg);

// Number of kinetics grid points implied by the descriptors, without
// integrating anything.
std::size_t kinetics_grid_count(const ModelConfig& cfg);

// k_i(T) = alpha_i * exp(-E_i / (R T)), R = 1.986 cal/(mol K); i is 1-based
double arrhenius_rate(int i, double temperature,
                      const Eigen::Matrix<double, 6, 1>& theta);

// x in [-1, 1]; f(x, theta) = theta_1 * exp(theta_2 * x); channels
// g1 = indicator(0, inf)(x) - 0.1 and g2 = x + 0.5
CandidateSpace build_exponential_space(const ModelConfig& cfg);

// x = (t_m, a0, b0, c0, T); integrates the augmented kinetics system per
// trajectory and stores m(x) = 100 * s_theta' * diag(s)^-1 * s_theta;
// channels "time" (raw t_m) and "roi" (s2(t_m) / b0)
CandidateSpace build_kinetics_space(const ModelConfig& cfg);

// candidate-table file; see save_space for the format
CandidateSpace load_tabulated_space(const std::string& path);

CandidateSpace build_space(const ModelConfig& cfg);

// Candidate-table format: UTF-8 CSV; header row
//   dim_x,d_theta,n_scalars,<scalar names...>
// then one row per point: dim_x coordinates, d_theta*(d_theta+1)/2 packed
// lower-triangle entries of m(x) (row-major), n_scalars channel values.
void save_space(const CandidateSpace& space, const std::string& path);

}  // namespace coed
