#include "coed/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>

#include "coed/errors.hpp"
#include "coed/parallel.hpp"

namespace coed {

namespace {
constexpr double kGasConstant = 1.986;
constexpr double kMoleFloor = 1e-12;
}  // namespace

int GridAxis::count() const {
  if (!(step > 0.0) || !std::isfinite(min) || !std::isfinite(max)) return 0;
  if (max < min) return 0;
  const double q = (max - min) / step;
  const double r = std::round(q);
  // grid endpoints usually land on the axis exactly up to float dust
  if (std::abs(q - r) <= 1e-6 * std::max(1.0, std::abs(q)))
    return static_cast<int>(r) + 1;
  return static_cast<int>(std::floor(q)) + 1;
}

int GridAxis::index_of(double v) const {
  const int n = count();
  const long i = std::lround((v - min) / step);
  if (i < 0 || i >= n) return -1;
  if (std::abs(value(static_cast<int>(i)) - v) >
      1e-9 * std::max(1.0, std::abs(v)))
    return -1;
  return static_cast<int>(i);
}

int CandidateSpace::channel(const std::string& name) const {
  for (std::size_t i = 0; i < scalar_names_.size(); ++i)
    if (scalar_names_[i] == name) return static_cast<int>(i);
  return -1;
}

std::uint64_t CandidateSpace::grid_key(const std::int32_t* mi) const {
  std::uint64_t key = 0;
  for (int a = 0; a < grid_axes_; ++a)
    key = key * static_cast<std::uint64_t>(axis_size_[a]) +
          static_cast<std::uint64_t>(mi[a]);
  return key;
}

void CandidateSpace::neighbors(std::size_t i, int radius,
                               std::vector<std::size_t>& out) const {
  out.clear();
  if (radius <= 0 || n_ == 0) return;
  if (grid_axes_ == 0) {
    // loaded tables carry no grid; fall back to candidate-index adjacency
    const std::ptrdiff_t lo =
        std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(i) - radius);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(
        static_cast<std::ptrdiff_t>(n_) - 1,
        static_cast<std::ptrdiff_t>(i) + radius);
    for (std::ptrdiff_t j = lo; j <= hi; ++j)
      if (j != static_cast<std::ptrdiff_t>(i))
        out.push_back(static_cast<std::size_t>(j));
    return;
  }
  const std::int32_t* mi = multi_index_.data() + i * grid_axes_;
  std::vector<std::int32_t> probe(grid_axes_);
  std::vector<int> off(grid_axes_, -radius);
  while (true) {
    bool all_zero = true;
    bool in_range = true;
    for (int a = 0; a < grid_axes_; ++a) {
      if (off[a] != 0) all_zero = false;
      const std::int32_t v = mi[a] + off[a];
      if (v < 0 || v >= axis_size_[a]) {
        in_range = false;
        break;
      }
      probe[a] = v;
    }
    if (!all_zero && in_range) {
      auto it = grid_lookup_.find(grid_key(probe.data()));
      if (it != grid_lookup_.end()) out.push_back(it->second);
    }
    int a = grid_axes_ - 1;
    while (a >= 0 && off[a] == radius) off[a--] = -radius;
    if (a < 0) break;
    ++off[a];
  }
  std::sort(out.begin(), out.end());
}

std::ptrdiff_t CandidateSpace::find_point(const Eigen::VectorXd& coords) const {
  if (coords.size() != dim_x_) return -1;
  for (std::size_t i = 0; i < n_; ++i) {
    bool match = true;
    for (int d = 0; d < dim_x_; ++d) {
      const double c = coords_[i * dim_x_ + d];
      if (std::abs(c - coords[d]) > 1e-9 * std::max(1.0, std::abs(c))) {
        match = false;
        break;
      }
    }
    if (match) return static_cast<std::ptrdiff_t>(i);
  }
  return -1;
}

double arrhenius_rate(int i, double temperature,
                      const Eigen::Matrix<double, 6, 1>& theta) {
  return theta[i - 1] * std::exp(-theta[i + 2] / (kGasConstant * temperature));
}

ModelConfig materialize_model_defaults(const ModelConfig& cfg) {
  ModelConfig out = cfg;
  switch (cfg.kind) {
    case ModelKind::exponential: {
      if (out.theta_bar.size() == 0) {
        out.theta_bar.resize(2);
        out.theta_bar << 1.0, 3.0;
      } else if (out.theta_bar.size() != 2) {
        throw SchemaError("exponential model expects 2 parameters, got " +
                          std::to_string(out.theta_bar.size()));
      }
      if (out.noise.empty()) out.noise = "unit";
      if (out.noise != "unit")
        throw SchemaError("exponential model supports noise rule 'unit', got '" +
                          out.noise + "'");
      std::map<std::string, GridAxis> grid{{"x", {-1.0, 1.0, 0.001}}};
      for (const auto& [name, axis] : cfg.grid) {
        if (grid.find(name) == grid.end())
          throw SchemaError("unknown grid axis '" + name +
                            "' for exponential model");
        grid[name] = axis;
      }
      out.grid = std::move(grid);
      break;
    }
    case ModelKind::kinetics: {
      if (out.theta_bar.size() == 0) {
        out.theta_bar.resize(6);
        out.theta_bar << 0.7, 0.2, 0.1, 1000.0, 1000.0, 1000.0;
      } else if (out.theta_bar.size() != 6) {
        throw SchemaError("kinetics model expects 6 parameters, got " +
                          std::to_string(out.theta_bar.size()));
      }
      if (out.noise.empty()) out.noise = "proportional";
      if (out.noise != "proportional")
        throw SchemaError(
            "kinetics model supports noise rule 'proportional', got '" +
            out.noise + "'");
      std::map<std::string, GridAxis> grid{{"t_m", {1.0, 10.0, 1.0}},
                                           {"a0", {0.5, 1.0, 0.01}},
                                           {"b0", {0.1, 0.7, 0.01}},
                                           {"c0", {0.1, 0.7, 0.01}},
                                           {"T", {300.0, 700.0, 1.0}}};
      for (const auto& [name, axis] : cfg.grid) {
        if (grid.find(name) == grid.end())
          throw SchemaError("unknown grid axis '" + name +
                            "' for kinetics model");
        grid[name] = axis;
      }
      out.grid = std::move(grid);
      break;
    }
    case ModelKind::tabulated: {
      if (out.table_path.empty())
        throw SchemaError("tabulated model requires a table path");
      break;
    }
  }
  return out;
}

CandidateSpace build_exponential_space(const ModelConfig& cfg0) {
  const ModelConfig cfg = materialize_model_defaults(cfg0);
  const GridAxis ax = cfg.grid.at("x");
  const int n = ax.count();
  if (n <= 0) throw GridEmpty("exponential grid produced no points");
  const double t1 = cfg.theta_bar[0];
  const double t2 = cfg.theta_bar[1];

  CandidateSpace sp;
  sp.dim_x_ = 1;
  sp.d_theta_ = 2;
  sp.n_ = static_cast<std::size_t>(n);
  sp.coords_.resize(sp.n_);
  sp.info_.resize(sp.n_ * 3);
  sp.scalar_names_ = {"g1", "g2"};
  sp.scalars_.resize(sp.n_ * 2);
  sp.grid_axes_ = 1;
  sp.axis_size_ = {n};
  sp.multi_index_.resize(sp.n_);
  sp.grid_lookup_.reserve(sp.n_);
  for (int i = 0; i < n; ++i) {
    const double x = ax.value(i);
    // f = t1 exp(t2 x), J = (exp(t2 x), t1 x exp(t2 x)), m = J' J
    const double e2 = std::exp(2.0 * t2 * x);
    sp.coords_[i] = x;
    sp.info_[3 * i + 0] = e2;
    sp.info_[3 * i + 1] = t1 * x * e2;
    sp.info_[3 * i + 2] = t1 * t1 * x * x * e2;
    sp.scalars_[2 * i + 0] = (x > 0.0 ? 1.0 : 0.0) - 0.1;
    sp.scalars_[2 * i + 1] = x + 0.5;
    sp.multi_index_[i] = i;
    sp.grid_lookup_.emplace(static_cast<std::uint64_t>(i),
                            static_cast<std::size_t>(i));
  }
  return sp;
}

namespace {

struct CompositionPair {
  std::int32_t ia, ib;
  double a, b, c;
};

std::vector<CompositionPair> enumerate_pairs(const GridAxis& a_axis,
                                             const GridAxis& b_axis,
                                             const GridAxis& c_axis) {
  std::vector<CompositionPair> pairs;
  const int na = a_axis.count(), nb = b_axis.count();
  for (int ia = 0; ia < na; ++ia) {
    const double a = a_axis.value(ia);
    for (int ib = 0; ib < nb; ++ib) {
      const double b = b_axis.value(ib);
      const double c = 1.0 - a - b;
      if (c_axis.index_of(c) < 0) continue;
      pairs.push_back({ia, ib, a, b, c});
    }
  }
  return pairs;
}

}  // namespace

std::size_t kinetics_grid_count(const ModelConfig& cfg0) {
  const ModelConfig cfg = materialize_model_defaults(cfg0);
  const auto pairs = enumerate_pairs(cfg.grid.at("a0"), cfg.grid.at("b0"),
                                     cfg.grid.at("c0"));
  return static_cast<std::size_t>(cfg.grid.at("t_m").count()) * pairs.size() *
         static_cast<std::size_t>(cfg.grid.at("T").count());
}

CandidateSpace build_kinetics_space(const ModelConfig& cfg0) {
  const ModelConfig cfg = materialize_model_defaults(cfg0);
  const GridAxis t_axis = cfg.grid.at("t_m");
  const GridAxis a_axis = cfg.grid.at("a0");
  const GridAxis b_axis = cfg.grid.at("b0");
  const GridAxis c_axis = cfg.grid.at("c0");
  const GridAxis temp_axis = cfg.grid.at("T");
  const int nt = t_axis.count();
  const int ntemp = temp_axis.count();
  const auto pairs = enumerate_pairs(a_axis, b_axis, c_axis);
  const std::size_t npairs = pairs.size();
  const std::size_t n =
      static_cast<std::size_t>(nt) * npairs * static_cast<std::size_t>(ntemp);
  if (n == 0) throw GridEmpty("kinetics grid produced no points");

  std::vector<double> waypoints(nt);
  for (int it = 0; it < nt; ++it) waypoints[it] = t_axis.value(it);

  Eigen::Matrix<double, 6, 1> theta = cfg.theta_bar;

  CandidateSpace sp;
  sp.dim_x_ = 5;
  sp.d_theta_ = 6;
  sp.n_ = n;
  const std::size_t pk = sp.packed_dim();  // 21
  sp.coords_.resize(n * 5);
  sp.info_.resize(n * pk);
  sp.scalar_names_ = {"time", "roi"};
  sp.scalars_.resize(n * 2);
  sp.grid_axes_ = 4;
  sp.axis_size_ = {nt, a_axis.count(), b_axis.count(), ntemp};
  sp.multi_index_.resize(n * 4);

  std::vector<std::uint8_t> excluded(n, 0);
  const std::size_t ncombo = npairs * static_cast<std::size_t>(ntemp);
  const int threads = effective_threads(cfg.threads);
  std::vector<std::exception_ptr> failures(
      static_cast<std::size_t>(std::max(threads, 1)));

  parallel_chunks(ncombo, threads, [&](std::size_t qb, std::size_t qe, int who) {
    try {
      for (std::size_t q = qb; q < qe; ++q) {
        const std::size_t ipair = q / static_cast<std::size_t>(ntemp);
        const int itemp = static_cast<int>(q % static_cast<std::size_t>(ntemp));
        const CompositionPair& pr = pairs[ipair];
        const double temp = temp_axis.value(itemp);
        KineticsRhs rhs(temp, theta);
        AugVec y0 = AugVec::Zero();
        y0[0] = pr.a;
        y0[1] = pr.b;
        y0[2] = pr.c;
        try {
          integrate_path(
              rhs, y0, 0.0, std::span<const double>(waypoints), cfg.ode,
              [&](std::size_t it, const AugVec& y) {
                const std::size_t idx =
                    (it * npairs + ipair) * static_cast<std::size_t>(ntemp) +
                    static_cast<std::size_t>(itemp);
                double* coords = sp.coords_.data() + idx * 5;
                coords[0] = waypoints[it];
                coords[1] = pr.a;
                coords[2] = pr.b;
                coords[3] = pr.c;
                coords[4] = temp;
                std::int32_t* mi = sp.multi_index_.data() + idx * 4;
                mi[0] = static_cast<std::int32_t>(it);
                mi[1] = pr.ia;
                mi[2] = pr.ib;
                mi[3] = itemp;
                const double s1 = y[0], s2 = y[1], s3 = y[2];
                if (s1 <= kMoleFloor || s2 <= kMoleFloor || s3 <= kMoleFloor) {
                  excluded[idx] = 1;
                  return;
                }
                // m = 100 * s_theta' diag(s)^-1 s_theta; s_theta row r of
                // the packed state sits at y[3 + 6r .. 8 + 6r]
                const double winv[3] = {100.0 / s1, 100.0 / s2, 100.0 / s3};
                double* m = sp.info_.data() + idx * 21;
                std::size_t slot = 0;
                for (int i = 0; i < 6; ++i) {
                  for (int j = 0; j <= i; ++j, ++slot) {
                    double acc = 0.0;
                    for (int r = 0; r < 3; ++r)
                      acc += winv[r] * y[3 + 6 * r + i] * y[3 + 6 * r + j];
                    m[slot] = acc;
                  }
                }
                sp.scalars_[idx * 2 + 0] = waypoints[it];
                sp.scalars_[idx * 2 + 1] = s2 / pr.b;
              });
        } catch (const StepUnderflow& e) {
          throw OdeFailure("kinetics trajectory (a0=" + std::to_string(pr.a) +
                           ", b0=" + std::to_string(pr.b) +
                           ", T=" + std::to_string(temp) + "): " + e.what());
        }
      }
    } catch (...) {
      failures[static_cast<std::size_t>(who)] = std::current_exception();
    }
  });
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);

  std::size_t nexcl = 0;
  for (std::uint8_t e : excluded) nexcl += e;
  if (nexcl > 0) {
    const std::size_t kept = n - nexcl;
    if (kept == 0)
      throw GridEmpty("every kinetics grid point fell below the mole-fraction floor");
    std::vector<double> coords, info, scalars;
    std::vector<std::int32_t> mindex;
    coords.reserve(kept * 5);
    info.reserve(kept * pk);
    scalars.reserve(kept * 2);
    mindex.reserve(kept * 4);
    for (std::size_t i = 0; i < n; ++i) {
      if (excluded[i]) continue;
      coords.insert(coords.end(), sp.coords_.begin() + i * 5,
                    sp.coords_.begin() + (i + 1) * 5);
      info.insert(info.end(), sp.info_.begin() + i * pk,
                  sp.info_.begin() + (i + 1) * pk);
      scalars.insert(scalars.end(), sp.scalars_.begin() + i * 2,
                     sp.scalars_.begin() + (i + 1) * 2);
      mindex.insert(mindex.end(), sp.multi_index_.begin() + i * 4,
                    sp.multi_index_.begin() + (i + 1) * 4);
    }
    sp.coords_ = std::move(coords);
    sp.info_ = std::move(info);
    sp.scalars_ = std::move(scalars);
    sp.multi_index_ = std::move(mindex);
    sp.n_ = kept;
    sp.excluded_ = nexcl;
  }

  sp.grid_lookup_.reserve(sp.n_);
  for (std::size_t i = 0; i < sp.n_; ++i)
    sp.grid_lookup_.emplace(sp.grid_key(sp.multi_index_.data() + i * 4), i);
  return sp;
}

CandidateSpace build_space(const ModelConfig& cfg) {
  switch (cfg.kind) {
    case ModelKind::exponential:
      return build_exponential_space(cfg);
    case ModelKind::kinetics:
      return build_kinetics_space(cfg);
    case ModelKind::tabulated:
      return load_tabulated_space(materialize_model_defaults(cfg).table_path);
  }
  throw SchemaError("unknown model kind");
}

}  // namespace coed
