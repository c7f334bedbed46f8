#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <span>

#include "coed/errors.hpp"

namespace coed {

struct IntegratorSettings {
  double rtol = 1e-8;
  double atol = 1e-10;
  double max_step = 0.5;    // hours
  double min_step = 1e-10;  // below this an accurate step is hopeless
  bool dense_output = false;  // reserved; waypoints are hit by step clipping
};

namespace detail {

// Dormand-Prince 5(4) tableau (Hairer, Norsett, Wanner, "Solving ODEs I",
// table 5.2). Stage 7 equals the accepted solution, so its slope is reused
// as stage 1 of the next step.
inline constexpr double kC[7] = {0.0,     1.0 / 5, 3.0 / 10, 4.0 / 5,
                                 8.0 / 9, 1.0,     1.0};
inline constexpr double kA2[1] = {1.0 / 5};
inline constexpr double kA3[2] = {3.0 / 40, 9.0 / 40};
inline constexpr double kA4[3] = {44.0 / 45, -56.0 / 15, 32.0 / 9};
inline constexpr double kA5[4] = {19372.0 / 6561, -25360.0 / 2187,
                                  64448.0 / 6561, -212.0 / 729};
inline constexpr double kA6[5] = {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247,
                                  49.0 / 176, -5103.0 / 18656};
inline constexpr double kB[7] = {35.0 / 384,    0.0,        500.0 / 1113,
                                 125.0 / 192,   -2187.0 / 6784,
                                 11.0 / 84,     0.0};
// 5th-order weights minus the embedded 4th-order weights
inline constexpr double kE[7] = {71.0 / 57600,     0.0,
                                 -71.0 / 16695,    71.0 / 1920,
                                 -17253.0 / 339200, 22.0 / 525,
                                 -1.0 / 40};

}  // namespace detail

// Adaptive embedded RK5(4) stepper over any fixed- or dynamic-size Eigen
// vector. Rhs is called as f(t, y, dydt). State is advanced in place; each
// call to advance_to() integrates to exactly t_end (final step clipped).
template <class Vec, class Rhs>
class Rk45 {
 public:
  Rk45(Rhs rhs, Vec y0, double t0, const IntegratorSettings& settings)
      : f_(std::move(rhs)), y_(std::move(y0)), t_(t0), s_(settings) {
    const auto n = y_.size();
    for (auto* k : {&k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &k7_})
      k->resize(n);
    ytmp_.resize(n);
    f_(t_, y_, k1_);
    h_ = s_.max_step;
  }

  double t() const { return t_; }
  const Vec& y() const { return y_; }

  void advance_to(double t_end) {
    while (t_ < t_end) {
      const double remaining = t_end - t_;
      const bool clipped = h_ > remaining;
      const double h = clipped ? remaining : h_;
      if (h < s_.min_step && remaining > s_.min_step)
        throw StepUnderflow("step size " + std::to_string(h) +
                            " below minimum at t = " + std::to_string(t_));
      const double err = attempt(h);
      double factor = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
      factor = std::clamp(factor, 0.2, 5.0);
      if (err <= 1.0) {
        t_ += h;
        if (t_ >= t_end) t_ = t_end;
        y_.swap(ytmp_);
        k1_.swap(k7_);
        // a clipped step says nothing about the natural step size, so only
        // let it grow the estimate
        const double grown = std::min(h * factor, s_.max_step);
        h_ = clipped ? std::max(h_, grown) : grown;
      } else {
        h_ = std::max(h * factor, s_.min_step * 0.5);
      }
    }
  }

 private:
  // one trial step of size h; fills ytmp_ (new state) and k7_ (its slope),
  // returns the scaled error norm
  double attempt(double h) {
    using detail::kA2;
    using detail::kA3;
    using detail::kA4;
    using detail::kA5;
    using detail::kA6;
    using detail::kB;
    using detail::kC;
    using detail::kE;
    ytmp_ = y_ + h * kA2[0] * k1_;
    f_(t_ + kC[1] * h, ytmp_, k2_);
    ytmp_ = y_ + h * (kA3[0] * k1_ + kA3[1] * k2_);
    f_(t_ + kC[2] * h, ytmp_, k3_);
    ytmp_ = y_ + h * (kA4[0] * k1_ + kA4[1] * k2_ + kA4[2] * k3_);
    f_(t_ + kC[3] * h, ytmp_, k4_);
    ytmp_ = y_ + h * (kA5[0] * k1_ + kA5[1] * k2_ + kA5[2] * k3_ +
                      kA5[3] * k4_);
    f_(t_ + kC[4] * h, ytmp_, k5_);
    ytmp_ = y_ + h * (kA6[0] * k1_ + kA6[1] * k2_ + kA6[2] * k3_ +
                      kA6[3] * k4_ + kA6[4] * k5_);
    f_(t_ + kC[5] * h, ytmp_, k6_);
    ytmp_ = y_ + h * (kB[0] * k1_ + kB[2] * k3_ + kB[3] * k4_ + kB[4] * k5_ +
                      kB[5] * k6_);
    f_(t_ + h, ytmp_, k7_);

    double sumsq = 0.0;
    const auto n = y_.size();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e = h * (kE[0] * k1_[i] + kE[2] * k3_[i] + kE[3] * k4_[i] +
                            kE[4] * k5_[i] + kE[5] * k6_[i] + kE[6] * k7_[i]);
      const double sc =
          s_.atol + s_.rtol * std::max(std::abs(y_[i]), std::abs(ytmp_[i]));
      sumsq += (e / sc) * (e / sc);
    }
    return std::sqrt(sumsq / static_cast<double>(n));
  }

  Rhs f_;
  Vec y_;
  double t_;
  IntegratorSettings s_;
  double h_;
  Vec k1_, k2_, k3_, k4_, k5_, k6_, k7_, ytmp_;
};

// Integrate y' = f(t, y) from t0 to t1 and return y(t1).
template <class Vec, class Rhs>
Vec integrate_rhs(Rhs&& f, Vec y0, double t0, double t1,
                  const IntegratorSettings& settings) {
  if (t1 <= t0) return y0;
  Rk45<Vec, std::decay_t<Rhs>> stepper(std::forward<Rhs>(f), std::move(y0),
                                       t0, settings);
  stepper.advance_to(t1);
  return stepper.y();
}

// Integrate once along ascending waypoints, invoking visit(i, y) at each.
template <class Vec, class Rhs, class Visit>
void integrate_path(Rhs&& f, Vec y0, double t0,
                    std::span<const double> waypoints,
                    const IntegratorSettings& settings, Visit&& visit) {
  Rk45<Vec, std::decay_t<Rhs>> stepper(std::forward<Rhs>(f), std::move(y0),
                                       t0, settings);
  for (std::size_t i = 0; i < waypoints.size(); ++i) {
    stepper.advance_to(waypoints[i]);
    visit(i, stepper.y());
  }
}

// Mole fractions plus their parameter sensitivities for the reaction
// kinetics model.
struct AugmentedState {
  Eigen::Vector3d s = Eigen::Vector3d::Zero();
  Eigen::Matrix<double, 3, 6> s_theta = Eigen::Matrix<double, 3, 6>::Zero();
};

using AugVec = Eigen::Matrix<double, 21, 1>;

AugVec pack_augmented(const AugmentedState& st);
AugmentedState unpack_augmented(const AugVec& y);

// Right-hand side of the augmented system at fixed temperature; rate
// constants and their parameter derivatives are precomputed once per
// trajectory.
class KineticsRhs {
 public:
  KineticsRhs(double temperature, const Eigen::Matrix<double, 6, 1>& theta);
  void operator()(double t, const AugVec& y, AugVec& dy) const;

  Eigen::Vector3d state_rhs(const Eigen::Vector3d& s) const;
  Eigen::Matrix3d state_jacobian(const Eigen::Vector3d& s) const;
  Eigen::Matrix<double, 3, 6> theta_jacobian(const Eigen::Vector3d& s) const;

 private:
  double k_[3];
  double dk_dalpha_[3];  // k_i / alpha_i
  double dk_de_[3];      // -k_i / (R T)
};

Eigen::Vector3d rhs_state(const Eigen::Vector3d& s, double temperature,
                          const Eigen::Matrix<double, 6, 1>& theta);
AugmentedState rhs_augmented(const AugmentedState& state, double temperature,
                             const Eigen::Matrix<double, 6, 1>& theta);
AugmentedState integrate(const AugmentedState& x0, double temperature,
                         const Eigen::Matrix<double, 6, 1>& theta,
                         double t_end, const IntegratorSettings& settings);

}  // namespace coed
