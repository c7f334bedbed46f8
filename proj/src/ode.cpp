#include "coed/ode.hpp"

#include "coed/model.hpp"

namespace coed {

namespace {
constexpr double kGasConstant = 1.986;  // cal / (mol K)
}

AugVec pack_augmented(const AugmentedState& st) {
  AugVec y;
  y.segment<3>(0) = st.s;
  for (int i = 0; i < 3; ++i) y.segment<6>(3 + 6 * i) = st.s_theta.row(i);
  return y;
}

AugmentedState unpack_augmented(const AugVec& y) {
  AugmentedState st;
  st.s = y.segment<3>(0);
  for (int i = 0; i < 3; ++i) st.s_theta.row(i) = y.segment<6>(3 + 6 * i);
  return st;
}

KineticsRhs::KineticsRhs(double temperature,
                         const Eigen::Matrix<double, 6, 1>& theta) {
  for (int i = 0; i < 3; ++i) {
    k_[i] = arrhenius_rate(i + 1, temperature, theta);
    dk_dalpha_[i] = k_[i] / theta[i];
    dk_de_[i] = -k_[i] / (kGasConstant * temperature);
  }
}

Eigen::Vector3d KineticsRhs::state_rhs(const Eigen::Vector3d& s) const {
  const double r1 = k_[0] * s[0] * s[0];  // A -> B
  const double r2 = k_[1] * s[1] * s[1];  // B -> C
  const double r3 = k_[2] * s[1];         // B -> A
  return {-r1 + r3, r1 - r2 - r3, r2};
}

Eigen::Matrix3d KineticsRhs::state_jacobian(const Eigen::Vector3d& s) const {
  Eigen::Matrix3d j = Eigen::Matrix3d::Zero();
  j(0, 0) = -2.0 * k_[0] * s[0];
  j(0, 1) = k_[2];
  j(1, 0) = 2.0 * k_[0] * s[0];
  j(1, 1) = -2.0 * k_[1] * s[1] - k_[2];
  j(2, 1) = 2.0 * k_[1] * s[1];
  return j;
}

Eigen::Matrix<double, 3, 6> KineticsRhs::theta_jacobian(
    const Eigen::Vector3d& s) const {
  // dg/dk columns: dg/dk1 = (-s1^2, s1^2, 0), dg/dk2 = (0, -s2^2, s2^2),
  // dg/dk3 = (s2, -s2, 0); chain through dk_i/dalpha_i and dk_i/dE_i
  const double s1sq = s[0] * s[0];
  const double s2sq = s[1] * s[1];
  Eigen::Vector3d dg_dk[3] = {{-s1sq, s1sq, 0.0},
                              {0.0, -s2sq, s2sq},
                              {s[1], -s[1], 0.0}};
  Eigen::Matrix<double, 3, 6> j;
  for (int r = 0; r < 3; ++r) {
    j.col(r) = dg_dk[r] * dk_dalpha_[r];
    j.col(r + 3) = dg_dk[r] * dk_de_[r];
  }
  return j;
}

void KineticsRhs::operator()(double /*t*/, const AugVec& y, AugVec& dy) const {
  const Eigen::Vector3d s = y.segment<3>(0);
  dy.segment<3>(0) = state_rhs(s);
  const Eigen::Matrix3d ds = state_jacobian(s);
  const Eigen::Matrix<double, 3, 6> dtheta = theta_jacobian(s);
  // rows of s_theta live at y[3 + 6i .. 3 + 6i + 5]
  for (int col = 0; col < 6; ++col) {
    const Eigen::Vector3d st_col{y[3 + col], y[9 + col], y[15 + col]};
    const Eigen::Vector3d d = ds * st_col + dtheta.col(col);
    dy[3 + col] = d[0];
    dy[9 + col] = d[1];
    dy[15 + col] = d[2];
  }
}

Eigen::Vector3d rhs_state(const Eigen::Vector3d& s, double temperature,
                          const Eigen::Matrix<double, 6, 1>& theta) {
  return KineticsRhs(temperature, theta).state_rhs(s);
}

AugmentedState rhs_augmented(const AugmentedState& state, double temperature,
                             const Eigen::Matrix<double, 6, 1>& theta) {
  KineticsRhs rhs(temperature, theta);
  AugVec dy;
  rhs(0.0, pack_augmented(state), dy);
  return unpack_augmented(dy);
}

AugmentedState integrate(const AugmentedState& x0, double temperature,
                         const Eigen::Matrix<double, 6, 1>& theta,
                         double t_end, const IntegratorSettings& settings) {
  KineticsRhs rhs(temperature, theta);
  AugVec y = integrate_rhs(rhs, pack_augmented(x0), 0.0, t_end, settings);
  return unpack_augmented(y);
}

}  // namespace coed
