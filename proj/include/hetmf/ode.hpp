#pragma once

#include "hetmf/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace hetmf {

struct OdeOptions {
  double rtol = 1e-8;
  double atol = 1e-10;
  std::size_t max_steps = 1'000'000;
  double initial_step = 0.0;  // 0 picks one automatically
  double max_step = std::numeric_limits<double>::infinity();
};

struct OdeStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rhs_evaluations = 0;
};

namespace dopri {

// Dormand-Prince 5(4) coefficients and Hairer's 4th-order dense output.
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
inline constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                        a76 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                        e6 = 22.0 / 525, e7 = -1.0 / 40;
inline constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                        d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                        d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

}  // namespace dopri

// Integrates y' = rhs(t, y) from t = 0 and returns y at each requested time.
// rhs has signature void(double t, const Eigen::VectorXd& y, Eigen::VectorXd& dydt).
// Times must be nondecreasing and nonnegative. Local error per component is
// held below atol + rtol * |y|.
template <class Rhs>
std::vector<Eigen::VectorXd> integrate_ode(Rhs&& rhs, const Eigen::VectorXd& y0, std::span<const double> times,
                                           const OdeOptions& opt = {}, OdeStats* stats = nullptr) {
  using namespace dopri;
  using Vec = Eigen::VectorXd;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] >= 0.0) || (i > 0 && times[i] < times[i - 1])) {
      throw Error("output times must be nonnegative and nondecreasing");
    }
  }
  if (!(opt.rtol > 0.0) || !(opt.atol > 0.0)) throw Error("tolerances must be positive");

  std::vector<Vec> out;
  out.reserve(times.size());
  std::size_t next = 0;
  while (next < times.size() && times[next] == 0.0) {
    out.push_back(y0);
    ++next;
  }
  OdeStats local;
  if (next == times.size()) {
    if (stats) *stats = local;
    return out;
  }
  const double t_end = times.back();
  const auto n = y0.size();

  Vec y = y0, k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), ynew(n), err(n);
  double t = 0.0;
  rhs(t, y, k1);
  ++local.rhs_evaluations;

  auto scale = [&](const Vec& a, const Vec& b) {
    return (opt.atol + opt.rtol * a.cwiseAbs().cwiseMax(b.cwiseAbs()).array()).matrix();
  };

  double h = opt.initial_step;
  if (h <= 0.0) {
    const Vec sk = scale(y, y);
    const double d0 = (y.array() / sk.array()).abs().maxCoeff();
    const double d1n = (k1.array() / sk.array()).abs().maxCoeff();
    h = (d0 < 1e-5 || d1n < 1e-5) ? 1e-6 : 0.01 * d0 / d1n;
    h = std::min(h, t_end);
    tmp = y + h * k1;
    rhs(t + h, tmp, k2);
    ++local.rhs_evaluations;
    const double d2 = ((k2 - k1).array() / sk.array()).abs().maxCoeff() / h;
    const double dm = std::max(d1n, d2);
    const double h1 = dm <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / dm, 0.2);
    h = std::min({100 * h, h1, t_end});
  }
  h = std::min(h, opt.max_step);

  constexpr double safety = 0.9, fac_min = 0.2, fac_max = 10.0;
  bool last_rejected = false;
  std::size_t steps = 0;
  while (t < t_end) {
    if (++steps > opt.max_steps) throw SolverError("maximum number of steps exceeded", t);
    if (t + h > t_end) h = t_end - t;
    if (h <= 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t))) {
      throw SolverError("step size underflow at t=" + std::to_string(t), t);
    }

    tmp = y + h * a21 * k1;
    rhs(t + c2 * h, tmp, k2);
    tmp = y + h * (a31 * k1 + a32 * k2);
    rhs(t + c3 * h, tmp, k3);
    tmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs(t + c4 * h, tmp, k4);
    tmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(t + c5 * h, tmp, k5);
    tmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs(t + h, tmp, k6);
    ynew = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    rhs(t + h, ynew, k7);
    local.rhs_evaluations += 6;

    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const double en = (err.array() / scale(y, ynew).array()).abs().maxCoeff();
    if (!std::isfinite(en)) {
      h *= 0.1;
      last_rejected = true;
      ++local.rejected;
      continue;
    }
    if (en <= 1.0) {
      const double t_new = t + h;
      // Dense output for every requested time inside (t, t_new].
      if (next < times.size() && times[next] <= t_new) {
        const Vec ydiff = ynew - y;
        const Vec bspl = h * k1 - ydiff;
        const Vec r4 = ydiff - h * k7 - bspl;
        const Vec r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
        while (next < times.size() && times[next] <= t_new) {
          if (times[next] == t_new) {
            out.push_back(ynew);
          } else {
            const double th = (times[next] - t) / h, th1 = 1.0 - th;
            out.push_back(y + th * (ydiff + th1 * (bspl + th * (r4 + th1 * r5))));
          }
          ++next;
        }
      }
      t = t_new;
      y = ynew;
      k1 = k7;
      ++local.accepted;
      double fac = en == 0.0 ? fac_max : safety * std::pow(en, -0.2);
      fac = std::clamp(fac, fac_min, last_rejected ? 1.0 : fac_max);
      h = std::min(h * fac, opt.max_step);
      last_rejected = false;
    } else {
      h *= std::max(fac_min, safety * std::pow(en, -0.2));
      last_rejected = true;
      ++local.rejected;
    }
  }
  while (next < times.size()) {
    out.push_back(y);
    ++next;
  }
  if (stats) *stats = local;
  return out;
}

}  // namespace hetmf
