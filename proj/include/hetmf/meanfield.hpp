#pragma once

#include "hetmf/dynamics.hpp"
#include "hetmf/model.hpp"
#include "hetmf/ode.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace hetmf {

struct Trajectory {
  std::vector<double> times;
  std::vector<StateVector> states;
  OdeStats stats;
  std::size_t clamped_entries = 0;  // entries pulled back into [0,1] on output
};

namespace detail {

inline void check_grid(std::span<const double> grid) {
  if (grid.empty()) throw Error("time grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0) || !std::isfinite(grid[i])) throw Error("time grid entries must be finite and >= 0");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw Error("time grid must be strictly increasing");
  }
}

inline std::size_t clamp_unit(StateVector& x) {
  std::size_t clamped = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] < 0.0) {
      x[i] = 0.0;
      ++clamped;
    } else if (x[i] > 1.0) {
      x[i] = 1.0;
      ++clamped;
    }
  }
  return clamped;
}

}  // namespace detail

// Mean-field trajectory phi(x0, t) at every grid time.
inline Trajectory integrate(const ModelSpec& model, const StateVector& x0, std::span<const double> grid,
                            const OdeOptions& opt = {}) {
  check_distribution(model, x0);
  detail::check_grid(grid);
  const Dynamics dyn(model);
  Trajectory traj;
  traj.times.assign(grid.begin(), grid.end());
  traj.states = integrate_ode([&](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) { dy = dyn.drift(y); }, x0,
                              grid, opt, &traj.stats);
  for (auto& x : traj.states) traj.clamped_entries += detail::clamp_unit(x);
  return traj;
}

struct FixedPointOptions {
  double tol = 1e-10;
  std::size_t max_newton_iterations = 100;
  double fallback_horizon = 100.0;      // first long-run integration horizon
  double fallback_max_horizon = 1e5;    // horizon doubles up to this
  std::vector<StateVector> restarts;    // extra starting points; disagreement is reported
};

struct FixedPointResult {
  StateVector x;
  double residual = 0.0;  // ||f(x)||_inf
  std::size_t newton_iterations = 0;
  bool used_integration = false;
  bool multiple_equilibria_suspected = false;
  std::string note;
};

namespace detail {

// Damped Newton on z with x = base + B z, residual B^T f(x).
inline bool newton_reduced(const Dynamics& dyn, const Matrix& B, StateVector& x, const FixedPointOptions& opt,
                           std::size_t& iterations) {
  const double box = 1e-7;
  StateVector f = dyn.drift(x);
  double res = f.lpNorm<Eigen::Infinity>();
  for (std::size_t it = 0; it < opt.max_newton_iterations; ++it) {
    iterations = it;
    if (res <= opt.tol) return true;
    const Matrix Jr = B.transpose() * dyn.jacobian(x) * B;
    Eigen::FullPivLU<Matrix> lu(Jr);
    if (!lu.isInvertible()) return false;
    const StateVector step = B * lu.solve(-(B.transpose() * f));
    double lambda = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 40; ++ls, lambda *= 0.5) {
      StateVector trial = x + lambda * step;
      if (trial.minCoeff() < -box || trial.maxCoeff() > 1.0 + box) continue;
      const StateVector ft = dyn.drift(trial);
      const double rt = ft.lpNorm<Eigen::Infinity>();
      if (rt < res || rt <= opt.tol) {
        x = std::move(trial);
        f = ft;
        res = rt;
        moved = true;
        break;
      }
    }
    if (!moved) return false;
  }
  iterations = opt.max_newton_iterations;
  return res <= opt.tol;
}

inline FixedPointResult solve_fixed_point(const Dynamics& dyn, const Matrix& B, const StateVector& start,
                                          const FixedPointOptions& opt) {
  FixedPointResult result;
  result.x = start;
  if (B.cols() == 0) {
    result.residual = dyn.drift(start).lpNorm<Eigen::Infinity>();
    return result;
  }
  if (newton_reduced(dyn, B, result.x, opt, result.newton_iterations)) {
    result.residual = dyn.drift(result.x).lpNorm<Eigen::Infinity>();
    return result;
  }
  // Long-run integration towards an attracting equilibrium, then Newton polish.
  result.used_integration = true;
  StateVector y = start;
  OdeOptions ode;
  ode.rtol = 1e-10;
  ode.atol = 1e-12;
  for (double horizon = opt.fallback_horizon; horizon <= opt.fallback_max_horizon; horizon *= 2.0) {
    const double times[] = {horizon};
    y = integrate_ode([&](double, const Eigen::VectorXd& v, Eigen::VectorXd& dv) { dv = dyn.drift(v); }, y,
                      std::span<const double>(times), ode)
            .back();
    StateVector polished = y;
    std::size_t its = 0;
    if (newton_reduced(dyn, B, polished, opt, its)) {
      result.x = polished;
      result.newton_iterations += its;
      result.residual = dyn.drift(result.x).lpNorm<Eigen::Infinity>();
      return result;
    }
  }
  result.x = y;
  result.residual = dyn.drift(y).lpNorm<Eigen::Infinity>();
  throw ConvergenceError("fixed point not found; residual " + std::to_string(result.residual), result.residual);
}

}  // namespace detail

// Zero of the drift in the conserved class of x_init (the affine set x_init +
// span of rule change vectors). Damped Newton, with long-run integration as fallback.
inline FixedPointResult fixed_point(const ModelSpec& model, const StateVector& x_init,
                                    const FixedPointOptions& opt = {}) {
  check_distribution(model, x_init);
  const Dynamics dyn(model);
  const Matrix B = dyn.tangent_basis();
  FixedPointResult result = detail::solve_fixed_point(dyn, B, x_init, opt);
  for (const auto& start : opt.restarts) {
    check_distribution(model, start);
    try {
      const auto other = detail::solve_fixed_point(dyn, B, start, opt);
      const double gap = (other.x - result.x).lpNorm<Eigen::Infinity>();
      if (gap > std::max(opt.tol, 1e-8)) {
        result.multiple_equilibria_suspected = true;
        result.note = "restart converged to a different point (max gap " + std::to_string(gap) + ")";
      }
    } catch (const ConvergenceError&) {
      result.note = "a restart failed to converge";
    }
  }
  return result;
}

inline FixedPointResult fixed_point(const ModelSpec& model, const FixedPointOptions& opt = {}) {
  return fixed_point(model, uniform_state(model), opt);
}

}  // namespace hetmf
