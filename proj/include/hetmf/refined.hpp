#pragma once

#include "hetmf/dynamics.hpp"
#include "hetmf/lyapunov.hpp"
#include "hetmf/meanfield.hpp"
#include "hetmf/model.hpp"
#include "hetmf/ode.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <array>
#include <span>
#include <string>
#include <vector>

namespace hetmf {

// First-order (1/n) corrections: v to the mean, w to the covariance of X - phi.
struct RefinementState {
  StateVector v;
  Matrix w;
};

struct RefinedOptions {
  OdeOptions ode;
  std::size_t max_dim = 1000;  // refuse n|S| above this (w has (n|S|)^2 entries)
  bool store_w = true;
};

struct RefinedTrajectory {
  Trajectory mean_field;
  std::vector<RefinementState> refinement;  // one per grid time
  std::vector<StateVector> refined;         // phi + v
};

namespace detail {

inline Eigen::Index packed_size(Eigen::Index n) { return n * (n + 1) / 2; }

inline void pack_upper(const Matrix& w, Eigen::Ref<Eigen::VectorXd> out) {
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i <= j; ++i) out[k++] = w(i, j);
  }
}

inline void unpack_upper(const Eigen::Ref<const Eigen::VectorXd>& packed, Matrix& w) {
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i <= j; ++i) {
      w(i, j) = packed[k];
      w(j, i) = packed[k];
      ++k;
    }
  }
}

inline void check_budget(const ModelSpec& model, std::size_t max_dim) {
  if (model.dim() > max_dim) {
    throw CapacityError("n|S| = " + std::to_string(model.dim()) + " exceeds the refinement budget of " +
                        std::to_string(max_dim));
  }
}

}  // namespace detail

// Jointly integrates phi, v and w (upper triangle) from v(0) = 0, w(0) = 0.
inline RefinedTrajectory integrate_refined(const ModelSpec& model, const StateVector& x0,
                                           std::span<const double> grid, const RefinedOptions& opt = {}) {
  check_distribution(model, x0);
  detail::check_grid(grid);
  detail::check_budget(model, opt.max_dim);
  const Dynamics dyn(model);
  const Eigen::Index N = dyn.dim();
  const Eigen::Index M = detail::packed_size(N);

  Eigen::VectorXd y0 = Eigen::VectorXd::Zero(2 * N + M);
  y0.head(N) = x0;
  Matrix W = Matrix::Zero(N, N), JW(N, N);
  auto rhs = [&](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
    const StateVector phi = y.head(N);
    detail::unpack_upper(y.tail(M), W);
    const Matrix J = dyn.jacobian(phi);
    dy.resize(y.size());
    dy.head(N) = dyn.drift(phi);
    dy.segment(N, N) = J * y.segment(N, N) + 0.5 * dyn.contract_hessian(phi, W);
    JW.noalias() = J * W;
    Matrix dW = JW + JW.transpose() + dyn.q_matrix(phi);
    detail::pack_upper(dW, dy.tail(M));
  };

  RefinedTrajectory out;
  out.mean_field.times.assign(grid.begin(), grid.end());
  const auto ys = integrate_ode(rhs, y0, grid, opt.ode, &out.mean_field.stats);
  for (const auto& y : ys) {
    StateVector phi = y.head(N);
    RefinementState r;
    r.v = y.segment(N, N);
    if (opt.store_w) {
      r.w = Matrix(N, N);
      detail::unpack_upper(y.tail(M), r.w);
    }
    out.refined.push_back(phi + r.v);
    out.mean_field.clamped_entries += detail::clamp_unit(phi);
    out.mean_field.states.push_back(std::move(phi));
    out.refinement.push_back(std::move(r));
  }
  return out;
}

struct IntegralFormOptions {
  std::size_t panels = 24;     // composite Gauss-Legendre panels on [0, t]
  double fd_step = 2e-3;       // central finite-difference step on the initial condition
  OdeOptions ode{1e-13, 1e-14};
  std::size_t max_dim = 12;
};

// v and w from their integral representation,
//   v(x,t) = 1/2 int_0^t sum_ij Q_ij(phi(x,tau)) d2 phi(y, t - tau)/dy_i dy_j |_{y = phi(x,tau)} dtau,
//   w(x,t) =     int_0^t sum_ij Q_ij(phi(x,tau)) dphi/dy_i dphi/dy_j dtau,
// with flow derivatives taken by finite differences of re-integrated flows.
// Independent of the Jacobian/Hessian code path; meant as a cross-check.
inline RefinementState refined_integral_form(const ModelSpec& model, const StateVector& x0, double t,
                                             const IntegralFormOptions& opt = {}) {
  check_distribution(model, x0);
  if (model.dim() > opt.max_dim) {
    throw CapacityError("integral form is limited to n|S| <= " + std::to_string(opt.max_dim));
  }
  if (!(t >= 0.0)) throw Error("time must be nonnegative");
  const Dynamics dyn(model);
  const Eigen::Index N = dyn.dim();
  RefinementState out{StateVector::Zero(N), Matrix::Zero(N, N)};
  if (t == 0.0) return out;

  auto flow = [&](const StateVector& y, double horizon) -> StateVector {
    if (horizon <= 0.0) return y;
    const double times[] = {horizon};
    return integrate_ode([&](double, const Eigen::VectorXd& u, Eigen::VectorXd& du) { du = dyn.drift(u); }, y,
                         std::span<const double>(times), opt.ode)
        .back();
  };

  // 5-point Gauss-Legendre on [-1, 1].
  static constexpr std::array<double, 5> gl_x = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                                 0.5384693101056831, 0.9061798459386640};
  static constexpr std::array<double, 5> gl_w = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                                 0.4786286704993665, 0.2369268850561891};
  std::vector<double> nodes, weights;
  const double width = t / static_cast<double>(opt.panels);
  for (std::size_t p = 0; p < opt.panels; ++p) {
    const double mid = (static_cast<double>(p) + 0.5) * width;
    for (std::size_t q = 0; q < gl_x.size(); ++q) {
      nodes.push_back(mid + 0.5 * width * gl_x[q]);
      weights.push_back(0.5 * width * gl_w[q]);
    }
  }
  const auto phis = integrate_ode([&](double, const Eigen::VectorXd& u, Eigen::VectorXd& du) { du = dyn.drift(u); },
                                  x0, std::span<const double>(nodes), opt.ode);

  const double h = opt.fd_step;
  for (std::size_t q = 0; q < nodes.size(); ++q) {
    const StateVector& y = phis[q];
    const double remaining = t - nodes[q];
    // Q is symmetric PSD: sum_ij Q_ij D_i D_j g = sum_a lambda_a D^2 g[u_a, u_a].
    Eigen::SelfAdjointEigenSolver<Matrix> eig(dyn.q_matrix(y));
    const StateVector base = flow(y, remaining);
    for (Eigen::Index a = 0; a < N; ++a) {
      const double lambda = eig.eigenvalues()[a];
      if (lambda <= 1e-14) continue;
      const StateVector u = eig.eigenvectors().col(a);
      const StateVector plus = flow(y + h * u, remaining);
      const StateVector minus = flow(y - h * u, remaining);
      const StateVector second = (plus - 2.0 * base + minus) / (h * h);
      const StateVector first = (plus - minus) / (2.0 * h);
      out.v += 0.5 * weights[q] * lambda * second;
      out.w += weights[q] * lambda * first * first.transpose();
    }
  }
  return out;
}

struct SteadyRefinementOptions {
  double fixed_point_tol = 1e-8;
  std::size_t max_dim = 4000;
};

struct SteadyRefinement {
  RefinementState state;
  double spectral_abscissa = 0.0;  // of the Jacobian restricted to the invariant subspace
};

// Limits v*, w* of the refinement ODEs at a fixed point x*:
//   J w* + w* J^T + Q(x*) = 0,   J v* = -1/2 H:w*,
// both solved on the span of rule change vectors, where J is invertible
// unless the fixed point is degenerate.
inline SteadyRefinement refined_steady_state(const ModelSpec& model, const StateVector& x_star,
                                             const SteadyRefinementOptions& opt = {}) {
  check_length(model, x_star);
  detail::check_budget(model, opt.max_dim);
  const Dynamics dyn(model);
  const Eigen::Index N = dyn.dim();
  const double residual = dyn.drift(x_star).lpNorm<Eigen::Infinity>();
  if (residual > opt.fixed_point_tol) {
    throw Error("x_star is not a fixed point (residual " + std::to_string(residual) + ")");
  }
  SteadyRefinement out;
  out.state.v = StateVector::Zero(N);
  out.state.w = Matrix::Zero(N, N);
  const Matrix B = dyn.tangent_basis();
  if (B.cols() == 0) return out;

  const Matrix Jr = B.transpose() * dyn.jacobian(x_star) * B;
  const Matrix Qr = B.transpose() * dyn.q_matrix(x_star) * B;
  const auto lyap = solve_lyapunov(Jr, Qr);
  out.spectral_abscissa = lyap.spectral_abscissa;
  out.state.w = B * lyap.X * B.transpose();
  out.state.w = 0.5 * (out.state.w + out.state.w.transpose());

  Eigen::PartialPivLU<Matrix> lu(Jr);
  const StateVector rhs = -0.5 * (B.transpose() * dyn.contract_hessian(x_star, out.state.w));
  out.state.v = B * lu.solve(rhs);
  if (!out.state.v.allFinite()) throw StabilityError("reduced Jacobian is singular");
  return out;
}

}  // namespace hetmf
