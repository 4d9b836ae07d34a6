#pragma once

#include "hetmf/model.hpp"

#include <Eigen/Eigenvalues>

#include <cstdint>
#include <vector>

namespace hetmf {

// Second derivatives of the drift, kept as a list of (i, j, u, value) terms.
// Repeated (i, j, u) triples add up. Both (j, u) and (u, j) orders are stored.
struct HessianTensor {
  struct Entry {
    Eigen::Index i, j, u;
    double value;
  };

  Eigen::Index dim = 0;
  std::vector<Entry> entries;

  double at(Eigen::Index i, Eigen::Index j, Eigen::Index u) const {
    double sum = 0.0;
    for (const auto& e : entries) {
      if (e.i == i && e.j == j && e.u == u) sum += e.value;
    }
    return sum;
  }

  // slices[i](j, u) = d^2 f_i / dx_j dx_u
  std::vector<Matrix> to_dense() const {
    std::vector<Matrix> slices(static_cast<std::size_t>(dim), Matrix::Zero(dim, dim));
    for (const auto& e : entries) slices[static_cast<std::size_t>(e.i)](e.j, e.u) += e.value;
    return slices;
  }

  // (H:w)_i = sum_{j,u} H_{i,j,u} w_{j,u}
  StateVector contract(const Matrix& w) const {
    StateVector out = StateVector::Zero(dim);
    for (const auto& e : entries) out[e.i] += e.value * w(e.j, e.u);
    return out;
  }
};

// A ModelSpec compiled into monomials: each rule contributes
// rate * prod x[factor] times a constant change vector.
class Dynamics {
 public:
  explicit Dynamics(const ModelSpec& model) : dim_(static_cast<Eigen::Index>(model.dim())) {
    factor_begin_.push_back(0);
    delta_begin_.push_back(0);
    for (const auto& rule : model.rules()) {
      if (auto err = check_rule(model, rule)) throw ModelError(*err);
      if (rule.rate == 0.0) continue;
      rates_.push_back(rule.rate);
      for (const auto& p : rule.participants) {
        factors_.push_back(static_cast<Eigen::Index>(model.index(p.object, p.from)));
        if (p.from != p.to) {
          delta_idx_.push_back(static_cast<Eigen::Index>(model.index(p.object, p.from)));
          delta_val_.push_back(-1.0);
          delta_idx_.push_back(static_cast<Eigen::Index>(model.index(p.object, p.to)));
          delta_val_.push_back(1.0);
        }
      }
      factor_begin_.push_back(factors_.size());
      delta_begin_.push_back(delta_idx_.size());
    }
  }

  Eigen::Index dim() const noexcept { return dim_; }
  std::size_t num_terms() const noexcept { return rates_.size(); }

  StateVector drift(const StateVector& x) const {
    check(x);
    StateVector f = StateVector::Zero(dim_);
    for (std::size_t r = 0; r < rates_.size(); ++r) {
      double m = rates_[r];
      for (auto i = factor_begin_[r]; i < factor_begin_[r + 1]; ++i) m *= x[factors_[i]];
      if (m == 0.0) continue;
      for (auto i = delta_begin_[r]; i < delta_begin_[r + 1]; ++i) f[delta_idx_[i]] += m * delta_val_[i];
    }
    return f;
  }

  Matrix jacobian(const StateVector& x) const {
    check(x);
    Matrix J = Matrix::Zero(dim_, dim_);
    for (std::size_t r = 0; r < rates_.size(); ++r) {
      const auto fb = factor_begin_[r], fe = factor_begin_[r + 1];
      for (auto p = fb; p < fe; ++p) {
        double g = rates_[r];
        for (auto q = fb; q < fe; ++q) {
          if (q != p) g *= x[factors_[q]];
        }
        if (g == 0.0) continue;
        for (auto i = delta_begin_[r]; i < delta_begin_[r + 1]; ++i) J(delta_idx_[i], factors_[p]) += g * delta_val_[i];
      }
    }
    return J;
  }

  HessianTensor hessian(const StateVector& x) const {
    check(x);
    HessianTensor H;
    H.dim = dim_;
    for (std::size_t r = 0; r < rates_.size(); ++r) {
      const auto fb = factor_begin_[r], fe = factor_begin_[r + 1];
      for (auto p = fb; p < fe; ++p) {
        for (auto q = fb; q < fe; ++q) {
          if (q == p) continue;
          double h = rates_[r];
          for (auto o = fb; o < fe; ++o) {
            if (o != p && o != q) h *= x[factors_[o]];
          }
          if (h == 0.0) continue;
          for (auto i = delta_begin_[r]; i < delta_begin_[r + 1]; ++i) {
            H.entries.push_back({delta_idx_[i], factors_[p], factors_[q], h * delta_val_[i]});
          }
        }
      }
    }
    return H;
  }

  // H(x):w evaluated rule by rule; w must be symmetric.
  StateVector contract_hessian(const StateVector& x, const Matrix& w) const {
    check(x);
    StateVector out = StateVector::Zero(dim_);
    for (std::size_t r = 0; r < rates_.size(); ++r) {
      const auto fb = factor_begin_[r], fe = factor_begin_[r + 1];
      if (fe - fb < 2) continue;
      double s = 0.0;
      for (auto p = fb; p < fe; ++p) {
        for (auto q = p + 1; q < fe; ++q) {
          double h = 1.0;
          for (auto o = fb; o < fe; ++o) {
            if (o != p && o != q) h *= x[factors_[o]];
          }
          s += 2.0 * h * w(factors_[p], factors_[q]);
        }
      }
      s *= rates_[r];
      if (s == 0.0) continue;
      for (auto i = delta_begin_[r]; i < delta_begin_[r + 1]; ++i) out[delta_idx_[i]] += s * delta_val_[i];
    }
    return out;
  }

  // Q(x) = sum_rules rate(x) * delta delta^T
  Matrix q_matrix(const StateVector& x) const {
    check(x);
    Matrix Q = Matrix::Zero(dim_, dim_);
    for (std::size_t r = 0; r < rates_.size(); ++r) {
      double m = rates_[r];
      for (auto i = factor_begin_[r]; i < factor_begin_[r + 1]; ++i) m *= x[factors_[i]];
      if (m == 0.0) continue;
      const auto db = delta_begin_[r], de = delta_begin_[r + 1];
      for (auto i = db; i < de; ++i) {
        for (auto j = db; j < de; ++j) Q(delta_idx_[i], delta_idx_[j]) += m * delta_val_[i] * delta_val_[j];
      }
    }
    return Q;
  }

  // Orthonormal basis of span{delta_r}: the subspace that x(t) - x(0), f, v and
  // the columns of w never leave. Its complement holds every linear conservation law.
  Matrix tangent_basis() const {
    Matrix gram = Matrix::Zero(dim_, dim_);
    for (std::size_t r = 0; r < rates_.size(); ++r) {
      const auto db = delta_begin_[r], de = delta_begin_[r + 1];
      for (auto i = db; i < de; ++i) {
        for (auto j = db; j < de; ++j) gram(delta_idx_[i], delta_idx_[j]) += delta_val_[i] * delta_val_[j];
      }
    }
    if (dim_ == 0 || gram.isZero(0.0)) return Matrix::Zero(dim_, 0);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    const auto& ev = eig.eigenvalues();
    const double cutoff = 1e-9 * ev.maxCoeff();
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) rank += ev[i] > cutoff ? 1 : 0;
    return eig.eigenvectors().rightCols(rank);
  }

 private:
  void check(const StateVector& x) const {
    if (x.size() != dim_) {
      throw ModelError("state vector has length " + std::to_string(x.size()) + ", expected " + std::to_string(dim_));
    }
  }

  Eigen::Index dim_;
  std::vector<double> rates_;
  std::vector<std::size_t> factor_begin_;
  std::vector<Eigen::Index> factors_;
  std::vector<std::size_t> delta_begin_;
  std::vector<Eigen::Index> delta_idx_;
  std::vector<double> delta_val_;
};

inline StateVector drift(const ModelSpec& model, const StateVector& x) { return Dynamics(model).drift(x); }
inline Matrix drift_jacobian(const ModelSpec& model, const StateVector& x) { return Dynamics(model).jacobian(x); }
inline HessianTensor drift_hessian(const ModelSpec& model, const StateVector& x) { return Dynamics(model).hessian(x); }
inline Matrix q_matrix(const ModelSpec& model, const StateVector& x) { return Dynamics(model).q_matrix(x); }

}  // namespace hetmf
