#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls the rule-enumeration code paths it is compared against.

#include "hetmf/hetmf.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace hetmf::testing {

// Uniform-ish random point of the product of simplices.
inline StateVector random_simplex_point(std::size_t n, std::size_t S, Rng& rng) {
  StateVector x(static_cast<Eigen::Index>(n * S));
  for (std::size_t k = 0; k < n; ++k) {
    double total = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      const double e = rng.exponential(1.0);
      x[static_cast<Eigen::Index>(k * S + s)] = e;
      total += e;
    }
    for (std::size_t s = 0; s < S; ++s) x[static_cast<Eigen::Index>(k * S + s)] /= total;
  }
  return x;
}

inline Matrix fd_jacobian(const ModelSpec& model, const StateVector& x, double h = 1e-5) {
  const Eigen::Index N = x.size();
  Matrix J(N, N);
  for (Eigen::Index j = 0; j < N; ++j) {
    StateVector p = x, m = x;
    p[j] += h;
    m[j] -= h;
    J.col(j) = (drift(model, p) - drift(model, m)) / (2.0 * h);
  }
  return J;
}

// H[i](j, u) = d^2 f_i / dx_j dx_u by central differences of drift.
inline std::vector<Matrix> fd_hessian(const ModelSpec& model, const StateVector& x, double h = 1e-4) {
  const Eigen::Index N = x.size();
  std::vector<Matrix> H(static_cast<std::size_t>(N), Matrix::Zero(N, N));
  for (Eigen::Index j = 0; j < N; ++j) {
    for (Eigen::Index u = 0; u < N; ++u) {
      auto at = [&](double a, double b) {
        StateVector y = x;
        y[j] += a;
        y[u] += b;
        return drift(model, y);
      };
      const StateVector d = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
      for (Eigen::Index i = 0; i < N; ++i) H[static_cast<std::size_t>(i)](j, u) = d[i];
    }
  }
  return H;
}

// Random model with unilateral, pairwise and (optionally) three-object rules.
inline ModelSpec random_model(Rng& rng, bool with_triples = true) {
  const std::size_t n = 2 + rng.next() % 3;
  const std::size_t S = 2 + rng.next() % 2;
  std::vector<std::string> labels;
  for (std::size_t s = 0; s < S; ++s) labels.push_back("s" + std::to_string(s));
  std::vector<TransitionRule> rules;
  const std::size_t count = 4 + rng.next() % 8;
  for (std::size_t r = 0; r < count; ++r) {
    std::size_t d = 1 + rng.next() % (with_triples && n >= 3 ? 3 : 2);
    if (d > n) d = n;
    std::vector<std::size_t> objects;
    while (objects.size() < d) {
      const std::size_t k = rng.next() % n;
      if (std::find(objects.begin(), objects.end(), k) == objects.end()) objects.push_back(k);
    }
    TransitionRule rule;
    rule.rate = 0.1 + 2.0 * rng.uniform();
    for (auto k : objects) {
      const std::size_t from = rng.next() % S;
      std::size_t to = rng.next() % S;
      if (rule.participants.empty() && to == from) to = (from + 1) % S;
      rule.participants.push_back({k, from, to});
    }
    rules.push_back(rule);
  }
  return ModelSpec(n, labels, rules);
}

// Random convex combination of admissible configurations (lists exactly full).
inline StateVector random_admissible_mixture(const cache::CacheConfig& cfg, Rng& rng, std::size_t terms = 6) {
  const std::size_t n = cfg.n(), S = cfg.num_lists() + 1;
  StateVector x = StateVector::Zero(static_cast<Eigen::Index>(n * S));
  double total = 0.0;
  for (std::size_t t = 0; t < terms; ++t) {
    std::vector<std::size_t> a;
    for (std::size_t s = 1; s < S; ++s) a.insert(a.end(), cfg.list_sizes[s - 1], s);
    a.resize(n, 0);
    for (std::size_t i = n; i > 1; --i) std::swap(a[i - 1], a[rng.next() % i]);
    const double w = rng.exponential(1.0);
    for (std::size_t k = 0; k < n; ++k) x[static_cast<Eigen::Index>(k * S + a[k])] += w;
    total += w;
  }
  return x / total;
}

// Product-form stationary marginals by enumerating admissible configurations.
inline StateVector brute_force_cache(const cache::CacheConfig& cfg) {
  const std::size_t n = cfg.n(), l = cfg.num_lists(), S = l + 1;
  StateVector pi = StateVector::Zero(static_cast<Eigen::Index>(n * S));
  std::vector<std::size_t> a(n, 0), count(S, 0);
  double total = 0.0;
  std::function<void(std::size_t, double)> rec = [&](std::size_t k, double weight) {
    if (k == n) {
      for (std::size_t s = 1; s < S; ++s) {
        if (count[s] != cfg.list_sizes[s - 1]) return;
      }
      total += weight;
      for (std::size_t j = 0; j < n; ++j) pi[static_cast<Eigen::Index>(j * S + a[j])] += weight;
      return;
    }
    for (std::size_t s = 0; s < S; ++s) {
      if (s > 0 && count[s] == cfg.list_sizes[s - 1]) continue;
      a[k] = s;
      ++count[s];
      rec(k + 1, weight * std::pow(cfg.lambdas[k], static_cast<double>(s)));
      --count[s];
    }
  };
  rec(0, 1.0);
  return pi / total;
}

// RANDOM(m) drift written per (k, s) from the list dynamics. It agrees with the
// rule drift wherever every list holds its nominal mass, sum_k x_(k,s) = m_s.
inline StateVector cache_closed_form_drift(const cache::CacheConfig& cfg, const StateVector& x) {
  const std::size_t n = cfg.n(), l = cfg.num_lists(), S = l + 1;
  auto X = [&](std::size_t k, std::size_t s) { return x[static_cast<Eigen::Index>(k * S + s)]; };
  auto m = [&](std::size_t s) { return static_cast<double>(cfg.list_sizes[s - 1]); };
  StateVector f = StateVector::Zero(x.size());
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t s = 0; s < S; ++s) {
      double v = 0.0;
      if (s >= 1) {
        v += cfg.lambdas[k] * X(k, s - 1);
        for (std::size_t k1 = 0; k1 < n; ++k1) v -= cfg.lambdas[k1] / m(s) * X(k1, s - 1) * X(k, s);
      }
      if (s < l) {
        for (std::size_t k1 = 0; k1 < n; ++k1) v += cfg.lambdas[k1] / m(s + 1) * X(k1, s) * X(k, s + 1);
        v -= cfg.lambdas[k] * X(k, s);
      }
      f[static_cast<Eigen::Index>(k * S + s)] = v;
    }
  }
  return f;
}

// Q for RANDOM(m) from per-object flows. A swap "k up from s, k1 down from s+1"
// moves k by (+1 at s+1, -1 at s) and k1 the opposite way.
inline Matrix cache_closed_form_q(const cache::CacheConfig& cfg, const StateVector& x) {
  const std::size_t n = cfg.n(), l = cfg.num_lists(), S = l + 1;
  auto X = [&](std::size_t k, std::size_t s) { return x[static_cast<Eigen::Index>(k * S + s)]; };
  auto m = [&](std::size_t s) { return static_cast<double>(cfg.list_sizes[s - 1]); };
  // swap(k, k1, s): rate of "k requested in list s, k1 evicted from list s+1".
  auto swap = [&](std::size_t k, std::size_t k1, std::size_t s) {
    return cfg.lambdas[k] / m(s + 1) * X(k, s) * X(k1, s + 1);
  };
  Matrix Q = Matrix::Zero(x.size(), x.size());
  auto at = [&](std::size_t k, std::size_t s, std::size_t k1, std::size_t s1) -> double& {
    return Q(static_cast<Eigen::Index>(k * S + s), static_cast<Eigen::Index>(k1 * S + s1));
  };
  for (std::size_t k = 0; k < n; ++k) {
    // up[s]: flow of object k from s to s+1; down[s]: from s+1 to s.
    std::vector<double> up(S, 0.0), down(S, 0.0);
    for (std::size_t s = 0; s < l; ++s) {
      for (std::size_t k1 = 0; k1 < n; ++k1) {
        if (k1 == k) continue;
        up[s] += swap(k, k1, s);
        down[s] += swap(k1, k, s);
      }
    }
    for (std::size_t s = 0; s < S; ++s) {
      double diag = 0.0;
      if (s < l) diag += up[s] + down[s];
      if (s >= 1) diag += up[s - 1] + down[s - 1];
      at(k, s, k, s) = diag;
      if (s < l) {
        at(k, s, k, s + 1) = -(up[s] + down[s]);
        at(k, s + 1, k, s) = -(up[s] + down[s]);
      }
    }
    for (std::size_t k1 = 0; k1 < n; ++k1) {
      if (k1 == k) continue;
      for (std::size_t s = 0; s < l; ++s) {
        const double flow = swap(k, k1, s) + swap(k1, k, s);
        at(k, s, k1, s) -= flow;
        at(k, s + 1, k1, s + 1) -= flow;
        at(k, s, k1, s + 1) += flow;
        at(k, s + 1, k1, s) += flow;
      }
    }
  }
  return Q;
}

// Two-choice drift in g_s form. With multilinear_self, the k1 = k part of the
// arrival term is replaced by its value on indicator states, lambda/n x_(k,s).
inline StateVector lb_gs_drift(const lb::LBConfig& cfg, const StateVector& x, bool multilinear_self) {
  const std::size_t n = cfg.n(), b = cfg.buffer, S = b + 1;
  const double nn = static_cast<double>(n), lam = cfg.lambda;
  auto X = [&](std::size_t k, std::size_t s) { return x[static_cast<Eigen::Index>(k * S + s)]; };
  std::vector<double> g(S + 1, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t t = s; t < S; ++t) g[s] += X(k, t) / nn;
    }
  }
  // arrival rate factor for object k in state s (s < b)
  auto arrive = [&](std::size_t k, std::size_t s) {
    double rate = lam * (g[s] + g[s + 1]);
    if (multilinear_self) {
      double own = X(k, s);
      for (std::size_t t = s + 1; t < S; ++t) own += 2.0 * X(k, t);
      rate += lam / nn * (1.0 - own);
    }
    return rate;
  };
  StateVector f = StateVector::Zero(x.size());
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t s = 0; s < S; ++s) {
      double v = 0.0;
      if (s < b) v += cfg.mus[k] * X(k, s + 1) - X(k, s) * arrive(k, s);
      if (s >= 1) v -= cfg.mus[k] * X(k, s) - X(k, s - 1) * arrive(k, s - 1);
      f[static_cast<Eigen::Index>(k * S + s)] = v;
    }
  }
  return f;
}

// Heterogeneous SIS-like toy: objects alternate between two types; a susceptible
// object is infected by contact with an infected one, recovers on its own, and
// is infected spontaneously at a small rate.
struct SisRates {
  double beta[2] = {2.0, 3.0};
  double mu[2] = {1.0, 1.5};
  double eps[2] = {0.2, 0.1};
};

// Weaker contact, faster spontaneous infection: small populations already
// behave like large ones.
inline constexpr SisRates kMildSis{{1.0, 1.5}, {1.0, 1.5}, {0.5, 0.3}};

inline ModelSpec sis_toy(std::size_t n, const SisRates& r = {}) {
  const auto& beta = r.beta;
  const auto& mu = r.mu;
  const auto& eps = r.eps;
  std::vector<TransitionRule> rules;
  const double nn = static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t type = k % 2;
    rules.push_back(unilateral(k, 1, 0, mu[type]));
    rules.push_back(unilateral(k, 0, 1, eps[type]));
    for (std::size_t k1 = 0; k1 < n; ++k1) {
      if (k1 != k) rules.push_back(pairwise({k, 0, 1}, {k1, 1, 1}, beta[type] / nn));
    }
  }
  return ModelSpec(n, {"S", "I"}, rules);
}

}  // namespace hetmf::testing
