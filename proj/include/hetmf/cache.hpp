#pragma once

#include "hetmf/error.hpp"
#include "hetmf/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace hetmf::cache {

// RANDOM(m): state 0 is "outside the cache", state s >= 1 is list s.
struct CacheConfig {
  std::vector<double> lambdas;          // per-object request rates
  std::vector<std::size_t> list_sizes;  // m_1 .. m_l

  std::size_t n() const noexcept { return lambdas.size(); }
  std::size_t num_lists() const noexcept { return list_sizes.size(); }
  std::size_t capacity() const noexcept { return std::accumulate(list_sizes.begin(), list_sizes.end(), std::size_t{0}); }
};

inline void check_config(const CacheConfig& cfg) {
  if (cfg.lambdas.empty()) throw ModelError("cache needs at least one object");
  if (cfg.list_sizes.empty()) throw ModelError("cache needs at least one list");
  for (double l : cfg.lambdas) {
    if (!(l > 0.0) || !std::isfinite(l)) throw ModelError("request rates must be finite and positive");
  }
  for (auto m : cfg.list_sizes) {
    if (m == 0) throw ModelError("list sizes must be positive");
  }
  if (cfg.capacity() > cfg.n()) {
    throw ModelError("total list size " + std::to_string(cfg.capacity()) + " exceeds n=" + std::to_string(cfg.n()));
  }
}

// lambda_k = scale / k^alpha, k = 1..n.
inline std::vector<double> zipf_popularities(std::size_t n, double alpha, double scale = 1.0) {
  if (n == 0) throw ModelError("zipf needs n >= 1");
  if (!(alpha >= 0.0)) throw ModelError("zipf exponent must be >= 0");
  if (!(scale > 0.0)) throw ModelError("zipf scale must be > 0");
  std::vector<double> l(n);
  for (std::size_t k = 0; k < n; ++k) l[k] = scale / std::pow(static_cast<double>(k + 1), alpha);
  return l;
}

// Zipf rates normalized to sum to one.
inline std::vector<double> zipf_normalized(std::size_t n, double alpha) {
  auto l = zipf_popularities(n, alpha, 1.0);
  const double total = std::accumulate(l.begin(), l.end(), 0.0);
  for (auto& v : l) v /= total;
  return l;
}

// Two lists of size floor(occupancy * n) each (or `lists` lists).
inline CacheConfig zipf_config(std::size_t n, double alpha, double occupancy, std::size_t lists, double scale = 1.0) {
  const auto m = static_cast<std::size_t>(std::floor(occupancy * static_cast<double>(n) + 1e-9));
  return CacheConfig{zipf_popularities(n, alpha, scale), std::vector<std::size_t>(lists, m)};
}

inline std::vector<std::string> state_labels(std::size_t lists) {
  std::vector<std::string> labels;
  for (std::size_t s = 0; s <= lists; ++s) labels.push_back("l" + std::to_string(s));
  return labels;
}

// Request of object k in list s < l swaps it with a uniformly chosen member k1 of
// list s + 1: one pairwise rule per ordered (k, k1), k != k1, at rate lambda_k / m_{s+1}.
inline ModelSpec build_random_m(const CacheConfig& cfg) {
  check_config(cfg);
  const std::size_t n = cfg.n(), l = cfg.num_lists();
  std::vector<TransitionRule> rules;
  rules.reserve(n * (n - 1) * l);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t k1 = 0; k1 < n; ++k1) {
      if (k1 == k) continue;
      for (std::size_t s = 0; s < l; ++s) {
        rules.push_back(pairwise({k, s, s + 1}, {k1, s + 1, s}, cfg.lambdas[k] / static_cast<double>(cfg.list_sizes[s])));
      }
    }
  }
  return ModelSpec(n, state_labels(l), std::move(rules));
}

// Fills list l with the last objects, then list l-1, and so on; the most popular
// objects start outside the cache.
inline ObjectAssignment default_assignment(const CacheConfig& cfg) {
  check_config(cfg);
  ObjectAssignment a(cfg.n(), 0);
  std::size_t k = cfg.n();
  for (std::size_t s = 0; s < cfg.num_lists(); ++s) {
    for (std::size_t i = 0; i < cfg.list_sizes[s]; ++i) a[--k] = s + 1;
  }
  return a;
}

// x_(k,s) = m_s / n: a point of the simplex with the right expected list occupancy.
inline StateVector occupancy_state(const CacheConfig& cfg) {
  check_config(cfg);
  const std::size_t S = cfg.num_lists() + 1;
  const double n = static_cast<double>(cfg.n());
  StateVector x(static_cast<Eigen::Index>(cfg.n() * S));
  for (std::size_t k = 0; k < cfg.n(); ++k) {
    double rest = 1.0;
    for (std::size_t s = 1; s < S; ++s) {
      const double p = static_cast<double>(cfg.list_sizes[s - 1]) / n;
      x[static_cast<Eigen::Index>(k * S + s)] = p;
      rest -= p;
    }
    x[static_cast<Eigen::Index>(k * S)] = rest;
  }
  return x;
}

struct ExactOptions {
  double budget = 2e9;  // max n^2 * prod(m_s + 1) * l
};

// Stationary P[S_k = s] from the product form pi(S) ~ prod_k lambda_k^{S_k} over
// admissible configurations. C(m, j) sums the weights of the first j objects
// (in a given order) filling remaining capacities m exactly; C(0, j) = 1 and
// C(m != 0, 0) = 0. Object k's marginal comes from the order that puts k last.
inline StateVector exact_steady_state(const CacheConfig& cfg, const ExactOptions& opt = {}) {
  check_config(cfg);
  const std::size_t n = cfg.n(), l = cfg.num_lists(), S = l + 1;
  std::vector<std::size_t> radix(l);
  std::size_t cells = 1;
  for (std::size_t s = 0; s < l; ++s) {
    radix[s] = cells;
    cells *= cfg.list_sizes[s] + 1;
  }
  const double cost = static_cast<double>(n) * static_cast<double>(n) * static_cast<double>(cells) * static_cast<double>(l);
  if (cost > opt.budget) throw CapacityError("exact cache recurrence exceeds the compute budget");

  // Rates only matter up to a common factor; keep them O(1).
  const double top = *std::max_element(cfg.lambdas.begin(), cfg.lambdas.end());
  std::vector<std::vector<double>> powers(n, std::vector<double>(S, 1.0));
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t s = 1; s < S; ++s) powers[k][s] = powers[k][s - 1] * cfg.lambdas[k] / top;
  }
  std::size_t full = 0;
  for (std::size_t s = 0; s < l; ++s) full += cfg.list_sizes[s] * radix[s];

  // digit(c, s): remaining capacity of list s + 1 in cell c.
  auto digit = [&](std::size_t c, std::size_t s) { return (c / radix[s]) % (cfg.list_sizes[s] + 1); };

  StateVector pi = StateVector::Zero(static_cast<Eigen::Index>(n * S));
  std::vector<double> prev(cells), cur(cells);
  for (std::size_t target = 0; target < n; ++target) {
    std::fill(prev.begin(), prev.end(), 0.0);
    prev[0] = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == target) continue;
      for (std::size_t c = 0; c < cells; ++c) {
        double v = prev[c];
        for (std::size_t s = 0; s < l; ++s) {
          if (digit(c, s) > 0) v += powers[k][s + 1] * prev[c - radix[s]];
        }
        cur[c] = v;
      }
      std::swap(prev, cur);
    }
    // prev now holds C(., n-1) over all objects except target.
    double total = prev[full];
    for (std::size_t s = 0; s < l; ++s) total += powers[target][s + 1] * prev[full - radix[s]];
    pi[static_cast<Eigen::Index>(target * S)] = prev[full] / total;
    for (std::size_t s = 0; s < l; ++s) {
      pi[static_cast<Eigen::Index>(target * S + s + 1)] = powers[target][s + 1] * prev[full - radix[s]] / total;
    }
  }
  return pi;
}

// (1/n) sum_k sum_{s >= 1} |estimate - exact|: the sum runs over the cache
// lists; state 0 ("outside") is implied by the others and not counted.
inline double cache_error(std::span<const double> estimate, std::span<const double> exact, std::size_t n) {
  if (estimate.size() != exact.size()) throw ModelError("estimate and exact have different shapes");
  if (n == 0 || exact.size() % n != 0) throw ModelError("vector length is not a multiple of n");
  const std::size_t S = exact.size() / n;
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t s = 1; s < S; ++s) sum += std::abs(estimate[k * S + s] - exact[k * S + s]);
  }
  return sum / static_cast<double>(n);
}

inline double cache_error(const StateVector& estimate, const StateVector& exact, std::size_t n) {
  return cache_error(std::span<const double>(estimate.data(), static_cast<std::size_t>(estimate.size())),
                     std::span<const double>(exact.data(), static_cast<std::size_t>(exact.size())), n);
}

// sum_k lambda_k x_(k,s) for every state s.
inline std::vector<double> list_popularity(std::span<const double> lambdas, const StateVector& x) {
  const std::size_t n = lambdas.size();
  if (n == 0 || static_cast<std::size_t>(x.size()) % n != 0) throw ModelError("state vector does not match lambdas");
  const std::size_t S = static_cast<std::size_t>(x.size()) / n;
  std::vector<double> pop(S, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t s = 0; s < S; ++s) pop[s] += lambdas[k] * x[static_cast<Eigen::Index>(k * S + s)];
  }
  return pop;
}

}  // namespace hetmf::cache
