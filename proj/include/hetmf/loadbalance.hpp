#pragma once

#include "hetmf/error.hpp"
#include "hetmf/model.hpp"
#include "hetmf/rng.hpp"

#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace hetmf::lb {

inline constexpr std::size_t kDefaultBuffer = 12;

// Power-of-two-choices with per-server service rates; state s = jobs at the server.
struct LBConfig {
  std::vector<double> mus;  // per-server service rates
  double lambda = 1.0;      // arrival rate per server
  std::size_t buffer = kDefaultBuffer;

  std::size_t n() const noexcept { return mus.size(); }
};

inline void check_config(const LBConfig& cfg) {
  if (cfg.mus.empty()) throw ModelError("load balancer needs at least one server");
  for (double m : cfg.mus) {
    if (!(m > 0.0) || !std::isfinite(m)) throw ModelError("service rates must be finite and positive");
  }
  if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda)) throw ModelError("arrival rate must be finite and >= 0");
  if (cfg.buffer < 1) throw ModelError("buffer must be at least 1");
}

inline std::vector<std::string> state_labels(std::size_t buffer) {
  std::vector<std::string> labels;
  for (std::size_t s = 0; s <= buffer; ++s) labels.push_back(std::to_string(s));
  return labels;
}

// Departures (k, s -> s-1) at mu_k. An arrival samples two servers with
// replacement and joins the shorter queue (ties split evenly, both full drops it):
//  - ordered pair (k, k1), k != k1, k at s < b, k1 at s1: k gets the job at
//    (2 lambda 1{s1 > s} + lambda 1{s1 = s}) / n, k1 is unchanged;
//  - both picks on k itself: k gets the job at lambda / n.
inline ModelSpec build_two_choice(const LBConfig& cfg) {
  check_config(cfg);
  const std::size_t n = cfg.n(), b = cfg.buffer;
  const double nn = static_cast<double>(n);
  std::vector<TransitionRule> rules;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t s = 1; s <= b; ++s) rules.push_back(unilateral(k, s, s - 1, cfg.mus[k]));
    if (cfg.lambda > 0.0) {
      for (std::size_t s = 0; s < b; ++s) rules.push_back(unilateral(k, s, s + 1, cfg.lambda / nn));
    }
  }
  if (cfg.lambda > 0.0) {
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t k1 = 0; k1 < n; ++k1) {
        if (k1 == k) continue;
        for (std::size_t s = 0; s < b; ++s) {
          for (std::size_t s1 = s; s1 <= b; ++s1) {
            const double rate = (s1 > s ? 2.0 : 1.0) * cfg.lambda / nn;
            rules.push_back(pairwise({k, s, s + 1}, {k1, s1, s1}, rate));
          }
        }
      }
    }
  }
  return ModelSpec(n, state_labels(b), std::move(rules));
}

namespace detail {

inline std::size_t states_of(std::size_t n, const StateVector& x) {
  if (n == 0 || x.size() == 0 || static_cast<std::size_t>(x.size()) % n != 0) {
    throw ModelError("state vector length is not a positive multiple of n");
  }
  return static_cast<std::size_t>(x.size()) / n;
}

}  // namespace detail

// (1/n) sum_k sum_s s x_(k,s)
inline double average_queue_length(const StateVector& x, std::size_t n) {
  const std::size_t S = detail::states_of(n, x);
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t s = 1; s < S; ++s) sum += static_cast<double>(s) * x[static_cast<Eigen::Index>(k * S + s)];
  }
  return sum / static_cast<double>(n);
}

// tail[s] = (1/n) sum_k P[S_k >= s], s = 0..b.
inline std::vector<double> tail_distribution(const StateVector& x, std::size_t n) {
  const std::size_t S = detail::states_of(n, x);
  std::vector<double> tail(S, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0.0;
    for (std::size_t s = S; s-- > 0;) {
      acc += x[static_cast<Eigen::Index>(k * S + s)];
      tail[s] += acc;
    }
  }
  for (auto& t : tail) t /= static_cast<double>(n);
  return tail;
}

// Every server at the mean speed.
inline LBConfig homogeneous_baseline(const LBConfig& cfg) {
  check_config(cfg);
  LBConfig out = cfg;
  const double mean = std::accumulate(cfg.mus.begin(), cfg.mus.end(), 0.0) / static_cast<double>(cfg.n());
  std::fill(out.mus.begin(), out.mus.end(), mean);
  return out;
}

// One fifth of the servers at 2.0, one fifth at 0.5, the rest uniform on [1.0, 1.4].
inline std::vector<double> strong_mix(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t fifth = n / 5;
  std::vector<double> mus;
  for (std::size_t i = 0; i < fifth; ++i) mus.push_back(2.0);
  for (std::size_t i = 0; i < fifth; ++i) mus.push_back(0.5);
  while (mus.size() < n) mus.push_back(1.0 + 0.4 * rng.uniform());
  return mus;
}

// All servers uniform on [1.0, 1.4].
inline std::vector<double> light_mix(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> mus(n);
  for (auto& m : mus) m = 1.0 + 0.4 * rng.uniform();
  return mus;
}

// Pads a per-object vector over states 0..S_from-1 to S_to states with zeros
// (or truncates), so estimates with different buffers can be compared.
inline StateVector resize_states(const StateVector& x, std::size_t n, std::size_t S_to) {
  const std::size_t S_from = detail::states_of(n, x);
  StateVector y = StateVector::Zero(static_cast<Eigen::Index>(n * S_to));
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t s = 0; s < std::min(S_from, S_to); ++s) {
      y[static_cast<Eigen::Index>(k * S_to + s)] = x[static_cast<Eigen::Index>(k * S_from + s)];
    }
  }
  return y;
}

// (1/n) sum_{k,s} |reference - estimate| over all states, after padding both to
// the larger buffer.
inline double steady_error(const StateVector& reference, const StateVector& estimate, std::size_t n) {
  const std::size_t S = std::max(detail::states_of(n, reference), detail::states_of(n, estimate));
  const StateVector a = resize_states(reference, n, S), b = resize_states(estimate, n, S);
  return (a - b).cwiseAbs().sum() / static_cast<double>(n);
}

}  // namespace hetmf::lb
