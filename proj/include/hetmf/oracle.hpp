#pragma once

#include "hetmf/error.hpp"
#include "hetmf/model.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#ifdef HETMF_USE_UMFPACK
#include <Eigen/UmfPackSupport>
#endif

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hetmf {

// The global chain on all |S|^n assignments. Global state c encodes object k's
// state as digit k (object 0 least significant) in base |S|.
struct FullChain {
  using Generator = Eigen::SparseMatrix<double, Eigen::RowMajor>;

  std::size_t n = 0;
  std::size_t num_states = 0;     // |S|
  std::size_t size = 0;           // |S|^n
  Generator generator;            // rows sum to zero
  std::vector<std::string> labels;

  std::size_t code(const ObjectAssignment& a) const {
    std::size_t c = 0;
    for (std::size_t k = n; k-- > 0;) c = c * num_states + a[k];
    return c;
  }

  ObjectAssignment assignment(std::size_t c) const {
    ObjectAssignment a(n);
    for (std::size_t k = 0; k < n; ++k) {
      a[k] = c % num_states;
      c /= num_states;
    }
    return a;
  }

  std::string describe(std::size_t c) const {
    std::string out = "(";
    const auto a = assignment(c);
    for (std::size_t k = 0; k < n; ++k) {
      if (k > 0) out += ",";
      out += labels[a[k]];
    }
    return out + ")";
  }
};

inline constexpr std::size_t kDefaultStateCap = 200000;

inline FullChain build_full_chain(const ModelSpec& model, std::size_t cap = kDefaultStateCap) {
  const std::size_t n = model.n(), S = model.num_states();
  double total = 1.0;
  for (std::size_t k = 0; k < n; ++k) total *= static_cast<double>(S);
  if (total > static_cast<double>(cap)) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", total);
    throw CapacityError(std::string("global chain has ") + buf + " states, above the cap of " + std::to_string(cap));
  }
  FullChain chain;
  chain.n = n;
  chain.num_states = S;
  chain.size = static_cast<std::size_t>(total);
  chain.labels = model.states();

  std::vector<std::size_t> power(n, 1);
  for (std::size_t k = 1; k < n; ++k) power[k] = power[k - 1] * S;

  std::vector<Eigen::Triplet<double>> triplets;
  std::vector<double> exit(chain.size, 0.0);
  for (std::size_t c = 0; c < chain.size; ++c) {
    const auto a = chain.assignment(c);
    for (const auto& rule : model.rules()) {
      if (rule.rate == 0.0) continue;
      bool enabled = true;
      std::size_t target = c;
      for (const auto& p : rule.participants) {
        if (a[p.object] != p.from) {
          enabled = false;
          break;
        }
        target = target - p.from * power[p.object] + p.to * power[p.object];
      }
      if (!enabled || target == c) continue;
      triplets.emplace_back(static_cast<int>(c), static_cast<int>(target), rule.rate);
      exit[c] += rule.rate;
    }
    if (exit[c] > 0.0) triplets.emplace_back(static_cast<int>(c), static_cast<int>(c), -exit[c]);
  }
  chain.generator.resize(static_cast<Eigen::Index>(chain.size), static_cast<Eigen::Index>(chain.size));
  chain.generator.setFromTriplets(triplets.begin(), triplets.end());
  chain.generator.makeCompressed();
  return chain;
}

namespace detail {

inline StateVector marginals(const FullChain& chain, const Eigen::VectorXd& p) {
  StateVector x = StateVector::Zero(static_cast<Eigen::Index>(chain.n * chain.num_states));
  for (std::size_t c = 0; c < chain.size; ++c) {
    const double w = p[static_cast<Eigen::Index>(c)];
    if (w == 0.0) continue;
    std::size_t rest = c;
    for (std::size_t k = 0; k < chain.n; ++k) {
      x[static_cast<Eigen::Index>(k * chain.num_states + rest % chain.num_states)] += w;
      rest /= chain.num_states;
    }
  }
  return x;
}

inline void check_start(const FullChain& chain, const ObjectAssignment& s0) {
  if (s0.size() != chain.n) throw ModelError("initial assignment has the wrong length");
  for (auto s : s0) {
    if (s >= chain.num_states) throw ModelError("initial assignment has an unknown state");
  }
}

}  // namespace detail

struct UniformizationOptions {
  double tail = 1e-14;    // Poisson mass dropped per step
  double max_jump = 20.0; // Lambda * dt per step
};

// Distribution of the global chain at each grid time by uniformization; returns
// the per-object marginals P[S_k(t) = s].
inline std::vector<StateVector> transient_marginals(const FullChain& chain, const ObjectAssignment& s0,
                                                    std::span<const double> grid,
                                                    const UniformizationOptions& opt = {}) {
  detail::check_start(chain, s0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0) || (i > 0 && !(grid[i] >= grid[i - 1]))) {
      throw Error("time grid must be nonnegative and nondecreasing");
    }
  }
  double lambda = 0.0;
  for (Eigen::Index c = 0; c < chain.generator.rows(); ++c) lambda = std::max(lambda, -chain.generator.coeff(c, c));

  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(chain.size));
  p[static_cast<Eigen::Index>(chain.code(s0))] = 1.0;
  std::vector<StateVector> out;
  double t = 0.0;
  Eigen::VectorXd term, acc;
  for (double target : grid) {
    while (lambda > 0.0 && t < target) {
      const double dt = std::min(target - t, opt.max_jump / lambda);
      const double mu = lambda * dt;
      // sum_j e^{-mu} mu^j / j! p P^j with P = I + G / lambda
      double weight = std::exp(-mu), mass = weight;
      term = p;
      acc = weight * term;
      for (std::size_t j = 1; 1.0 - mass > opt.tail && j < 10000; ++j) {
        term = term + (term.transpose() * chain.generator).transpose() / lambda;
        weight *= mu / static_cast<double>(j);
        mass += weight;
        acc += weight * term;
      }
      p = acc / acc.sum();
      t = (target - t <= opt.max_jump / lambda) ? target : t + dt;
    }
    out.push_back(detail::marginals(chain, p));
  }
  return out;
}

namespace detail {

// Closed communicating classes among the states reachable from `roots`
// (iterative Tarjan).
inline std::vector<std::vector<std::size_t>> closed_classes(const FullChain& chain,
                                                            const std::vector<std::size_t>& roots) {
  const auto& G = chain.generator;
  const std::size_t N = chain.size;
  constexpr std::size_t none = static_cast<std::size_t>(-1);
  std::vector<std::size_t> index(N, none), low(N, 0), comp(N, none);
  std::vector<char> on_stack(N, 0);
  std::vector<std::size_t> stack;
  std::vector<std::vector<std::size_t>> comps;
  std::size_t counter = 0;

  struct Frame {
    std::size_t v;
    FullChain::Generator::InnerIterator it;
  };
  for (auto root : roots) {
    if (index[root] != none) continue;
    std::vector<Frame> frames;
    auto open = [&](std::size_t v) {
      index[v] = low[v] = counter++;
      stack.push_back(v);
      on_stack[v] = 1;
      frames.push_back({v, FullChain::Generator::InnerIterator(G, static_cast<Eigen::Index>(v))});
    };
    open(root);
    while (!frames.empty()) {
      auto& f = frames.back();
      if (f.it) {
        const auto w = static_cast<std::size_t>(f.it.col());
        const double rate = f.it.value();
        ++f.it;
        if (w == f.v || rate <= 0.0) continue;
        if (index[w] == none) {
          open(w);
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], index[w]);
        }
        continue;
      }
      const std::size_t v = f.v;
      frames.pop_back();
      if (!frames.empty()) low[frames.back().v] = std::min(low[frames.back().v], low[v]);
      if (low[v] == index[v]) {
        std::vector<std::size_t> members;
        std::size_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp[w] = comps.size();
          members.push_back(w);
        } while (w != v);
        comps.push_back(std::move(members));
      }
    }
  }

  std::vector<std::vector<std::size_t>> closed;
  for (std::size_t id = 0; id < comps.size(); ++id) {
    bool leaves = false;
    for (auto v : comps[id]) {
      for (FullChain::Generator::InnerIterator it(G, static_cast<Eigen::Index>(v)); it && !leaves; ++it) {
        if (it.value() > 0.0 && comp[static_cast<std::size_t>(it.col())] != id) leaves = true;
      }
      if (leaves) break;
    }
    if (!leaves) {
      std::sort(comps[id].begin(), comps[id].end());
      closed.push_back(std::move(comps[id]));
    }
  }
  return closed;
}

inline StateVector stationary_from(const FullChain& chain, const std::vector<std::size_t>& roots) {
  const auto classes = closed_classes(chain, roots);
  if (classes.size() != 1) {
    std::string msg = "chain has " + std::to_string(classes.size()) + " recurrent classes:";
    for (std::size_t i = 0; i < classes.size() && i < 8; ++i) {
      msg += " {" + chain.describe(classes[i].front());
      if (classes[i].size() > 1) msg += ", ... " + std::to_string(classes[i].size()) + " states";
      msg += "}";
    }
    if (classes.size() > 8) msg += " ...";
    throw ReducibleChainError(msg);
  }
  const auto& C = classes.front();
  const auto m = static_cast<Eigen::Index>(C.size());
  std::vector<Eigen::Index> local(chain.size, -1);
  for (Eigen::Index i = 0; i < m; ++i) local[C[static_cast<std::size_t>(i)]] = i;

  // A = G_CC^T with the last balance equation replaced by sum(pi) = 1.
  std::vector<Eigen::Triplet<double>> triplets;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (FullChain::Generator::InnerIterator it(chain.generator, static_cast<Eigen::Index>(C[static_cast<std::size_t>(i)]));
         it; ++it) {
      const Eigen::Index j = local[static_cast<std::size_t>(it.col())];
      if (j >= 0 && j != m - 1) triplets.emplace_back(j, i, it.value());
    }
    triplets.emplace_back(m - 1, i, 1.0);
  }
  Eigen::SparseMatrix<double> A(m, m);
  A.setFromTriplets(triplets.begin(), triplets.end());
  A.makeCompressed();
#ifdef HETMF_USE_UMFPACK
  Eigen::UmfPackLU<Eigen::SparseMatrix<double>> lu;
#else
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
#endif
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw Error("stationary system is singular");
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  rhs[m - 1] = 1.0;
  const Eigen::VectorXd pi_c = lu.solve(rhs);
  Eigen::VectorXd pi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(chain.size));
  for (Eigen::Index i = 0; i < m; ++i) pi[static_cast<Eigen::Index>(C[static_cast<std::size_t>(i)])] = pi_c[i];
  return marginals(chain, pi);
}

}  // namespace detail

// Stationary marginals of the chain started from s0 (restricted to its reachable
// set). Throws ReducibleChainError if that set holds more than one closed class.
inline StateVector stationary_marginals(const FullChain& chain, const ObjectAssignment& s0) {
  detail::check_start(chain, s0);
  return detail::stationary_from(chain, {chain.code(s0)});
}

// Stationary marginals over the whole state space; requires a unique closed class.
inline StateVector stationary_marginals(const FullChain& chain) {
  std::vector<std::size_t> all(chain.size);
  for (std::size_t c = 0; c < chain.size; ++c) all[c] = c;
  return detail::stationary_from(chain, all);
}

}  // namespace hetmf
