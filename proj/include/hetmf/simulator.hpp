#pragma once

#include "hetmf/error.hpp"
#include "hetmf/model.hpp"
#include "hetmf/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace hetmf {

// Sample means of the indicators X_(k,s) with normal-approximation 95% intervals.
struct SimEstimate {
  std::vector<double> times;
  std::vector<StateVector> mean;      // one per time
  std::vector<StateVector> variance;  // sample variance of the per-replica (or per-batch) values
  std::vector<StateVector> half_width;  // 1.96 sqrt(variance / replicas)
  std::size_t replicas = 0;           // replicas, or batches for time averages
  bool absorbed = false;              // steady state: chain reached an absorbing state
  std::vector<StateVector> batch_means;  // steady state only
};

struct ScalarEstimate {
  double mean = 0.0;
  double half_width = 0.0;
};

// Batch-means estimate of a (linear or not) functional of the occupancy, for
// steady-state estimates.
template <class F>
ScalarEstimate batch_functional(const SimEstimate& est, F&& f) {
  if (est.absorbed) return {f(est.mean.front()), 0.0};
  if (est.batch_means.size() < 2) throw Error("estimate carries no batch means");
  const double B = static_cast<double>(est.batch_means.size());
  double mean = f(est.mean.front()), var = 0.0;
  for (const auto& m : est.batch_means) {
    const double d = f(m) - mean;
    var += d * d;
  }
  var /= B - 1.0;
  return {mean, 1.96 * std::sqrt(var / B)};
}

struct SimEvent {
  double time;
  std::size_t rule;  // index into model.rules()
  ObjectAssignment pre;
  ObjectAssignment post;
};

struct EventLog {
  ObjectAssignment initial;
  std::vector<SimEvent> events;
};

namespace detail {

// Rules grouped so that the set of enabled rules is read off the current
// assignment: unilateral rules by (object, from-state), pairwise rules by
// (object pair, from-states). Each group has a precomputed total rate. Rules
// with three or more participants are rescanned after every event.
class CompiledChain {
 public:
  explicit CompiledChain(const ModelSpec& model) : n_(model.n()), S_(model.num_states()) {
    const auto& rules = model.rules();
    std::vector<std::vector<std::size_t>> uni_groups(n_ * S_);
    std::vector<std::size_t> pair_of(n_ * n_, npos);
    std::vector<std::vector<std::size_t>> pair_rules;  // per pair: rule ids
    for (std::size_t r = 0; r < rules.size(); ++r) {
      const auto& rule = rules[r];
      if (auto err = check_rule(model, rule)) throw ModelError(*err);
      if (rule.rate == 0.0) continue;
      if (rule.order() == 1) {
        const auto& p = rule.participants[0];
        uni_groups[p.object * S_ + p.from].push_back(r);
      } else if (rule.order() == 2) {
        auto a = rule.participants[0].object, b = rule.participants[1].object;
        if (a > b) std::swap(a, b);
        auto& id = pair_of[a * n_ + b];
        if (id == npos) {
          id = pairs_.size();
          pairs_.push_back({a, b});
          pair_rules.emplace_back();
        }
        pair_rules[id].push_back(r);
      } else {
        higher_.push_back(add_compiled(rule, r));
      }
    }

    uni_begin_.assign(n_ * S_ + 1, 0);
    for (std::size_t g = 0; g < n_ * S_; ++g) {
      for (auto r : uni_groups[g]) uni_rules_.push_back(add_compiled(rules[r], r));
      uni_begin_[g + 1] = uni_rules_.size();
    }
    uni_sum_.assign(n_ * S_, 0.0);
    for (std::size_t g = 0; g < n_ * S_; ++g) {
      for (auto i = uni_begin_[g]; i < uni_begin_[g + 1]; ++i) uni_sum_[g] += compiled_[uni_rules_[i]].rate;
    }

    const std::size_t SS = S_ * S_;
    pair_begin_.assign(pairs_.size() * SS + 1, 0);
    pair_sum_.assign(pairs_.size() * SS, 0.0);
    partners_.resize(n_);
    std::vector<std::vector<std::size_t>> cell(SS);
    for (std::size_t p = 0; p < pairs_.size(); ++p) {
      const auto [a, b] = pairs_[p];
      partners_[a].push_back({b, p});
      partners_[b].push_back({a, p});
      for (auto& c : cell) c.clear();
      for (auto r : pair_rules[p]) {
        const auto& rule = rules[r];
        const auto& first = rule.participants[0].object == a ? rule.participants[0] : rule.participants[1];
        const auto& second = rule.participants[0].object == a ? rule.participants[1] : rule.participants[0];
        cell[first.from * S_ + second.from].push_back(r);
      }
      for (std::size_t c = 0; c < SS; ++c) {
        for (auto r : cell[c]) {
          pair_rules_.push_back(add_compiled(rules[r], r));
          pair_sum_[p * SS + c] += rules[r].rate;
        }
        pair_begin_[p * SS + c + 1] = pair_rules_.size();
      }
    }
  }

  struct Move {
    std::size_t object, to;
  };
  struct Compiled {
    double rate;
    std::size_t rule;
    std::size_t move_begin, move_end;
    std::size_t part_begin, part_end;  // (object, from) list, used by higher-order rules
  };

  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  std::size_t n_, S_;
  std::vector<Compiled> compiled_;
  std::vector<Move> moves_;
  std::vector<Move> parts_;  // object, from
  std::vector<std::size_t> uni_rules_, uni_begin_;
  std::vector<double> uni_sum_;
  std::vector<std::pair<std::size_t, std::size_t>> pairs_;
  std::vector<std::size_t> pair_rules_, pair_begin_;
  std::vector<double> pair_sum_;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> partners_;  // (other object, pair id)
  std::vector<std::size_t> higher_;

 private:
  std::size_t add_compiled(const TransitionRule& rule, std::size_t r) {
    Compiled c{rule.rate, r, moves_.size(), 0, parts_.size(), 0};
    for (const auto& p : rule.participants) {
      if (p.from != p.to) moves_.push_back({p.object, p.to});
      parts_.push_back({p.object, p.from});
    }
    c.move_end = moves_.size();
    c.part_end = parts_.size();
    compiled_.push_back(c);
    return compiled_.size() - 1;
  }
};

// Direct-method Gillespie over a CompiledChain. Leaves of a sum tree hold the
// enabled rate of each object's unilateral group, each interacting pair, and
// the higher-order rules; after an event only the leaves of moved objects change.
class Gillespie {
 public:
  Gillespie(const CompiledChain& chain, const ObjectAssignment& start) : c_(chain), state_(start) {
    leaves_ = c_.n_ + c_.pairs_.size() + 1;
    size_ = 1;
    while (size_ < leaves_) size_ <<= 1;
    tree_.assign(2 * size_, 0.0);
    for (std::size_t k = 0; k < c_.n_; ++k) tree_[size_ + k] = unilateral_rate(k);
    for (std::size_t p = 0; p < c_.pairs_.size(); ++p) tree_[size_ + c_.n_ + p] = pair_rate(p);
    tree_[size_ + leaves_ - 1] = higher_rate();
    for (std::size_t i = size_ - 1; i >= 1; --i) tree_[i] = tree_[2 * i] + tree_[2 * i + 1];
  }

  double total_rate() const noexcept { return tree_[1]; }
  const ObjectAssignment& state() const noexcept { return state_; }

  // Picks an enabled rule proportionally to its rate; requires total_rate() > 0.
  const CompiledChain::Compiled& choose(Rng& rng) const {
    double u = rng.uniform() * tree_[1];
    std::size_t i = 1;
    while (i < size_) {
      const double left = tree_[2 * i];
      if (u < left || tree_[2 * i + 1] <= 0.0) {
        i = 2 * i;
      } else {
        u -= left;
        i = 2 * i + 1;
      }
    }
    const std::size_t leaf = i - size_;
    if (leaf < c_.n_) {
      const auto g = leaf * c_.S_ + state_[leaf];
      return pick(c_.uni_rules_, c_.uni_begin_[g], c_.uni_begin_[g + 1], u);
    }
    if (leaf < c_.n_ + c_.pairs_.size()) {
      const auto p = leaf - c_.n_;
      const auto [a, b] = c_.pairs_[p];
      const auto cell = p * c_.S_ * c_.S_ + state_[a] * c_.S_ + state_[b];
      return pick(c_.pair_rules_, c_.pair_begin_[cell], c_.pair_begin_[cell + 1], u);
    }
    const CompiledChain::Compiled* last = nullptr;
    for (auto h : c_.higher_) {
      const auto& rule = c_.compiled_[h];
      if (!enabled(rule)) continue;
      last = &rule;
      if (u < rule.rate) return rule;
      u -= rule.rate;
    }
    return *last;
  }

  // Applies the rule; calls on_move(object, old_state) before each state change.
  template <class OnMove>
  void apply(const CompiledChain::Compiled& rule, OnMove&& on_move) {
    for (auto m = rule.move_begin; m < rule.move_end; ++m) {
      const auto& mv = c_.moves_[m];
      on_move(mv.object, state_[mv.object]);
      state_[mv.object] = mv.to;
    }
    for (auto m = rule.move_begin; m < rule.move_end; ++m) {
      const auto k = c_.moves_[m].object;
      set_leaf(k, unilateral_rate(k));
      for (const auto& [other, p] : c_.partners_[k]) set_leaf(c_.n_ + p, pair_rate(p));
    }
    if (!c_.higher_.empty()) set_leaf(leaves_ - 1, higher_rate());
  }

  void apply(const CompiledChain::Compiled& rule) {
    apply(rule, [](std::size_t, std::size_t) {});
  }

 private:
  double unilateral_rate(std::size_t k) const { return c_.uni_sum_[k * c_.S_ + state_[k]]; }

  double pair_rate(std::size_t p) const {
    const auto [a, b] = c_.pairs_[p];
    return c_.pair_sum_[p * c_.S_ * c_.S_ + state_[a] * c_.S_ + state_[b]];
  }

  bool enabled(const CompiledChain::Compiled& rule) const {
    for (auto i = rule.part_begin; i < rule.part_end; ++i) {
      if (state_[c_.parts_[i].object] != c_.parts_[i].to) return false;
    }
    return true;
  }

  double higher_rate() const {
    double sum = 0.0;
    for (auto h : c_.higher_) {
      if (enabled(c_.compiled_[h])) sum += c_.compiled_[h].rate;
    }
    return sum;
  }

  const CompiledChain::Compiled& pick(const std::vector<std::size_t>& ids, std::size_t begin, std::size_t end,
                                      double u) const {
    for (auto i = begin; i + 1 < end; ++i) {
      const auto& rule = c_.compiled_[ids[i]];
      if (u < rule.rate) return rule;
      u -= rule.rate;
    }
    return c_.compiled_[ids[end - 1]];
  }

  void set_leaf(std::size_t leaf, double value) {
    std::size_t i = size_ + leaf;
    tree_[i] = value;
    for (i >>= 1; i >= 1; i >>= 1) tree_[i] = tree_[2 * i] + tree_[2 * i + 1];
  }

  const CompiledChain& c_;
  ObjectAssignment state_;
  std::size_t leaves_ = 0, size_ = 1;
  std::vector<double> tree_;
};

inline void check_assignment(const ModelSpec& model, const ObjectAssignment& s0) {
  if (s0.size() != model.n()) throw ModelError("initial assignment has the wrong length");
  for (auto s : s0) {
    if (s >= model.num_states()) throw ModelError("initial assignment has an unknown state");
  }
}

inline std::size_t worker_count(std::size_t requested, std::size_t jobs) {
  std::size_t threads = requested;
  if (threads == 0) {
    threads = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("HETMF_THREADS")) {
      const long cap = std::strtol(env, nullptr, 10);
      if (cap > 0) threads = std::min(threads, static_cast<std::size_t>(cap));
    }
  }
  return std::max<std::size_t>(1, std::min(threads, jobs));
}

}  // namespace detail

// One exact sample path on [0, t_end]; deterministic in (model, s0, t_end, seed).
inline EventLog simulate_path(const ModelSpec& model, const ObjectAssignment& s0, double t_end, std::uint64_t seed) {
  detail::check_assignment(model, s0);
  const detail::CompiledChain chain(model);
  detail::Gillespie engine(chain, s0);
  Rng rng(seed);
  EventLog log;
  log.initial = s0;
  double t = 0.0;
  while (engine.total_rate() > 0.0) {
    t += rng.exponential(engine.total_rate());
    if (t > t_end) break;
    const auto& rule = engine.choose(rng);
    SimEvent ev{t, rule.rule, engine.state(), {}};
    engine.apply(rule);
    ev.post = engine.state();
    log.events.push_back(std::move(ev));
  }
  return log;
}

struct TransientSimOptions {
  std::size_t threads = 0;  // 0: hardware concurrency capped by HETMF_THREADS
};

// Replica r uses stream split_seed(seed, r); counts are integers, so the result
// does not depend on how replicas are spread over threads.
inline SimEstimate transient_mean(const ModelSpec& model, const ObjectAssignment& s0, std::span<const double> grid,
                                  std::size_t replicas, std::uint64_t seed, const TransientSimOptions& opt = {}) {
  detail::check_assignment(model, s0);
  if (replicas < 2) throw Error("need at least two replicas");
  if (grid.empty()) throw Error("time grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0) || (i > 0 && !(grid[i] > grid[i - 1]))) {
      throw Error("time grid must be nonnegative and strictly increasing");
    }
  }
  const detail::CompiledChain chain(model);
  const std::size_t N = model.dim(), G = grid.size(), S = model.num_states();
  const std::size_t threads = detail::worker_count(opt.threads, replicas);
  std::vector<std::vector<std::uint64_t>> counts(threads, std::vector<std::uint64_t>(G * N, 0));

  auto worker = [&](std::size_t w) {
    auto& cnt = counts[w];
    const std::size_t begin = replicas * w / threads, end = replicas * (w + 1) / threads;
    for (std::size_t r = begin; r < end; ++r) {
      Rng rng = stream_rng(seed, r);
      detail::Gillespie engine(chain, s0);
      double t = 0.0;
      double next = engine.total_rate() > 0.0 ? rng.exponential(engine.total_rate())
                                              : std::numeric_limits<double>::infinity();
      for (std::size_t g = 0; g < G; ++g) {
        while (t + next <= grid[g]) {
          t += next;
          engine.apply(engine.choose(rng));
          next = engine.total_rate() > 0.0 ? rng.exponential(engine.total_rate())
                                           : std::numeric_limits<double>::infinity();
        }
        const auto& st = engine.state();
        for (std::size_t k = 0; k < st.size(); ++k) ++cnt[g * N + k * S + st[k]];
      }
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(worker, w);
    for (auto& th : pool) th.join();
  }

  SimEstimate est;
  est.times.assign(grid.begin(), grid.end());
  est.replicas = replicas;
  const double R = static_cast<double>(replicas);
  for (std::size_t g = 0; g < G; ++g) {
    StateVector mean(static_cast<Eigen::Index>(N)), var(static_cast<Eigen::Index>(N)), hw(static_cast<Eigen::Index>(N));
    for (std::size_t i = 0; i < N; ++i) {
      std::uint64_t c = 0;
      for (const auto& cnt : counts) c += cnt[g * N + i];
      const double p = static_cast<double>(c) / R;
      const auto e = static_cast<Eigen::Index>(i);
      mean[e] = p;
      var[e] = R / (R - 1.0) * p * (1.0 - p);
      hw[e] = 1.96 * std::sqrt(var[e] / R);
    }
    est.mean.push_back(std::move(mean));
    est.variance.push_back(std::move(var));
    est.half_width.push_back(std::move(hw));
  }
  return est;
}

struct SteadySimOptions {
  std::size_t batches = 20;
};

// Time-weighted occupancy over `events` events after `warmup_events`; the CI
// uses batch means over equal event-count batches.
inline SimEstimate steady_state_mean(const ModelSpec& model, const ObjectAssignment& s0, std::size_t warmup_events,
                                     std::size_t events, std::uint64_t seed, const SteadySimOptions& opt = {}) {
  detail::check_assignment(model, s0);
  if (events == 0) throw Error("measurement window is empty (events must be > 0)");
  const std::size_t B = std::max<std::size_t>(2, std::min(opt.batches, events));
  const detail::CompiledChain chain(model);
  const std::size_t N = model.dim(), S = model.num_states(), n = model.n();
  detail::Gillespie engine(chain, s0);
  Rng rng = stream_rng(seed, 0);

  SimEstimate est;
  est.replicas = B;
  auto absorbed_result = [&] {
    est.absorbed = true;
    const StateVector x = encode(model, engine.state());
    est.times = {std::numeric_limits<double>::infinity()};
    est.mean = {x};
    est.variance = {StateVector::Zero(static_cast<Eigen::Index>(N))};
    est.half_width = {StateVector::Zero(static_cast<Eigen::Index>(N))};
    return est;
  };

  double t = 0.0;
  for (std::size_t e = 0; e < warmup_events; ++e) {
    if (engine.total_rate() <= 0.0) return absorbed_result();
    t += rng.exponential(engine.total_rate());
    engine.apply(engine.choose(rng));
  }

  std::vector<double> enter(n, t);
  std::vector<double> acc(N, 0.0), total(N, 0.0);
  std::vector<StateVector> batch_means;
  const double t_start = t;
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t count = events / B + (b < events % B ? 1 : 0);
    const double batch_start = t;
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t e = 0; e < count; ++e) {
      if (engine.total_rate() <= 0.0) return absorbed_result();
      t += rng.exponential(engine.total_rate());
      engine.apply(engine.choose(rng), [&](std::size_t k, std::size_t old) {
        acc[k * S + old] += t - enter[k];
        enter[k] = t;
      });
    }
    const auto& st = engine.state();
    for (std::size_t k = 0; k < n; ++k) {
      acc[k * S + st[k]] += t - enter[k];
      enter[k] = t;
    }
    const double span = t - batch_start;
    StateVector m(static_cast<Eigen::Index>(N));
    for (std::size_t i = 0; i < N; ++i) {
      total[i] += acc[i];
      m[static_cast<Eigen::Index>(i)] = span > 0.0 ? acc[i] / span : 0.0;
    }
    batch_means.push_back(std::move(m));
  }

  const double Bd = static_cast<double>(B);
  StateVector mean(static_cast<Eigen::Index>(N)), var = StateVector::Zero(static_cast<Eigen::Index>(N));
  for (std::size_t i = 0; i < N; ++i) mean[static_cast<Eigen::Index>(i)] = total[i] / (t - t_start);
  for (const auto& m : batch_means) var += (m - mean).cwiseAbs2();
  var /= (Bd - 1.0);
  est.times = {t};
  est.mean = {mean};
  est.half_width = {(1.96 * (var / Bd).cwiseSqrt()).eval()};
  est.variance = {var};
  est.batch_means = std::move(batch_means);
  return est;
}

}  // namespace hetmf
