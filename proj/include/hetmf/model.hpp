#pragma once

#include "hetmf/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

namespace hetmf {

// Flattened (object-major, state-minor) vector: entry k * |S| + s holds x_(k,s).
using StateVector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Per-object state index, length n. The compact representation of a configuration.
using ObjectAssignment = std::vector<std::size_t>;

// One object taking part in a transition. Object and state indices are 0-based.
struct Participant {
  std::size_t object = 0;
  std::size_t from = 0;
  std::size_t to = 0;

  bool operator==(const Participant&) const = default;
};

// Fires at rate * prod_p x_(object_p, from_p). The rate is fully scaled: any
// 1/(d n^(d-1)) population factor is already folded in by the model builder.
struct TransitionRule {
  std::vector<Participant> participants;
  double rate = 0.0;

  std::size_t order() const noexcept { return participants.size(); }
  bool operator==(const TransitionRule&) const = default;
};

inline TransitionRule unilateral(std::size_t k, std::size_t from, std::size_t to, double rate) {
  return TransitionRule{{{k, from, to}}, rate};
}

inline TransitionRule pairwise(Participant first, Participant second, double rate) {
  return TransitionRule{{first, second}, rate};
}

class ModelSpec {
 public:
  ModelSpec(std::size_t n, std::vector<std::string> states,
            std::vector<TransitionRule> rules = {},
            std::optional<double> rate_bound_hint = std::nullopt)
      : n_(n), states_(std::move(states)), rules_(std::move(rules)), rate_bound_hint_(rate_bound_hint) {
    if (n_ == 0) throw ModelError("model needs at least one object");
    if (states_.empty()) throw ModelError("model needs at least one state");
    std::unordered_set<std::string> seen;
    for (const auto& label : states_) {
      if (!seen.insert(label).second) throw ModelError("duplicate state label '" + label + "'");
    }
    if (rate_bound_hint_ && !(*rate_bound_hint_ >= 0.0 && std::isfinite(*rate_bound_hint_))) {
      throw ModelError("rate_bound_hint must be a nonnegative finite number");
    }
  }

  std::size_t n() const noexcept { return n_; }
  std::size_t num_states() const noexcept { return states_.size(); }
  std::size_t dim() const noexcept { return n_ * states_.size(); }
  const std::vector<std::string>& states() const noexcept { return states_; }
  const std::vector<TransitionRule>& rules() const noexcept { return rules_; }
  std::optional<double> rate_bound_hint() const noexcept { return rate_bound_hint_; }

  std::size_t index(std::size_t object, std::size_t state) const noexcept {
    return object * states_.size() + state;
  }

  std::size_t state_index(std::string_view label) const {
    auto it = std::find(states_.begin(), states_.end(), label);
    if (it == states_.end()) throw ModelError("unknown state label '" + std::string(label) + "'");
    return static_cast<std::size_t>(it - states_.begin());
  }

  std::size_t max_order() const noexcept {
    std::size_t d = 0;
    for (const auto& r : rules_) d = std::max(d, r.order());
    return d;
  }

  void set_rate_bound_hint(std::optional<double> hint) { rate_bound_hint_ = hint; }

  bool operator==(const ModelSpec&) const = default;

 private:
  friend ModelSpec add_rule(ModelSpec model, TransitionRule rule);

  std::size_t n_;
  std::vector<std::string> states_;
  std::vector<TransitionRule> rules_;
  std::optional<double> rate_bound_hint_;
};

inline ModelSpec new_model(std::size_t n, std::vector<std::string> states) {
  return ModelSpec(n, std::move(states));
}

// Returns a description of the first invariant the rule breaks against the model.
inline std::optional<std::string> check_rule(const ModelSpec& model, const TransitionRule& rule) {
  if (rule.participants.empty()) return "rule has no participants";
  if (!(rule.rate >= 0.0) || !std::isfinite(rule.rate)) {
    std::ostringstream os;
    os << "rate " << rule.rate << " is not a nonnegative finite number";
    return os.str();
  }
  bool changes = false;
  for (std::size_t i = 0; i < rule.participants.size(); ++i) {
    const auto& p = rule.participants[i];
    if (p.object >= model.n()) {
      return "object " + std::to_string(p.object + 1) + " outside 1.." + std::to_string(model.n());
    }
    if (p.from >= model.num_states() || p.to >= model.num_states()) {
      return "state index outside the state list for object " + std::to_string(p.object + 1);
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (rule.participants[j].object == p.object) {
        return "object " + std::to_string(p.object + 1) + " appears twice among participants";
      }
    }
    changes = changes || p.from != p.to;
  }
  if (!changes) return "no participant changes state";
  return std::nullopt;
}

inline ModelSpec add_rule(ModelSpec model, TransitionRule rule) {
  if (auto err = check_rule(model, rule)) throw ModelError(*err);
  model.rules_.push_back(std::move(rule));
  return model;
}

struct ValidationReport {
  std::vector<std::string> violations;
  std::vector<std::string> warnings;

  bool ok() const noexcept { return violations.empty(); }
};

inline ValidationReport validate(const ModelSpec& model) {
  ValidationReport report;
  const double n = static_cast<double>(model.n());
  bool warned_order = false;
  for (std::size_t i = 0; i < model.rules().size(); ++i) {
    const auto& rule = model.rules()[i];
    if (auto err = check_rule(model, rule)) {
      report.violations.push_back("rule " + std::to_string(i) + ": " + *err);
      continue;
    }
    const auto d = rule.order();
    if (d > 4 && !warned_order) {
      report.warnings.push_back("rule " + std::to_string(i) + " has " + std::to_string(d) +
                                " participants; refinement tensors are untested above 4");
      warned_order = true;
    }
    if (auto hint = model.rate_bound_hint()) {
      const double unscaled = rule.rate * static_cast<double>(d) * std::pow(n, static_cast<double>(d) - 1.0);
      if (unscaled > *hint) {
        std::ostringstream os;
        os << "rule " << i << ": unscaled rate " << unscaled << " exceeds r̄=" << *hint;
        report.warnings.push_back(os.str());
      }
    }
  }
  return report;
}

inline StateVector encode(const ModelSpec& model, const ObjectAssignment& assignment) {
  if (assignment.size() != model.n()) {
    throw ModelError("assignment has " + std::to_string(assignment.size()) + " entries, expected " +
                     std::to_string(model.n()));
  }
  StateVector x = StateVector::Zero(static_cast<Eigen::Index>(model.dim()));
  for (std::size_t k = 0; k < assignment.size(); ++k) {
    if (assignment[k] >= model.num_states()) {
      throw ModelError("object " + std::to_string(k + 1) + " has unknown state index");
    }
    x[static_cast<Eigen::Index>(model.index(k, assignment[k]))] = 1.0;
  }
  return x;
}

inline ObjectAssignment assignment_from_labels(const ModelSpec& model, const std::vector<std::string>& labels) {
  ObjectAssignment a;
  a.reserve(labels.size());
  for (const auto& l : labels) a.push_back(model.state_index(l));
  return a;
}

inline StateVector encode(const ModelSpec& model, const std::vector<std::string>& labels) {
  return encode(model, assignment_from_labels(model, labels));
}

// Inverse of encode; throws unless x is an indicator vector.
inline ObjectAssignment decode(const ModelSpec& model, const StateVector& x) {
  if (static_cast<std::size_t>(x.size()) != model.dim()) throw ModelError("state vector length mismatch");
  ObjectAssignment a(model.n());
  for (std::size_t k = 0; k < model.n(); ++k) {
    std::size_t ones = 0;
    for (std::size_t s = 0; s < model.num_states(); ++s) {
      const double v = x[static_cast<Eigen::Index>(model.index(k, s))];
      if (v == 1.0) {
        a[k] = s;
        ++ones;
      } else if (v != 0.0) {
        throw ModelError("not an indicator vector");
      }
    }
    if (ones != 1) throw ModelError("object " + std::to_string(k + 1) + " is not in exactly one state");
  }
  return a;
}

inline void check_length(const ModelSpec& model, const StateVector& x) {
  if (static_cast<std::size_t>(x.size()) != model.dim()) {
    throw ModelError("state vector has length " + std::to_string(x.size()) + ", expected " +
                     std::to_string(model.dim()));
  }
}

// Largest |sum_s x_(k,s) - 1| over objects.
inline double mass_defect(const ModelSpec& model, const StateVector& x) {
  check_length(model, x);
  const auto S = static_cast<Eigen::Index>(model.num_states());
  double worst = 0.0;
  for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(model.n()); ++k) {
    worst = std::max(worst, std::abs(x.segment(k * S, S).sum() - 1.0));
  }
  return worst;
}

// Checks that x is a point of the per-object probability simplex (within tol).
inline void check_distribution(const ModelSpec& model, const StateVector& x, double tol = 1e-9) {
  check_length(model, x);
  if (!x.allFinite()) throw ModelError("state vector has non-finite entries");
  if (x.minCoeff() < -tol || x.maxCoeff() > 1.0 + tol) throw ModelError("state vector entries outside [0,1]");
  if (mass_defect(model, x) > tol) throw ModelError("per-object probabilities do not sum to one");
}

// Every object spread evenly over all states.
inline StateVector uniform_state(const ModelSpec& model) {
  return StateVector::Constant(static_cast<Eigen::Index>(model.dim()), 1.0 / static_cast<double>(model.num_states()));
}

}  // namespace hetmf
