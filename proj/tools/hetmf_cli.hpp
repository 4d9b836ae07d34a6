#pragma once

#include "hetmf/hetmf.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#ifndef HETMF_GIT_REVISION
#define HETMF_GIT_REVISION "unknown"
#endif

namespace hetmf::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kFatal = 1, kPartial = 2 };

class UsageError : public Error {
 public:
  using Error::Error;
};

struct ModelSource {
  enum class Kind { none, file, cache, lb } kind = Kind::none;
  std::string path;
  std::optional<cache::CacheConfig> cache;
  std::optional<lb::LBConfig> lb;
  std::string spec;  // the text given on the command line
};

struct RunConfig {
  std::string command;
  ModelSource source;
  std::vector<std::string> init;  // initial state labels, file models only
  std::set<std::string> methods;
  std::vector<double> grid;
  std::size_t replicas = 1000;
  std::uint64_t seed = 1;
  std::size_t events = 1'000'000;
  std::size_t warmup = 100'000;
  std::size_t batches = 20;
  double rtol = 1e-8;
  double atol = 1e-10;
  std::size_t state_cap = kDefaultStateCap;
  std::size_t threads = 0;
  std::string out;  // file prefix; empty writes the CSV to stdout

  // bench-cache
  std::vector<std::size_t> n_list{10, 20, 30, 40, 50};
  double alpha = 0.5;
  double occupancy = 0.3;
  std::size_t lists = 2;

  // bench-lb
  double lambda = 1.0;
  std::size_t buffer = lb::kDefaultBuffer;
  std::size_t sim_buffer = 64;
  std::string mix = "strong";
  std::uint64_t mix_seed = 1;
  bool homogeneous = true;
};

// ---- parsing -------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(text);
  while (std::getline(is, cur, sep)) parts.push_back(cur);
  if (!text.empty() && text.back() == sep) parts.emplace_back();
  return parts;
}

inline double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError(what + ": '" + s + "' is not a number");
  }
}

inline std::size_t to_size(const std::string& s, const std::string& what) {
  const double v = to_double(s, what);
  if (!(v >= 0.0) || v != std::floor(v)) throw UsageError(what + ": '" + s + "' is not a nonnegative integer");
  return static_cast<std::size_t>(v);
}

inline std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace detail

// "t0:t1:steps": steps equal intervals, so steps + 1 points from t0 to t1.
inline std::vector<double> parse_grid(const std::string& text) {
  const auto parts = detail::split(text, ':');
  if (parts.size() != 3) throw UsageError("--grid expects t0:t1:steps");
  const double t0 = detail::to_double(parts[0], "--grid t0");
  const double t1 = detail::to_double(parts[1], "--grid t1");
  const std::size_t steps = detail::to_size(parts[2], "--grid steps");
  if (steps == 0) throw UsageError("--grid is empty (steps must be at least 1)");
  if (!(t0 >= 0.0) || !(t1 > t0) || !std::isfinite(t1)) throw UsageError("--grid needs 0 <= t0 < t1");
  std::vector<double> grid(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) {
    grid[i] = t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(steps);
  }
  grid.back() = t1;
  return grid;
}

// "n,alpha,m1,m2,..."
inline cache::CacheConfig parse_cache(const std::string& text) {
  const auto parts = detail::split(text, ',');
  if (parts.size() < 3) throw UsageError("--cache expects n,alpha,m1[,m2,...]");
  const std::size_t n = detail::to_size(parts[0], "--cache n");
  const double alpha = detail::to_double(parts[1], "--cache alpha");
  if (n == 0 || !(alpha >= 0.0)) throw UsageError("--cache needs n >= 1 and alpha >= 0");
  std::vector<std::size_t> lists;
  for (std::size_t i = 2; i < parts.size(); ++i) lists.push_back(detail::to_size(parts[i], "--cache list size"));
  cache::CacheConfig cfg{cache::zipf_popularities(n, alpha), lists};
  try {
    cache::check_config(cfg);
  } catch (const ModelError& e) {
    throw UsageError(std::string("--cache: ") + e.what());
  }
  return cfg;
}

inline std::vector<double> make_mix(const std::string& mix, std::size_t n, std::uint64_t seed) {
  if (mix == "strong") return lb::strong_mix(n, seed);
  if (mix == "light") return lb::light_mix(n, seed);
  if (mix == "flat") return std::vector<double>(n, 1.0);
  // explicit rates separated by ':'
  std::vector<double> mus;
  for (const auto& p : detail::split(mix, ':')) mus.push_back(detail::to_double(p, "mix rate"));
  if (mus.size() != n) throw UsageError("mix lists " + std::to_string(mus.size()) + " rates for n=" + std::to_string(n));
  return mus;
}

// "n,lambda,b,mix" with mix strong | light | flat | mu1:mu2:...
inline lb::LBConfig parse_lb(const std::string& text, std::uint64_t mix_seed) {
  const auto parts = detail::split(text, ',');
  if (parts.size() != 4) throw UsageError("--lb expects n,lambda,b,mix");
  const std::size_t n = detail::to_size(parts[0], "--lb n");
  if (n == 0) throw UsageError("--lb needs n >= 1");
  lb::LBConfig cfg{make_mix(parts[3], n, mix_seed), detail::to_double(parts[1], "--lb lambda"),
                   detail::to_size(parts[2], "--lb b")};
  try {
    lb::check_config(cfg);
  } catch (const ModelError& e) {
    throw UsageError(std::string("--lb: ") + e.what());
  }
  return cfg;
}

inline std::set<std::string> parse_methods(const std::string& text) {
  static const std::set<std::string> known{"mf", "refined", "sim", "exact", "oracle"};
  std::set<std::string> methods;
  for (const auto& m : detail::split(text, ',')) {
    if (m.empty()) continue;
    if (!known.count(m)) throw UsageError("unknown method '" + m + "' (expected mf, refined, sim, exact, oracle)");
    methods.insert(m);
  }
  if (methods.empty()) throw UsageError("--methods selects no method");
  return methods;
}

// ---- model assembly --------------------------------------------------------

struct Problem {
  ModelSpec model;
  ObjectAssignment s0;    // start of simulations and oracle runs
  StateVector x0;         // start of transient approximations
  StateVector fp_start;   // initial guess for the fixed point
};

inline Problem make_problem(const RunConfig& cfg) {
  const auto& src = cfg.source;
  switch (src.kind) {
    case ModelSource::Kind::cache: {
      auto model = cache::build_random_m(*src.cache);
      auto s0 = cache::default_assignment(*src.cache);
      StateVector x0 = encode(model, s0);
      return {std::move(model), s0, x0, cache::occupancy_state(*src.cache)};
    }
    case ModelSource::Kind::lb: {
      auto model = lb::build_two_choice(*src.lb);
      ObjectAssignment s0(src.lb->n(), 0);
      StateVector x0 = encode(model, s0);
      return {std::move(model), s0, x0, x0};
    }
    case ModelSource::Kind::file: {
      auto model = load_model(src.path);
      const auto report = validate(model);
      if (!report.ok()) throw ModelError("model file is invalid: " + report.violations.front());
      ObjectAssignment s0(model.n(), 0);
      if (!cfg.init.empty()) {
        if (cfg.init.size() != model.n()) {
          throw UsageError("--init lists " + std::to_string(cfg.init.size()) + " states for " +
                           std::to_string(model.n()) + " objects");
        }
        s0 = assignment_from_labels(model, cfg.init);
      }
      StateVector x0 = encode(model, s0);
      return {std::move(model), s0, x0, x0};
    }
    case ModelSource::Kind::none:
      break;
  }
  throw UsageError("no model given (use --model, --cache or --lb)");
}

// ---- output ----------------------------------------------------------------

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string csv() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i > 0) out += ',';
        out += cells[i];
      }
      out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
  }
};

struct Report {
  nlohmann::json notes = nlohmann::json::object();  // method -> message
  nlohmann::json clamped = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();
  bool partial = false;

  void fail(const std::string& method, const std::string& message, std::ostream& err) {
    notes[method] = message;
    partial = true;
    err << "note: " << method << ": " << message << "\n";
  }
  void note(const std::string& method, const std::string& message, std::ostream& err) {
    notes[method] = message;
    err << "note: " << method << ": " << message << "\n";
  }
};

inline nlohmann::json config_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["command"] = cfg.command;
  switch (cfg.source.kind) {
    case ModelSource::Kind::file: j["model"] = {{"file", cfg.source.path}}; break;
    case ModelSource::Kind::cache:
      j["model"] = {{"cache", cfg.source.spec},
                    {"lambdas", cfg.source.cache->lambdas},
                    {"list_sizes", cfg.source.cache->list_sizes}};
      break;
    case ModelSource::Kind::lb:
      j["model"] = {{"lb", cfg.source.spec},
                    {"mus", cfg.source.lb->mus},
                    {"lambda", cfg.source.lb->lambda},
                    {"buffer", cfg.source.lb->buffer}};
      break;
    case ModelSource::Kind::none: break;
  }
  if (!cfg.init.empty()) j["init"] = cfg.init;
  j["methods"] = cfg.methods;
  if (!cfg.grid.empty()) j["grid"] = cfg.grid;
  j["replicas"] = cfg.replicas;
  j["seed"] = cfg.seed;
  j["events"] = cfg.events;
  j["warmup"] = cfg.warmup;
  j["batches"] = cfg.batches;
  j["rtol"] = cfg.rtol;
  j["atol"] = cfg.atol;
  j["state_cap"] = cfg.state_cap;
  if (cfg.command == "bench-cache") {
    j["n_list"] = cfg.n_list;
    j["alpha"] = cfg.alpha;
    j["occupancy"] = cfg.occupancy;
    j["lists"] = cfg.lists;
  }
  if (cfg.command == "bench-lb") {
    j["n_list"] = cfg.n_list;
    j["lambda"] = cfg.lambda;
    j["buffer"] = cfg.buffer;
    j["sim_buffer"] = cfg.sim_buffer;
    j["mix"] = cfg.mix;
    j["mix_seed"] = cfg.mix_seed;
    j["homogeneous"] = cfg.homogeneous;
  }
  return j;
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path);
  os << text;
}

// Writes name.csv for every table (stdout when no prefix is set; only the first
// table then) and a JSON sidecar next to them.
inline void emit(const RunConfig& cfg, const std::vector<std::pair<std::string, Table>>& tables, const Report& rep,
                 std::ostream& out) {
  nlohmann::json side;
  side["tool"] = "hetmf";
  side["version"] = kVersion;
  side["revision"] = HETMF_GIT_REVISION;
  side["config"] = config_json(cfg);
  side["status"] = rep.partial ? "partial" : "ok";
  side["notes"] = rep.notes;
  side["clamped"] = rep.clamped;
  for (const auto& [k, v] : rep.extra.items()) side[k] = v;
  if (cfg.out.empty()) {
    if (!tables.empty()) out << tables.front().second.csv();
    return;
  }
  nlohmann::json files = nlohmann::json::array();
  for (const auto& [name, table] : tables) {
    const std::string path = cfg.out + "_" + name + ".csv";
    write_file(path, table.csv());
    files.push_back(path);
  }
  side["files"] = files;
  write_file(cfg.out + "_" + cfg.command + ".json", side.dump(2) + "\n");
}

namespace detail {

inline std::size_t clamp_count(StateVector& x) {
  std::size_t c = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] < 0.0 || x[i] > 1.0) {
      x[i] = std::clamp(x[i], 0.0, 1.0);
      ++c;
    }
  }
  return c;
}

inline const double kBlank = std::nan("");

}  // namespace detail

// ---- commands --------------------------------------------------------------

inline int cmd_transient(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.grid.empty()) throw UsageError("transient needs a non-empty --grid");
  if (cfg.methods.count("exact")) throw UsageError("method 'exact' applies to the steady command only");
  const auto prob = make_problem(cfg);
  const auto& model = prob.model;
  const std::size_t T = cfg.grid.size();
  const OdeOptions ode{cfg.rtol, cfg.atol};
  Report rep;

  std::vector<StateVector> mf, refined, sim_mean, sim_hw, oracle;
  if (cfg.methods.count("mf") && !cfg.methods.count("refined")) {
    try {
      const auto traj = integrate(model, prob.x0, cfg.grid, ode);
      mf = traj.states;
      rep.clamped["mf"] = traj.clamped_entries;
    } catch (const Error& e) {
      rep.fail("mf", e.what(), err);
    }
  }
  if (cfg.methods.count("refined")) {
    try {
      RefinedOptions opt;
      opt.ode = ode;
      opt.store_w = false;
      const auto r = integrate_refined(model, prob.x0, cfg.grid, opt);
      if (cfg.methods.count("mf")) {
        mf = r.mean_field.states;
        rep.clamped["mf"] = r.mean_field.clamped_entries;
      }
      refined = r.refined;
      std::size_t c = 0;
      for (auto& x : refined) c += detail::clamp_count(x);
      rep.clamped["refined"] = c;
    } catch (const Error& e) {
      rep.fail("refined", e.what(), err);
      if (cfg.methods.count("mf")) {
        try {
          const auto traj = integrate(model, prob.x0, cfg.grid, ode);
          mf = traj.states;
          rep.clamped["mf"] = traj.clamped_entries;
        } catch (const Error& e2) {
          rep.fail("mf", e2.what(), err);
        }
      }
    }
  }
  if (cfg.methods.count("sim")) {
    try {
      const auto est = transient_mean(model, prob.s0, cfg.grid, cfg.replicas, cfg.seed, {cfg.threads});
      sim_mean = est.mean;
      sim_hw = est.half_width;
    } catch (const Error& e) {
      rep.fail("sim", e.what(), err);
    }
  }
  if (cfg.methods.count("oracle")) {
    try {
      oracle = transient_marginals(build_full_chain(model, cfg.state_cap), prob.s0, cfg.grid);
    } catch (const CapacityError& e) {
      rep.fail("oracle", std::string("cap exceeded (") + e.what() + ")", err);
    } catch (const Error& e) {
      rep.fail("oracle", e.what(), err);
    }
  }

  Table table;
  table.header = {"t", "object", "state", "mf", "refined", "sim_mean", "sim_ci_halfwidth", "oracle"};
  auto cell = [](const std::vector<StateVector>& v, std::size_t t, std::size_t i) {
    return v.empty() ? std::string() : detail::num(v[t][static_cast<Eigen::Index>(i)]);
  };
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < model.n(); ++k) {
      for (std::size_t s = 0; s < model.num_states(); ++s) {
        const std::size_t i = model.index(k, s);
        table.rows.push_back({detail::num(cfg.grid[t]), std::to_string(k + 1), model.states()[s], cell(mf, t, i),
                              cell(refined, t, i), cell(sim_mean, t, i), cell(sim_hw, t, i), cell(oracle, t, i)});
      }
    }
  }
  emit(cfg, {{"transient", table}}, rep, out);
  return rep.partial ? kPartial : kOk;
}

inline int cmd_steady(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto prob = make_problem(cfg);
  const auto& model = prob.model;
  Report rep;

  std::optional<StateVector> mf, refined, sim_mean, sim_hw, exact, oracle;
  std::optional<FixedPointResult> fp;
  if (cfg.methods.count("mf") || cfg.methods.count("refined")) {
    try {
      fp = fixed_point(model, prob.fp_start);
      if (fp->multiple_equilibria_suspected) rep.note("mf", fp->note, err);
      if (cfg.methods.count("mf")) mf = fp->x;
    } catch (const Error& e) {
      rep.fail("mf", e.what(), err);
    }
  }
  if (cfg.methods.count("refined")) {
    if (!fp) {
      rep.fail("refined", "no fixed point", err);
    } else {
      try {
        const auto steady = refined_steady_state(model, fp->x);
        refined = StateVector(fp->x + steady.state.v);
        rep.extra["spectral_abscissa"] = steady.spectral_abscissa;
      } catch (const StabilityError& e) {
        rep.fail("refined", std::string("not Hurwitz: ") + e.what(), err);
      } catch (const Error& e) {
        rep.fail("refined", e.what(), err);
      }
    }
  }
  if (cfg.methods.count("sim")) {
    try {
      const auto est = steady_state_mean(model, prob.s0, cfg.warmup, cfg.events, cfg.seed, {cfg.batches});
      sim_mean = est.mean.front();
      sim_hw = est.half_width.front();
      if (est.absorbed) rep.note("sim", "chain reached an absorbing state", err);
    } catch (const Error& e) {
      rep.fail("sim", e.what(), err);
    }
  }
  if (cfg.methods.count("exact")) {
    if (cfg.source.kind != ModelSource::Kind::cache) {
      rep.note("exact", "only available for cache models", err);
    } else {
      try {
        exact = cache::exact_steady_state(*cfg.source.cache);
      } catch (const Error& e) {
        rep.fail("exact", e.what(), err);
      }
    }
  }
  if (cfg.methods.count("oracle")) {
    try {
      oracle = stationary_marginals(build_full_chain(model, cfg.state_cap), prob.s0);
    } catch (const CapacityError& e) {
      rep.fail("oracle", std::string("cap exceeded (") + e.what() + ")", err);
    } catch (const Error& e) {
      rep.fail("oracle", e.what(), err);
    }
  }
  std::size_t c_mf = 0, c_ref = 0;
  if (mf) c_mf = detail::clamp_count(*mf);
  if (refined) c_ref = detail::clamp_count(*refined);
  if (cfg.methods.count("mf")) rep.clamped["mf"] = c_mf;
  if (cfg.methods.count("refined")) rep.clamped["refined"] = c_ref;

  Table table;
  table.header = {"object", "state", "mf", "refined", "sim_mean", "sim_ci_halfwidth", "exact", "oracle"};
  auto cell = [](const std::optional<StateVector>& v, std::size_t i) {
    return v ? detail::num((*v)[static_cast<Eigen::Index>(i)]) : std::string();
  };
  for (std::size_t k = 0; k < model.n(); ++k) {
    for (std::size_t s = 0; s < model.num_states(); ++s) {
      const std::size_t i = model.index(k, s);
      table.rows.push_back({std::to_string(k + 1), model.states()[s], cell(mf, i), cell(refined, i), cell(sim_mean, i),
                            cell(sim_hw, i), cell(exact, i), cell(oracle, i)});
    }
  }
  // Summary row: per-object error against the exact recurrence (or the oracle).
  const std::optional<StateVector>& truth = exact ? exact : oracle;
  if (truth && cfg.source.kind == ModelSource::Kind::cache) {
    const std::size_t n = model.n();
    auto err_of = [&](const std::optional<StateVector>& v) {
      return v ? detail::num(cache::cache_error(*v, *truth, n)) : std::string();
    };
    table.rows.push_back({"summary", "cache_error", err_of(mf), err_of(refined), err_of(sim_mean), "",
                          exact ? "0" : "", oracle ? err_of(oracle) : ""});
    nlohmann::json errors = nlohmann::json::object();
    if (mf) errors["mf"] = cache::cache_error(*mf, *truth, n);
    if (refined) errors["refined"] = cache::cache_error(*refined, *truth, n);
    if (sim_mean) errors["sim"] = cache::cache_error(*sim_mean, *truth, n);
    if (exact && oracle) errors["oracle_vs_exact_max_abs"] = (*exact - *oracle).lpNorm<Eigen::Infinity>();
    rep.extra["cache_error"] = errors;
  }
  emit(cfg, {{"steady", table}}, rep, out);
  return rep.partial ? kPartial : kOk;
}

inline int cmd_bench_cache(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  Report rep;
  Table table;
  table.header = {"n", "mf", "refined", "sim", "sim_ci_halfwidth", "n_x_mf", "n2_x_refined", "n_x_sim"};
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t n : cfg.n_list) {
    const std::string tag = "n=" + std::to_string(n);
    double e_mf = detail::kBlank, e_ref = detail::kBlank, e_sim = detail::kBlank, hw_sim = detail::kBlank;
    try {
      const auto cc = cache::zipf_config(n, cfg.alpha, cfg.occupancy, cfg.lists);
      cache::check_config(cc);
      const auto model = cache::build_random_m(cc);
      const auto exact = cache::exact_steady_state(cc);
      if (cfg.methods.count("mf") || cfg.methods.count("refined")) {
        const auto fp = fixed_point(model, cache::occupancy_state(cc));
        StateVector x = fp.x;
        detail::clamp_count(x);
        e_mf = cache::cache_error(x, exact, n);
        if (cfg.methods.count("refined")) {
          StateVector r = fp.x + refined_steady_state(model, fp.x).state.v;
          detail::clamp_count(r);
          e_ref = cache::cache_error(r, exact, n);
        }
      }
      if (cfg.methods.count("sim")) {
        const auto est = steady_state_mean(model, cache::default_assignment(cc), cfg.warmup, cfg.events, cfg.seed,
                                           {cfg.batches});
        const auto ci = batch_functional(est, [&](const StateVector& x) { return cache::cache_error(x, exact, n); });
        e_sim = ci.mean;
        hw_sim = ci.half_width;
      }
    } catch (const Error& e) {
      rep.fail(tag, e.what(), err);
    }
    const double nn = static_cast<double>(n);
    if (!cfg.methods.count("mf")) e_mf = detail::kBlank;
    table.rows.push_back({std::to_string(n), detail::num(e_mf), detail::num(e_ref), detail::num(e_sim),
                          detail::num(hw_sim), detail::num(nn * e_mf), detail::num(nn * nn * e_ref),
                          detail::num(nn * e_sim)});
    nlohmann::json row{{"n", n}};
    if (!std::isnan(e_mf)) row["mf"] = e_mf;
    if (!std::isnan(e_ref)) row["refined"] = e_ref;
    if (!std::isnan(e_sim)) row["sim"] = {{"mean", e_sim}, {"ci_halfwidth", hw_sim}};
    rows.push_back(row);
  }
  rep.extra["rows"] = rows;
  emit(cfg, {{"bench_cache", table}}, rep, out);
  return rep.partial ? kPartial : kOk;
}

inline int cmd_bench_lb(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  Report rep;
  Table errors, tails;
  errors.header = {"n", "method", "error"};
  tails.header = {"n", "s", "method", "value"};
  nlohmann::json queue = nlohmann::json::array();
  for (std::size_t n : cfg.n_list) {
    const std::string tag = "n=" + std::to_string(n);
    try {
      const lb::LBConfig het{make_mix(cfg.mix, n, cfg.mix_seed), cfg.lambda, cfg.buffer};
      lb::check_config(het);
      lb::LBConfig sim_cfg = het;
      sim_cfg.buffer = cfg.sim_buffer;
      const auto sim_model = lb::build_two_choice(sim_cfg);
      const auto est = steady_state_mean(sim_model, ObjectAssignment(n, 0), cfg.warmup, cfg.events, cfg.seed,
                                         {cfg.batches});
      const StateVector& truth = est.mean.front();
      const auto avg = batch_functional(est, [&](const StateVector& x) { return lb::average_queue_length(x, n); });
      const auto top = lb::tail_distribution(truth, n).back();
      if (top > 1e-9) rep.note(tag, "simulated tail mass at the buffer is " + detail::num(top), err);

      nlohmann::json q{{"n", n}, {"sim", {{"mean", avg.mean}, {"ci_halfwidth", avg.half_width}}}};
      auto add_tail = [&](const std::string& method, const StateVector& x) {
        const auto t = lb::tail_distribution(x, n);
        for (std::size_t s = 0; s < t.size(); ++s) {
          tails.rows.push_back({std::to_string(n), std::to_string(s), method, detail::num(t[s])});
        }
      };
      add_tail("sim", truth);

      auto approximate = [&](const lb::LBConfig& c, const std::string& suffix) {
        const auto model = lb::build_two_choice(c);
        const auto fp = fixed_point(model, encode(model, ObjectAssignment(n, 0)));
        StateVector mf = fp.x;
        StateVector ref = fp.x + refined_steady_state(model, fp.x).state.v;
        const std::size_t clamped = detail::clamp_count(mf) + detail::clamp_count(ref);
        rep.clamped[tag + suffix] = clamped;
        for (const auto& [name, x] : {std::pair<std::string, const StateVector&>{"mf" + suffix, mf},
                                      std::pair<std::string, const StateVector&>{"refined" + suffix, ref}}) {
          errors.rows.push_back({std::to_string(n), name, detail::num(lb::steady_error(truth, x, n))});
          add_tail(name, x);
          q[name] = lb::average_queue_length(x, n);
        }
      };
      approximate(het, "");
      if (cfg.homogeneous) approximate(lb::homogeneous_baseline(het), "_homogeneous");
      queue.push_back(q);
    } catch (const Error& e) {
      rep.fail(tag, e.what(), err);
    }
  }
  rep.extra["average_queue_length"] = queue;
  emit(cfg, {{"lb_errors", errors}, {"lb_tails", tails}}, rep, out);
  return rep.partial ? kPartial : kOk;
}

// ---- entry point -------------------------------------------------------------

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mean-field and refined mean-field analysis of heterogeneous population models", "hetmf"};
  app.set_version_flag("--version", std::string(kVersion) + " (" + HETMF_GIT_REVISION + ")");
  app.require_subcommand(1);

  RunConfig cfg;
  std::string model_file, cache_spec, lb_spec, methods, grid, init, n_list;

  auto add_source = [&](CLI::App* sub) {
    auto* m = sub->add_option("--model", model_file, "model JSON file");
    auto* c = sub->add_option("--cache", cache_spec, "cache builder: n,alpha,m1[,m2,...]");
    auto* l = sub->add_option("--lb", lb_spec, "two-choice builder: n,lambda,b,mix (strong|light|flat|mu1:mu2:...)");
    m->excludes(c, l);
    c->excludes(l);
    sub->add_option("--init", init, "initial state labels for --model, comma separated");
    sub->add_option("--mix-seed", cfg.mix_seed, "seed of the sampled server speeds");
  };
  std::map<const CLI::App*, std::string> default_methods_of;
  auto add_common = [&](CLI::App* sub, const std::string& default_methods) {
    sub->add_option("--methods", methods, "comma list of mf,refined,sim,exact,oracle")->default_str(default_methods);
    sub->add_option("--seed", cfg.seed, "simulation seed");
    sub->add_option("--out", cfg.out, "output file prefix (CSV to stdout if omitted)");
    sub->add_option("--threads", cfg.threads, "simulation threads (0: automatic)");
    sub->add_option("--events", cfg.events, "measured events for time averages");
    sub->add_option("--warmup", cfg.warmup, "discarded events before measuring");
    sub->add_option("--batches", cfg.batches, "batches for the time-average confidence interval");
    default_methods_of[sub] = default_methods;
  };

  auto* transient = app.add_subcommand("transient", "trajectories on a time grid");
  add_source(transient);
  add_common(transient, "mf,refined");
  transient->add_option("--grid", grid, "t0:t1:steps")->required();
  transient->add_option("--replicas", cfg.replicas, "simulation replicas");
  transient->add_option("--rtol", cfg.rtol, "ODE relative tolerance");
  transient->add_option("--atol", cfg.atol, "ODE absolute tolerance");
  transient->add_option("--cap", cfg.state_cap, "oracle state cap");

  auto* steady = app.add_subcommand("steady", "steady-state estimates");
  add_source(steady);
  add_common(steady, "mf,refined");
  steady->add_option("--cap", cfg.state_cap, "oracle state cap");

  auto* bench_cache = app.add_subcommand("bench-cache", "per-object error table for Zipf caches");
  add_common(bench_cache, "mf,refined");
  bench_cache->add_option("--n-list", n_list, "comma list of n (default 10,20,30,40,50)");
  bench_cache->add_option("--alpha", cfg.alpha, "Zipf exponent");
  bench_cache->add_option("--occupancy", cfg.occupancy, "list size as a fraction of n");
  bench_cache->add_option("--lists", cfg.lists, "number of lists");

  auto* bench_lb = app.add_subcommand("bench-lb", "heterogeneous vs homogeneous two-choice errors and tails");
  add_common(bench_lb, "mf,refined,sim");
  bench_lb->add_option("--n-list", n_list, "comma list of n (default 10,20,30,40)");
  bench_lb->add_option("--lambda", cfg.lambda, "arrival rate per server");
  bench_lb->add_option("--buffer", cfg.buffer, "buffer of the approximations");
  bench_lb->add_option("--sim-buffer", cfg.sim_buffer, "buffer of the simulated system");
  bench_lb->add_option("--mix", cfg.mix, "server speeds: strong | light | flat | mu1:mu2:...");
  bench_lb->add_option("--mix-seed", cfg.mix_seed, "seed of the sampled server speeds");
  bench_lb->add_flag("--homogeneous,!--no-homogeneous", cfg.homogeneous, "include the homogeneous baseline");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kOk : kFatal;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    cfg.command = sub->get_name();
    cfg.methods = parse_methods(sub->count("--methods") ? methods : default_methods_of.at(sub));
    if (!model_file.empty()) {
      cfg.source.kind = ModelSource::Kind::file;
      cfg.source.path = model_file;
      cfg.source.spec = model_file;
    } else if (!cache_spec.empty()) {
      cfg.source.kind = ModelSource::Kind::cache;
      cfg.source.cache = parse_cache(cache_spec);
      cfg.source.spec = cache_spec;
    } else if (!lb_spec.empty()) {
      cfg.source.kind = ModelSource::Kind::lb;
      cfg.source.lb = parse_lb(lb_spec, cfg.mix_seed);
      cfg.source.spec = lb_spec;
    }
    if (!init.empty()) {
      if (cfg.source.kind != ModelSource::Kind::file) throw UsageError("--init applies to --model only");
      cfg.init = detail::split(init, ',');
    }
    if (cfg.command == "transient") cfg.grid = parse_grid(grid);
    if (cfg.command == "bench-lb" && n_list.empty()) n_list = "10,20,30,40";
    if (!n_list.empty()) {
      cfg.n_list.clear();
      for (const auto& p : detail::split(n_list, ',')) cfg.n_list.push_back(detail::to_size(p, "--n-list"));
      if (cfg.n_list.empty()) throw UsageError("--n-list is empty");
    }
    if (cfg.methods.count("sim") && cfg.command == "transient" && cfg.replicas < 2) {
      throw UsageError("--replicas must be at least 2");
    }
    if (cfg.methods.count("sim") && cfg.command != "transient" && cfg.events == 0) {
      throw UsageError("--events must be positive");
    }
    if (cfg.command == "bench-lb" && !cfg.methods.count("sim")) {
      throw UsageError("bench-lb measures errors against simulation; keep 'sim' in --methods");
    }

    if (cfg.command == "transient") return cmd_transient(cfg, out, err);
    if (cfg.command == "steady") return cmd_steady(cfg, out, err);
    if (cfg.command == "bench-cache") return cmd_bench_cache(cfg, out, err);
    return cmd_bench_lb(cfg, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kFatal;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFatal;
  }
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(std::move(args), out, err);
}

}  // namespace hetmf::cli
