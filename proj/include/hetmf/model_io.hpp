#pragma once

#include "hetmf/error.hpp"
#include "hetmf/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace hetmf {

inline constexpr int kSchemaVersion = 1;

inline nlohmann::json model_to_json(const ModelSpec& model) {
  nlohmann::json j;
  j["hetmf_schema"] = kSchemaVersion;
  j["n"] = model.n();
  j["states"] = model.states();
  if (auto hint = model.rate_bound_hint()) {
    j["rate_bound_hint"] = *hint;
  } else {
    j["rate_bound_hint"] = nullptr;
  }
  auto rules = nlohmann::json::array();
  for (const auto& rule : model.rules()) {
    auto parts = nlohmann::json::array();
    for (const auto& p : rule.participants) {
      parts.push_back({{"object", p.object + 1}, {"from", model.states()[p.from]}, {"to", model.states()[p.to]}});
    }
    rules.push_back({{"rate", rule.rate}, {"participants", std::move(parts)}});
  }
  j["rules"] = std::move(rules);
  return j;
}

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw SchemaError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(where + ": missing required key \"" + key + "\"");
  return *it;
}

inline std::size_t positive_index(const nlohmann::json& v, const std::string& where) {
  if (!v.is_number_integer()) throw SchemaError(where + ": expected an integer");
  const auto i = v.get<long long>();
  if (i < 1) throw SchemaError(where + ": expected a positive integer");
  return static_cast<std::size_t>(i);
}

}  // namespace detail

// Parses and validates; throws SchemaError on any violation.
inline ModelSpec model_from_json(const nlohmann::json& j) {
  using detail::require;
  if (!j.is_object()) throw SchemaError("model: top level must be an object");
  if (auto it = j.find("hetmf_schema"); it != j.end()) {
    if (!it->is_number_integer() || it->get<int>() != kSchemaVersion) {
      throw SchemaError("model: unsupported hetmf_schema version");
    }
  }
  const std::size_t n = detail::positive_index(require(j, "n", "model"), "model.n");
  const auto& jstates = require(j, "states", "model");
  if (!jstates.is_array()) throw SchemaError("model.states: expected an array of strings");
  std::vector<std::string> states;
  for (const auto& s : jstates) {
    if (!s.is_string()) throw SchemaError("model.states: expected an array of strings");
    states.push_back(s.get<std::string>());
  }
  std::optional<double> hint;
  if (auto it = j.find("rate_bound_hint"); it != j.end() && !it->is_null()) {
    if (!it->is_number()) throw SchemaError("model.rate_bound_hint: expected a number or null");
    hint = it->get<double>();
  }
  const auto& jrules = require(j, "rules", "model");
  if (!jrules.is_array()) throw SchemaError("model.rules: expected an array");

  std::optional<ModelSpec> model;
  try {
    model.emplace(n, std::move(states), std::vector<TransitionRule>{}, hint);
  } catch (const ModelError& e) {
    throw SchemaError(std::string("model: ") + e.what());
  }

  for (std::size_t i = 0; i < jrules.size(); ++i) {
    const std::string where = "model.rules[" + std::to_string(i) + "]";
    const auto& jr = jrules[i];
    const auto& jrate = require(jr, "rate", where);
    if (!jrate.is_number()) throw SchemaError(where + ".rate: expected a number");
    const auto& jparts = require(jr, "participants", where);
    if (!jparts.is_array()) throw SchemaError(where + ".participants: expected an array");
    TransitionRule rule;
    rule.rate = jrate.get<double>();
    for (std::size_t p = 0; p < jparts.size(); ++p) {
      const std::string pw = where + ".participants[" + std::to_string(p) + "]";
      const auto& jp = jparts[p];
      const std::size_t obj = detail::positive_index(require(jp, "object", pw), pw + ".object");
      const auto& jfrom = require(jp, "from", pw);
      const auto& jto = require(jp, "to", pw);
      if (!jfrom.is_string() || !jto.is_string()) throw SchemaError(pw + ": from/to must be state labels");
      try {
        rule.participants.push_back({obj - 1, model->state_index(jfrom.get<std::string>()),
                                     model->state_index(jto.get<std::string>())});
      } catch (const ModelError& e) {
        throw SchemaError(pw + ": " + e.what());
      }
    }
    try {
      *model = add_rule(std::move(*model), std::move(rule));
    } catch (const ModelError& e) {
      throw SchemaError(where + ": " + e.what());
    }
  }
  return std::move(*model);
}

inline ModelSpec load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open model file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("malformed model file " + path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

inline void save_model(const ModelSpec& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write model file " + path.string());
  out << model_to_json(model).dump(2) << '\n';
}

}  // namespace hetmf
