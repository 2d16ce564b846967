#pragma once

#include <cstdio>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mfc/errors.hpp"
#include "mfc/model.hpp"

namespace mfc {

namespace detail {

using json = nlohmann::ordered_json;

inline std::string fmt_label(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

inline const json& require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(std::string("missing field '") + key + "'");
  return *it;
}

inline std::vector<double> number_array(const json& j, const char* what) {
  if (!j.is_array() || j.empty())
    throw SchemaError(std::string(what) + " must be a nonempty array of numbers");
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw SchemaError(std::string(what) + " must contain numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

inline std::vector<int> int_array(const json& j, const char* what) {
  std::vector<int> out;
  for (double v : number_array(j, what)) out.push_back(static_cast<int>(v));
  return out;
}

inline Matrix matrix(const json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw SchemaError(std::string(what) + " must be a matrix");
  Matrix m;
  for (const auto& row : j) m.push_back(number_array(row, what));
  return m;
}

// Object keyed by consecutive integer indices "0".."n-1".
inline std::vector<double> indexed_object(const json& j, int n, const char* what) {
  if (!j.is_object()) throw SchemaError(std::string(what) + " must be an object");
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    auto it = j.find(std::to_string(i));
    if (it == j.end())
      throw SchemaError(std::string(what) + " missing entry '" + std::to_string(i) + "'");
    out[i] = it->get<double>();
  }
  if (static_cast<int>(j.size()) != n)
    throw SchemaError(std::string(what) + " has extra entries");
  return out;
}

// Object keyed by labels, resolved against a label list.
inline std::vector<double> label_keyed_object(const json& j, const std::vector<double>& labels,
                                              const char* what) {
  if (!j.is_object()) throw SchemaError(std::string(what) + " must be an object");
  std::vector<double> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = j.find(fmt_label(labels[i]));
    if (it == j.end())
      throw SchemaError(std::string(what) + " missing entry '" + fmt_label(labels[i]) + "'");
    out[i] = it->get<double>();
  }
  return out;
}

inline std::vector<Matrix> action_keyed_matrices(const json& j, int num_actions,
                                                 const char* what) {
  if (!j.is_object()) throw SchemaError(std::string(what) + " must map actions to matrices");
  std::vector<Matrix> out(num_actions);
  for (int u = 0; u < num_actions; ++u) {
    auto it = j.find(std::to_string(u));
    if (it == j.end())
      throw SchemaError(std::string(what) + " missing matrix for action " + std::to_string(u));
    out[u] = matrix(*it, what);
  }
  return out;
}

}  // namespace detail

inline ModelSpec parse_spec(const std::string& text) {
  namespace dj = detail;
  dj::json j;
  try {
    j = dj::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("invalid model document: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError("model document must be an object");

  ModelSpec spec;

  auto populations = dj::int_array(dj::require(j, "population"), "population");
  auto state_counts = dj::int_array(dj::require(j, "minor_states"), "minor_states");
  auto action_counts = dj::int_array(dj::require(j, "minor_actions"), "minor_actions");
  if (populations.size() != state_counts.size() || populations.size() != action_counts.size())
    throw SchemaError("population mismatch: population, minor_states and minor_actions must "
                      "have one entry per type");
  const int k = static_cast<int>(populations.size());
  for (int t = 0; t < k; ++t)
    spec.types.push_back(TypeBlock{populations[t], state_counts[t], action_counts[t]});

  if (j.contains("major")) {
    const auto& m = j["major"];
    spec.has_major = true;
    spec.major_state_labels = dj::number_array(dj::require(m, "states"), "major.states");
    spec.major_action_labels = dj::number_array(dj::require(m, "actions"), "major.actions");
    spec.num_major_states = static_cast<int>(spec.major_state_labels.size());
    spec.num_major_actions = static_cast<int>(spec.major_action_labels.size());
    const auto& mk = dj::require(m, "kernel");
    const std::string type = dj::require(mk, "type").get<std::string>();
    if (type == "deterministic_set") {
      if (spec.num_major_states != spec.num_major_actions ||
          spec.major_state_labels != spec.major_action_labels)
        throw SchemaError("deterministic_set major kernel needs matching state/action sets");
      spec.major_kernel = make_deterministic_set_major(spec.num_major_states);
    } else if (type == "table") {
      MajorTableDecl decl;
      decl.per_action = dj::action_keyed_matrices(dj::require(mk, "P"), spec.num_major_actions,
                                                  "major kernel P");
      spec.major_kernel = make_table_major(std::move(decl), spec.num_major_states,
                                           spec.num_major_actions);
    } else {
      throw SchemaError("unknown major kernel type '" + type + "'");
    }
  } else {
    spec.major_kernel = make_sentinel_major();
  }

  {
    const auto& mk = dj::require(j, "minor_kernel");
    const std::string type = dj::require(mk, "type").get<std::string>();
    if (type == "table") {
      TableKernelDecl decl;
      const auto& p = dj::require(mk, "P");
      if (p.is_array()) {
        if (static_cast<int>(p.size()) != k)
          throw SchemaError("minor kernel P must have one entry per type");
        for (int t = 0; t < k; ++t)
          decl.per_type.push_back(
              dj::action_keyed_matrices(p[t], spec.types[t].num_actions, "minor kernel P"));
      } else {
        if (k != 1) throw SchemaError("minor kernel P must be a per-type array for multi-type models");
        decl.per_type.push_back(
            dj::action_keyed_matrices(p, spec.types[0].num_actions, "minor kernel P"));
      }
      spec.minor_kernels.push_back(make_table_kernel(std::move(decl), spec.types));
    } else if (type == "forced_mix") {
      if (k != 1) throw SchemaError("forced_mix kernel requires a single type");
      Matrix q = dj::matrix(dj::require(mk, "Q"), "minor kernel Q");
      const int d = static_cast<int>(q.size());
      if (spec.types[0].num_states != d)
        throw SchemaError("forced_mix Q size does not match minor_states");
      if (spec.types[0].num_actions != d + 1)
        throw SchemaError("forced_mix kernel implies " + std::to_string(d + 1) +
                          " minor actions (free + one forcing action per state)");
      std::vector<double> eps(d);
      const auto& e = dj::require(mk, "epsilon");
      for (int u = 1; u <= d; ++u) {
        auto it = e.find(std::to_string(u));
        if (it == e.end())
          throw SchemaError("epsilon missing entry '" + std::to_string(u) + "'");
        eps[u - 1] = it->get<double>();
      }
      spec.minor_kernels.push_back(build_forced_mix_kernel(q, eps));
    } else {
      throw SchemaError("unknown minor kernel type '" + type + "'");
    }
  }

  {
    const auto& c = dj::require(j, "cost");
    const std::string type = dj::require(c, "type").get<std::string>();
    if (type == "capacity_service") {
      if (!spec.has_major) throw SchemaError("capacity_service cost requires a major block");
      if (k != 1 || spec.types[0].num_states != 2)
        throw SchemaError("capacity_service cost requires a single 2-state type");
      CapacityServiceDecl decl;
      decl.supply_cost = dj::label_keyed_object(dj::require(c, "S"), spec.major_action_labels,
                                                "cost S");
      decl.adjust_rate = dj::require(c, "a").get<double>();
      decl.benefit_rate = dj::require(c, "b").get<double>();
      decl.shortage_rate = dj::require(c, "c").get<double>();
      decl.action_cost = dj::indexed_object(dj::require(c, "H"), spec.types[0].num_actions,
                                            "cost H");
      spec.costs.push_back(make_capacity_service_cost(std::move(decl), spec.major_state_labels,
                                                      spec.major_action_labels));
    } else if (type == "separable") {
      SeparableDecl decl;
      const auto& h = dj::require(c, "H");
      if (h.is_array()) {
        if (static_cast<int>(h.size()) != k)
          throw SchemaError("separable cost H must have one entry per type");
        for (int t = 0; t < k; ++t)
          decl.action_cost.push_back(
              dj::indexed_object(h[t], spec.types[t].num_actions, "cost H"));
      } else {
        if (k != 1) throw SchemaError("separable cost H must be a per-type array for multi-type models");
        decl.action_cost.push_back(
            dj::indexed_object(h, spec.types[0].num_actions, "cost H"));
      }
      if (c.contains("major")) {
        decl.major = dj::matrix(c["major"], "cost major");
        if (static_cast<int>(decl.major.size()) != spec.num_major_states)
          throw SchemaError("cost major table has wrong row count");
        for (const auto& row : decl.major)
          if (static_cast<int>(row.size()) != spec.num_major_actions)
            throw SchemaError("cost major table has wrong column count");
      }
      std::vector<TypeId> type_of;
      for (int t = 0; t < k; ++t)
        type_of.insert(type_of.end(), spec.types[t].num_states, t);
      spec.costs.push_back(make_separable_cost(std::move(decl), std::move(type_of)));
    } else if (type == "table") {
      TableCostDecl decl;
      const auto& values = dj::require(c, "values");
      for (const auto& per_state : values) {
        decl.values.emplace_back();
        for (const auto& per_major : per_state) {
          decl.values.back().emplace_back();
          for (const auto& per_gamma : per_major)
            decl.values.back().back().push_back(dj::number_array(per_gamma, "cost values"));
        }
      }
      std::vector<int> radix;
      for (int x = 0; x < spec.flat_states(); ++x) radix.push_back(spec.actions_at(x));
      std::uint64_t num_gamma = 1;
      for (int r : radix) num_gamma *= static_cast<std::uint64_t>(r);
      const Lattice lat(spec.population(), spec.flat_states());
      if (decl.values.size() != lat.size())
        throw SchemaError("cost table has wrong lattice dimension");
      for (const auto& per_state : decl.values) {
        if (static_cast<int>(per_state.size()) != spec.num_major_states)
          throw SchemaError("cost table has wrong major-state dimension");
        for (const auto& per_major : per_state) {
          if (per_major.size() != num_gamma)
            throw SchemaError("cost table has wrong prescription dimension");
          for (const auto& per_gamma : per_major)
            if (static_cast<int>(per_gamma.size()) != spec.num_major_actions)
              throw SchemaError("cost table has wrong major-action dimension");
        }
      }
      spec.costs.push_back(make_table_cost(std::move(decl), spec.population(), std::move(radix)));
    } else {
      throw SchemaError("unknown cost type '" + type + "'");
    }
  }

  {
    const auto& o = dj::require(j, "objective");
    if (o.contains("finite_horizon")) {
      spec.objective = Objective::finite(o["finite_horizon"].get<int>());
    } else if (o.contains("discounted")) {
      const auto& d = o["discounted"];
      spec.objective = Objective::discounted(dj::require(d, "beta").get<double>(),
                                             dj::require(d, "tol").get<double>());
    } else {
      throw SchemaError("objective must be finite_horizon or discounted");
    }
  }

  spec.validate();
  return spec;
}

inline std::string serialize_spec(const ModelSpec& spec) {
  namespace dj = detail;
  dj::json j;
  {
    dj::json pop = dj::json::array(), st = dj::json::array(), ac = dj::json::array();
    for (const auto& t : spec.types) {
      pop.push_back(t.population);
      st.push_back(t.num_states);
      ac.push_back(t.num_actions);
    }
    j["population"] = pop;
    j["minor_states"] = st;
    j["minor_actions"] = ac;
  }
  if (spec.has_major) {
    dj::json m;
    m["states"] = spec.major_state_labels;
    m["actions"] = spec.major_action_labels;
    if (std::holds_alternative<DeterministicSetDecl>(spec.major_kernel.decl)) {
      m["kernel"] = {{"type", "deterministic_set"}};
    } else if (const auto* t = std::get_if<MajorTableDecl>(&spec.major_kernel.decl)) {
      dj::json p;
      for (int u = 0; u < spec.num_major_actions; ++u) p[std::to_string(u)] = t->per_action[u];
      m["kernel"] = {{"type", "table"}, {"P", p}};
    } else {
      throw SchemaError("cannot serialize a programmatic major kernel");
    }
    j["major"] = m;
  }
  {
    const auto& decl = spec.minor_kernels.front().decl;
    if (const auto* t = std::get_if<TableKernelDecl>(&decl)) {
      if (spec.types.size() == 1) {
        dj::json p;
        for (std::size_t u = 0; u < t->per_type[0].size(); ++u)
          p[std::to_string(u)] = t->per_type[0][u];
        j["minor_kernel"] = {{"type", "table"}, {"P", p}};
      } else {
        dj::json per_type = dj::json::array();
        for (const auto& mats : t->per_type) {
          dj::json p;
          for (std::size_t u = 0; u < mats.size(); ++u) p[std::to_string(u)] = mats[u];
          per_type.push_back(p);
        }
        j["minor_kernel"] = {{"type", "table"}, {"P", per_type}};
      }
    } else if (const auto* f = std::get_if<ForcedMixDecl>(&decl)) {
      dj::json eps;
      for (std::size_t u = 1; u <= f->epsilon.size(); ++u)
        eps[std::to_string(u)] = f->epsilon[u - 1];
      j["minor_kernel"] = {{"type", "forced_mix"}, {"Q", f->q}, {"epsilon", eps}};
    } else {
      throw SchemaError("cannot serialize a programmatic minor kernel");
    }
  }
  {
    const auto& decl = spec.costs.front().decl;
    if (const auto* c = std::get_if<CapacityServiceDecl>(&decl)) {
      dj::json s, h;
      for (int u = 0; u < spec.num_major_actions; ++u)
        s[dj::fmt_label(spec.major_action_labels[u])] = c->supply_cost[u];
      for (std::size_t u = 0; u < c->action_cost.size(); ++u)
        h[std::to_string(u)] = c->action_cost[u];
      j["cost"] = {{"type", "capacity_service"}, {"S", s},        {"a", c->adjust_rate},
                   {"b", c->benefit_rate},       {"c", c->shortage_rate}, {"H", h}};
    } else if (const auto* sep = std::get_if<SeparableDecl>(&decl)) {
      dj::json cost = {{"type", "separable"}};
      if (spec.types.size() == 1) {
        dj::json h;
        for (std::size_t u = 0; u < sep->action_cost[0].size(); ++u)
          h[std::to_string(u)] = sep->action_cost[0][u];
        cost["H"] = h;
      } else {
        dj::json per_type = dj::json::array();
        for (const auto& costs : sep->action_cost) {
          dj::json h;
          for (std::size_t u = 0; u < costs.size(); ++u) h[std::to_string(u)] = costs[u];
          per_type.push_back(h);
        }
        cost["H"] = per_type;
      }
      if (!sep->major.empty()) cost["major"] = sep->major;
      j["cost"] = cost;
    } else if (const auto* t = std::get_if<TableCostDecl>(&decl)) {
      j["cost"] = {{"type", "table"}, {"values", t->values}};
    } else {
      throw SchemaError("cannot serialize a programmatic cost");
    }
  }
  if (spec.objective.kind == Objective::Kind::FiniteHorizon) {
    j["objective"] = {{"finite_horizon", spec.objective.horizon}};
  } else {
    j["objective"] = {{"discounted", {{"beta", spec.objective.beta}, {"tol", spec.objective.tol}}}};
  }
  return j.dump(2) + "\n";
}

// Structural equality over the declarative content (kernels and costs are
// compared by their declarations; programmatic models compare unequal).
inline bool spec_equal(const ModelSpec& a, const ModelSpec& b) {
  if (a.types != b.types || a.has_major != b.has_major ||
      a.num_major_states != b.num_major_states ||
      a.num_major_actions != b.num_major_actions ||
      a.major_state_labels != b.major_state_labels ||
      a.major_action_labels != b.major_action_labels ||
      a.objective != b.objective || a.per_state_actions != b.per_state_actions)
    return false;
  if (a.minor_kernels.size() != b.minor_kernels.size() || a.costs.size() != b.costs.size())
    return false;
  auto decl_ok = [](const auto& da, const auto& db) {
    return !std::holds_alternative<std::monostate>(da) && da == db;
  };
  for (std::size_t i = 0; i < a.minor_kernels.size(); ++i)
    if (!decl_ok(a.minor_kernels[i].decl, b.minor_kernels[i].decl)) return false;
  if (a.has_major && !decl_ok(a.major_kernel.decl, b.major_kernel.decl)) return false;
  for (std::size_t i = 0; i < a.costs.size(); ++i)
    if (!decl_ok(a.costs[i].decl, b.costs[i].decl)) return false;
  return true;
}

}  // namespace mfc
