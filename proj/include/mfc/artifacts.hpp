#pragma once

// File artifacts of the CLI: value/policy tables as CSV (fixed column and row
// order, 17 significant digits), the threshold presentation of 2-state
// policies, tidy plot data, run manifests, and policy reload.

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfc/errors.hpp"
#include "mfc/model.hpp"
#include "mfc/solver.hpp"
#include "mfc/version.hpp"

namespace mfc {

namespace detail {

inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline void write_values_csv(std::ostream& os, const ModelSpec& spec, const StateSpace& states,
                             std::span<const ValueTable> values) {
  const int d = spec.flat_states();
  const int M = spec.num_major_states;
  const bool staged = values.size() > 1;
  if (staged) os << "stage,";
  os << "lattice_index";
  for (int x = 0; x < d; ++x) os << ",count_" << x;
  os << ",major_state,V\n";
  for (std::size_t s = 0; s < values.size(); ++s) {
    for (std::uint64_t i = 0; i < states.size(); ++i) {
      const MeanField z = states.point(i);
      for (int x0 = 0; x0 < M; ++x0) {
        if (staged) os << (s + 1) << ',';
        os << i;
        for (int x = 0; x < d; ++x) os << ',' << z.counts[x];
        os << ',' << x0 << ',' << detail::fmt17(values[s].at(i, x0)) << '\n';
      }
    }
  }
}

inline void write_policy_csv(std::ostream& os, const ModelSpec& spec, const StateSpace& states,
                             std::span<const PolicyTable> policies) {
  const int d = spec.flat_states();
  const int M = spec.num_major_states;
  const bool staged = policies.size() > 1;
  if (staged) os << "stage,";
  os << "lattice_index";
  for (int x = 0; x < d; ++x) os << ",count_" << x;
  os << ",major_state,u0";
  for (int x = 0; x < d; ++x) os << ",gamma_" << x;
  os << '\n';
  for (std::size_t s = 0; s < policies.size(); ++s) {
    for (std::uint64_t i = 0; i < states.size(); ++i) {
      const MeanField z = states.point(i);
      for (int x0 = 0; x0 < M; ++x0) {
        if (staged) os << (s + 1) << ',';
        os << i;
        for (int x = 0; x < d; ++x) os << ',' << z.counts[x];
        const Prescription p = policies[s].prescription_at(i, x0);
        os << ',' << x0 << ',' << p.major_action;
        for (int x = 0; x < d; ++x) os << ',' << p.action[x];
        os << '\n';
      }
    }
  }
}

// Reads tables written by write_policy_csv back into policy form.
inline std::vector<PolicyTable> load_policy_csv(std::istream& is, const ModelSpec& spec) {
  const int d = spec.flat_states();
  const int M = spec.num_major_states;
  const PrescriptionSet actions = enumerate_prescriptions(spec);
  const Lattice lat(spec.population(), d);
  const std::uint64_t L = lat.size();

  std::string line;
  if (!std::getline(is, line)) throw SchemaError("policy file is empty");
  auto header = detail::split_csv_line(line);
  const bool staged = !header.empty() && header[0] == "stage";
  const std::size_t base = staged ? 1 : 0;
  if (header.size() != base + 1 + d + 2 + d)
    throw SchemaError("policy file header does not match the model");

  std::vector<PolicyTable> tables;
  auto table_at = [&](std::size_t s) -> PolicyTable& {
    while (tables.size() <= s)
      tables.push_back(PolicyTable{L, M, actions, std::vector<std::uint32_t>(L * M, 0)});
    return tables[s];
  };

  std::vector<int> gamma(d);
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != header.size()) throw SchemaError("policy file row has wrong arity");
    const std::size_t s = staged ? std::stoull(f[0]) - 1 : 0;
    const std::uint64_t i = std::stoull(f[base]);
    const int x0 = std::stoi(f[base + 1 + d]);
    const int u0 = std::stoi(f[base + 2 + d]);
    for (int x = 0; x < d; ++x) gamma[x] = std::stoi(f[base + 3 + d + x]);
    if (i >= L || x0 < 0 || x0 >= M) throw SchemaError("policy file row out of range");
    if (u0 < 0 || u0 >= actions.num_major_actions)
      throw SchemaError("policy file major action out of range");
    table_at(s).pair[i * M + x0] = static_cast<std::uint32_t>(
        actions.rank(gamma) * static_cast<std::uint64_t>(actions.num_major_actions) +
        static_cast<std::uint64_t>(u0));
    ++rows;
  }
  if (tables.empty()) throw SchemaError("policy file has no rows");
  if (rows != tables.size() * L * M)
    throw SchemaError("policy file does not cover the full lattice");
  return tables;
}

// ---------------------------------------------------------------------------
// Threshold presentation for 2-state minor populations: maximal runs of
// constant action along z(1) at fixed (x0, x), e.g.
//   x0=50, x=0: action 0 on [0, 0.53], 1 on (0.53, 0.76], 2 on (0.76, 1]

namespace detail {

// Maximal constant-action runs over the scanned z(1) grid, printed as
// contiguous right-closed intervals covering [0, 1]: the first run is closed
// at 0 and the last extends to 1.
inline std::string run_intervals(const std::vector<double>& z_values,
                                 const std::vector<int>& actions,
                                 const std::vector<std::string>& action_names) {
  std::string out;
  std::size_t start = 0;
  double prev_hi = 0.0;
  bool first = true;
  for (std::size_t i = 1; i <= actions.size(); ++i) {
    if (i == actions.size() || actions[i] != actions[start]) {
      const double hi = i == actions.size() ? 1.0 : z_values[i - 1];
      if (first) {
        out += "action " + action_names[actions[start]] + " on [0, " + fmt_g(hi) + "]";
        first = false;
      } else {
        out += ", " + action_names[actions[start]] + " on (" + fmt_g(prev_hi) + ", " +
               fmt_g(hi) + "]";
      }
      prev_hi = hi;
      start = i;
    }
  }
  return out;
}

}  // namespace detail

inline std::string threshold_summary(const ModelSpec& spec, const StateSpace& states,
                                     const PolicyTable& policy) {
  if (spec.flat_states() != 2)
    throw SchemaError("threshold summary requires a 2-state minor population");
  const std::int64_t n = spec.population();
  const int M = spec.num_major_states;

  auto state_label = [&](int x0) {
    return spec.major_state_labels.empty() ? std::to_string(x0)
                                           : detail::fmt_g(spec.major_state_labels[x0]);
  };
  std::vector<std::string> minor_names;
  for (int u = 0; u < spec.actions_at(0); ++u) minor_names.push_back(std::to_string(u));
  std::vector<std::string> major_names;
  for (int u = 0; u < spec.num_major_actions; ++u)
    major_names.push_back(spec.major_action_labels.empty()
                              ? std::to_string(u)
                              : detail::fmt_g(spec.major_action_labels[u]));

  std::ostringstream out;
  out << "minor control law g(z, x0, x), intervals in z(1):\n";
  for (int x0 = 0; x0 < M; ++x0) {
    for (int x = 0; x < 2; ++x) {
      // Lattice rank k holds counts (n-k, k), so rank order is z(1) ascending.
      // Only consistent points are scanned: an agent at x implies z(x) >= 1/n,
      // so entries with z(x) = 0 never bind and are left to interval closure.
      std::vector<int> actions;
      std::vector<double> z_values;
      for (std::uint64_t i = 0; i < states.size(); ++i) {
        if (states.point(i).counts[x] == 0) continue;
        actions.push_back(policy.minor_action_at(i, x0, x));
        z_values.push_back(static_cast<double>(i) / static_cast<double>(n));
      }
      out << (spec.has_major ? "x0=" + state_label(x0) + ", " : "") << "x=" << x << ": "
          << detail::run_intervals(z_values, actions, minor_names) << '\n';
    }
  }
  if (spec.has_major) {
    out << "major control law g0(z, x0), intervals in z(1):\n";
    for (int x0 = 0; x0 < M; ++x0) {
      std::vector<int> actions;
      std::vector<double> z_values;
      for (std::uint64_t i = 0; i < states.size(); ++i) {
        actions.push_back(policy.major_action_at(i, x0));
        z_values.push_back(static_cast<double>(i) / static_cast<double>(n));
      }
      out << "x0=" << state_label(x0) << ": "
          << detail::run_intervals(z_values, actions, major_names) << '\n';
    }
  }
  return out.str();
}

// Tidy long-format table for external plotting, 2-state models only.
inline void write_plot_data(std::ostream& os, const ModelSpec& spec, const StateSpace& states,
                            const ValueTable& value, const PolicyTable& policy) {
  if (spec.flat_states() != 2)
    throw SchemaError("plot data requires a 2-state minor population");
  const std::int64_t n = spec.population();
  const int M = spec.num_major_states;
  auto state_label = [&](int x0) {
    return spec.major_state_labels.empty() ? std::to_string(x0)
                                           : detail::fmt_g(spec.major_state_labels[x0]);
  };
  os << "series,x0,x,z1,value\n";
  for (std::uint64_t i = 0; i < states.size(); ++i) {
    const double z1 = static_cast<double>(i) / static_cast<double>(n);
    for (int x0 = 0; x0 < M; ++x0) {
      os << "V," << state_label(x0) << ",," << detail::fmt_g(z1) << ','
         << detail::fmt17(value.at(i, x0)) << '\n';
      for (int x = 0; x < 2; ++x)
        os << "minor_action," << state_label(x0) << ',' << x << ',' << detail::fmt_g(z1) << ','
           << policy.minor_action_at(i, x0, x) << '\n';
      if (spec.has_major) {
        const int u0 = policy.major_action_at(i, x0);
        os << "major_action," << state_label(x0) << ",," << detail::fmt_g(z1) << ','
           << (spec.major_action_labels.empty()
                   ? std::to_string(u0)
                   : detail::fmt_g(spec.major_action_labels[u0]))
           << '\n';
      }
    }
  }
}

// ---------------------------------------------------------------------------

struct RunManifest {
  std::string subcommand;
  std::string spec_path;
  nlohmann::ordered_json parameters = nlohmann::ordered_json::object();
  double wall_time_s = 0.0;
  std::vector<std::string> outputs;
};

inline std::string manifest_to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["tool"] = "mfc";
  j["version"] = kVersion;
  j["subcommand"] = m.subcommand;
  j["spec"] = m.spec_path;
  j["parameters"] = m.parameters;
  j["wall_time_s"] = m.wall_time_s;
  j["outputs"] = m.outputs;
  return j.dump(2) + "\n";
}

}  // namespace mfc
