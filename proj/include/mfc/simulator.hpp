#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mfc/dynamics.hpp"
#include "mfc/errors.hpp"
#include "mfc/model.hpp"
#include "mfc/parallel.hpp"
#include "mfc/rng.hpp"
#include "mfc/solver.hpp"

namespace mfc {

struct SimConfig {
  std::uint64_t seed = 0;
  int rollouts = 1;
  // 0 derives the horizon: the objective's T for finite-horizon models, the
  // truncation point implied by bias_budget for discounted ones.
  int horizon = 0;
  double bias_budget = 1e-3;
  MeanField initial;   // counts over flat states; agents are assigned
  int initial_major = 0;  // lowest-index first, so runs are reproducible
};

struct RolloutReport {
  double mean = 0.0;
  double std_error = 0.0;
  int rollouts = 0;
  int horizon = 0;
  double bias_bound = 0.0;  // upper bound on the truncated discounted tail
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> stage_mean_field;  // [stage][state] avg fraction

  bool operator==(const RolloutReport&) const = default;
};

namespace detail {

inline std::vector<int> agents_from_counts(const MeanField& z) {
  std::vector<int> agents;
  agents.reserve(static_cast<std::size_t>(z.n));
  for (int x = 0; x < z.dim(); ++x)
    for (std::int32_t c = 0; c < z.counts[x]; ++c) agents.push_back(x);
  return agents;
}

inline std::string counts_to_string(std::span<const std::int32_t> counts) {
  std::string s = "(";
  for (std::size_t i = 0; i < counts.size(); ++i)
    s += (i ? "," : "") + std::to_string(counts[i]);
  return s + ")";
}

// Largest absolute stage cost along the policy, over the whole state space.
inline double max_policy_stage_cost(const ModelSpec& spec, const StateSpace& states,
                                    const PolicyTable& policy) {
  double m = 0.0;
  for (std::uint64_t i = 0; i < states.size(); ++i) {
    const MeanField z = states.point(i);
    for (int x0 = 0; x0 < spec.num_major_states; ++x0) {
      const Prescription p = policy.prescription_at(i, x0);
      m = std::max(m, std::abs(expected_stage_cost(spec, 1, z, x0, p.action, p.major_action)));
    }
  }
  return m;
}

}  // namespace detail

// Monte Carlo rollout of the full n-agent system (plus major) under the
// solved Markov policy. Every stage recomputes the mean-field from the agent
// states, looks up (prescription, major action), applies the prescription to
// each agent, and samples successors independently; identical agents in the
// same state always receive the same action. All randomness comes from the
// counter-based generator keyed by (seed, rollout, stage, agent), with the
// major subsystem drawing as agent index n, so reports are byte-stable.
inline RolloutReport rollout(const ModelSpec& spec, const StateSpace& states,
                             std::span<const PolicyTable> policies, const SimConfig& cfg) {
  spec.validate();
  if (cfg.rollouts < 1) throw SchemaError("rollouts must be >= 1");
  if (cfg.initial.dim() != spec.flat_states() || cfg.initial.n != spec.population())
    throw SchemaError("initial mean-field does not match the model");
  std::int64_t total = 0;
  for (auto c : cfg.initial.counts) total += c;
  if (total != spec.population())
    throw SchemaError("population mismatch: initial counts must sum to n");
  if (cfg.initial_major < 0 || cfg.initial_major >= spec.num_major_states)
    throw SchemaError("initial major state out of range");
  if (policies.empty()) throw SchemaError("rollout needs at least one policy table");

  const bool discounted = spec.objective.kind == Objective::Kind::Discounted;
  const double beta = discounted ? spec.objective.beta : 1.0;

  RolloutReport report;
  report.seed = cfg.seed;
  report.rollouts = cfg.rollouts;

  int horizon;
  if (policies.size() > 1) {
    horizon = static_cast<int>(policies.size());  // finite-horizon stage policies
  } else if (cfg.horizon > 0) {
    horizon = cfg.horizon;
  } else if (!discounted) {
    horizon = spec.objective.horizon;
  } else {
    // Smallest T with beta^T * c_max / (1 - beta) under the bias budget.
    const double c_max = detail::max_policy_stage_cost(spec, states, policies[0]);
    horizon = 1;
    double tail = c_max / (1.0 - beta);
    while (tail * std::pow(beta, horizon) > cfg.bias_budget && horizon < 1'000'000) ++horizon;
  }
  report.horizon = horizon;
  if (discounted) {
    const double c_max = detail::max_policy_stage_cost(spec, states, policies[0]);
    report.bias_bound = std::pow(beta, horizon) * c_max / (1.0 - beta);
  }

  const int n = static_cast<int>(spec.population());
  const int d = spec.flat_states();
  const std::vector<int> init_agents = detail::agents_from_counts(cfg.initial);

  std::vector<double> totals(cfg.rollouts, 0.0);
  const auto bounds = chunk_bounds(0, static_cast<std::uint64_t>(cfg.rollouts), 64);
  // Per-chunk mean-field sums, merged in chunk order for determinism.
  std::vector<std::vector<double>> chunk_sums(bounds.size(),
                                              std::vector<double>(horizon * d, 0.0));

  parallel_chunks(0, static_cast<std::uint64_t>(cfg.rollouts),
                  [&](std::uint64_t lo, std::uint64_t hi, std::size_t chunk) {
    std::vector<int> agents;
    std::vector<std::int32_t> counts(d);
    auto& sums = chunk_sums[chunk];
    for (std::uint64_t r = lo; r < hi; ++r) {
      agents = init_agents;
      int x0 = cfg.initial_major;
      double total_cost = 0.0;
      double weight = 1.0;
      for (int t = 1; t <= horizon; ++t) {
        std::fill(counts.begin(), counts.end(), 0);
        for (int a : agents) counts[a] += 1;
        const MeanField z{counts, spec.population()};
        for (int x = 0; x < d; ++x)
          sums[(t - 1) * d + x] += z.fraction(x);

        const auto idx = states.try_index(z);
        if (!idx)
          throw LookupError("rollout reached mean-field " +
                            detail::counts_to_string(counts) +
                            " which is not covered by the policy");
        const PolicyTable& policy =
            policies[std::min<std::size_t>(t - 1, policies.size() - 1)];
        const Prescription presc = policy.prescription_at(*idx, x0);

        total_cost +=
            weight * expected_stage_cost(spec, t, z, x0, presc.action, presc.major_action);
        weight *= discounted ? beta : 1.0;

        // One validated transition row per occupied source state.
        std::vector<std::vector<double>> rows(d);
        for (int x = 0; x < d; ++x)
          if (counts[x] > 0) rows[x] = flat_minor_row(spec, t, z, x0, presc.action[x], x);
        for (int a = 0; a < n; ++a) {
          const double u = rng::draw(cfg.seed, r, static_cast<std::uint64_t>(t),
                                     static_cast<std::uint64_t>(a));
          agents[a] = rng::sample_row(rows[agents[a]], u);
        }
        const std::vector<double> p0 = major_row(spec, z, x0, presc.major_action);
        const double u0 = rng::draw(cfg.seed, r, static_cast<std::uint64_t>(t),
                                    static_cast<std::uint64_t>(n));
        x0 = rng::sample_row(p0, u0);
      }
      totals[r] = total_cost;
    }
  }, 64);

  report.stage_mean_field.assign(horizon, std::vector<double>(d, 0.0));
  for (const auto& sums : chunk_sums)
    for (int t = 0; t < horizon; ++t)
      for (int x = 0; x < d; ++x)
        report.stage_mean_field[t][x] += sums[t * d + x] / cfg.rollouts;

  double mean = 0.0;
  for (double v : totals) mean += v;
  mean /= cfg.rollouts;
  double var = 0.0;
  for (double v : totals) var += (v - mean) * (v - mean);
  report.mean = mean;
  report.std_error =
      cfg.rollouts > 1 ? std::sqrt(var / (cfg.rollouts - 1) / cfg.rollouts) : 0.0;
  return report;
}

inline RolloutReport rollout(const ModelSpec& spec, const StateSpace& states,
                             const PolicyTable& policy, const SimConfig& cfg) {
  return rollout(spec, states, std::span<const PolicyTable>(&policy, 1), cfg);
}

// ---------------------------------------------------------------------------

struct KernelCheckReport {
  double max_abs_dev = 0.0;
  double chi_square = 0.0;  // Pearson statistic over the exact support
  std::int64_t dof = 0;
  int samples = 0;
};

// Samples one transition many times from a joint state consistent with z and
// compares empirical successor frequencies against the exact kernel. The
// sampler only sees the current (z, x0, prescription), so agreement here is
// the behavioural face of the controlled-Markov-chain reduction.
inline KernelCheckReport empirical_kernel_check(const ModelSpec& spec, const MeanField& z,
                                                int x0, std::span<const int> gamma,
                                                [[maybe_unused]] int u0, int samples,
                                                std::uint64_t seed,
                                                std::span<const int> agents_override = {}) {
  spec.validate();
  const int d = z.dim();
  const int n = static_cast<int>(z.n);
  const Lattice lat(z.n, d);
  const SuccessorDist exact = meanfield_kernel(spec, 1, lat, z, x0, gamma);

  std::vector<int> init;
  if (agents_override.empty()) {
    init = detail::agents_from_counts(z);
  } else {
    init.assign(agents_override.begin(), agents_override.end());
    std::vector<std::int32_t> check(d, 0);
    for (int a : init) check[a] += 1;
    if (check != z.counts)
      throw SchemaError("agent override is not consistent with the mean-field");
  }

  std::vector<std::vector<double>> rows(d);
  for (int x = 0; x < d; ++x)
    if (z.counts[x] > 0) rows[x] = flat_minor_row(spec, 1, z, x0, gamma[x], x);

  std::map<std::uint64_t, std::int64_t> freq;
  std::vector<std::int32_t> counts(d);
  for (int s = 0; s < samples; ++s) {
    std::fill(counts.begin(), counts.end(), 0);
    for (int a = 0; a < n; ++a) {
      const double u = rng::draw(seed, static_cast<std::uint64_t>(s), 1,
                                 static_cast<std::uint64_t>(a));
      counts[rng::sample_row(rows[init[a]], u)] += 1;
    }
    freq[lat.rank(counts)] += 1;
  }

  KernelCheckReport rep;
  rep.samples = samples;
  std::map<std::uint64_t, double> exact_map(exact.begin(), exact.end());
  for (const auto& [rank, p] : exact_map) {
    auto it = freq.find(rank);
    const double emp = it == freq.end() ? 0.0 : static_cast<double>(it->second) / samples;
    rep.max_abs_dev = std::max(rep.max_abs_dev, std::abs(emp - p));
    const double expected = p * samples;
    const double observed = it == freq.end() ? 0.0 : static_cast<double>(it->second);
    rep.chi_square += (observed - expected) * (observed - expected) / expected;
  }
  for (const auto& [rank, count] : freq) {
    if (!exact_map.count(rank))
      throw ModelError("simulator produced a successor outside the exact kernel support");
  }
  rep.dof = static_cast<std::int64_t>(exact_map.size()) - 1;
  return rep;
}

}  // namespace mfc
