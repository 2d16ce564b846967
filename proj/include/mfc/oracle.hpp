#pragma once

// Brute-force reference implementations at toy scale, kept deliberately
// independent of the production lattice/dynamics/solver code: they share only
// the model types. Joint-outcome enumeration certifies the transition kernel;
// the dense solver certifies the DP machinery; the single-agent solve
// certifies the degenerate n = 1 case. Single-threaded, no caching.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfc/errors.hpp"
#include "mfc/model.hpp"

namespace mfc::oracle {

using Counts = std::vector<std::int32_t>;

// Explicit per-agent configuration plus the major state.
struct JointState {
  std::vector<int> agents;  // flat augmented state per agent
  int major = 0;
};

namespace detail {

inline std::vector<int> flat_type_of(const ModelSpec& spec) {
  std::vector<int> out;
  for (std::size_t t = 0; t < spec.types.size(); ++t)
    out.insert(out.end(), spec.types[t].num_states, static_cast<int>(t));
  return out;
}

inline std::vector<int> flat_offset_of(const ModelSpec& spec) {
  std::vector<int> out;
  int off = 0;
  for (const auto& tb : spec.types) {
    for (int s = 0; s < tb.num_states; ++s) out.push_back(off);
    off += tb.num_states;
  }
  return out;
}

inline std::vector<int> canonical_agents(const MeanField& z) {
  std::vector<int> agents;
  for (int x = 0; x < z.dim(); ++x)
    for (std::int32_t c = 0; c < z.counts[x]; ++c) agents.push_back(x);
  return agents;
}

// Local successor row of an agent at flat state x under the given action.
inline std::vector<double> local_row(const ModelSpec& spec, int stage, const MeanField& z,
                                     int x0, int action, int flat_x,
                                     const std::vector<int>& type_of) {
  AugmentedState ax{type_of[flat_x], flat_x};
  int off = 0;
  for (int t = 0; t < ax.type; ++t) off += spec.types[t].num_states;
  ax.local = flat_x - off;
  return spec.minor_kernel_at(stage).row(z, x0, action, ax);
}

// Compositions of n into d parts in colexicographic order, generated by
// recursion on the highest coordinate (slowest-varying).
inline void gen_compositions(int pos, std::int64_t remaining, Counts& scratch,
                             std::vector<Counts>& out) {
  if (pos == 0) {
    scratch[0] = static_cast<std::int32_t>(remaining);
    out.push_back(scratch);
    return;
  }
  for (std::int64_t v = 0; v <= remaining; ++v) {
    scratch[pos] = static_cast<std::int32_t>(v);
    gen_compositions(pos - 1, remaining - v, scratch, out);
  }
}

inline std::vector<Counts> all_compositions(std::int64_t n, int d) {
  std::vector<Counts> out;
  Counts scratch(d, 0);
  gen_compositions(d - 1, n, scratch, out);
  return out;
}

}  // namespace detail

// Law of the successor mean-field by enumerating every joint successor
// assignment of all n agents (capacity d^n <= 1e6), starting from the
// canonical joint state consistent with z (or an explicit one).
inline std::map<Counts, double> kernel_by_enumeration(const ModelSpec& spec, int stage,
                                                      const MeanField& z, int x0,
                                                      std::span<const int> gamma, int /*u0*/,
                                                      const std::vector<int>* joint = nullptr) {
  const int d = z.dim();
  const int n = static_cast<int>(z.n);
  const auto type_of = detail::flat_type_of(spec);
  const auto offset_of = detail::flat_offset_of(spec);

  std::vector<int> agents = joint ? *joint : detail::canonical_agents(z);
  if (static_cast<int>(agents.size()) != n)
    throw SchemaError("joint state has the wrong number of agents");

  // Per-agent successor sets are the agent's own type block.
  std::vector<std::vector<double>> agent_rows(n);
  std::vector<int> agent_offsets(n), agent_sizes(n);
  double log_outcomes = 0.0;
  for (int a = 0; a < n; ++a) {
    const int x = agents[a];
    agent_rows[a] = detail::local_row(spec, stage, z, x0, gamma[x], x, type_of);
    agent_offsets[a] = offset_of[x];
    agent_sizes[a] = static_cast<int>(agent_rows[a].size());
    log_outcomes += std::log(static_cast<double>(agent_sizes[a]));
  }
  if (log_outcomes > std::log(1e6))
    throw CapacityError("joint successor enumeration exceeds 1e6 outcomes");

  std::map<Counts, double> dist;
  std::vector<int> pick(n, 0);  // local successor index per agent
  Counts succ(d, 0);
  while (true) {
    double p = 1.0;
    std::fill(succ.begin(), succ.end(), 0);
    for (int a = 0; a < n; ++a) {
      p *= agent_rows[a][pick[a]];
      succ[agent_offsets[a] + pick[a]] += 1;
    }
    if (p > 0.0) dist[succ] += p;
    int a = 0;
    while (a < n) {
      if (++pick[a] < agent_sizes[a]) break;
      pick[a] = 0;
      ++a;
    }
    if (a == n) break;
  }
  return dist;
}

// Joint law over (successor mean-field, successor major state) by direct
// enumeration; the two coordinates should factorize.
inline std::map<std::pair<Counts, int>, double> joint_by_enumeration(
    const ModelSpec& spec, int stage, const MeanField& z, int x0, std::span<const int> gamma,
    int u0) {
  const auto mf = kernel_by_enumeration(spec, stage, z, x0, gamma, u0);
  const std::vector<double> p0 = spec.major_kernel.row(z, x0, u0);
  std::map<std::pair<Counts, int>, double> out;
  for (const auto& [counts, p] : mf)
    for (int y0 = 0; y0 < static_cast<int>(p0.size()); ++y0)
      if (p0[y0] > 0.0) out[{counts, y0}] = p * p0[y0];
  return out;
}

// ---------------------------------------------------------------------------
// Dense dynamic program: explicit transition matrices over the full
// composition lattice, plain backward induction / value iteration.

struct DenseSolution {
  std::vector<Counts> points;  // colex order
  int num_major = 1;
  std::uint64_t num_pairs = 1;  // prescriptions x major actions
  // values[s][i * num_major + x0]; one entry for discounted models,
  // horizon entries (index t-1) for finite ones.
  std::vector<std::vector<double>> values;
  std::vector<std::vector<std::uint32_t>> argmin;
  // q[s][(i * num_major + x0) * num_pairs + pair], kept for tie analysis
  std::vector<std::vector<double>> q_values;
  std::uint64_t sweeps = 0;
};

namespace detail {

// Successor law of one source state's sub-population: counts[x] independent
// agents with the same row, convolved one agent at a time over count maps.
inline std::map<Counts, double> subpopulation_law(const std::vector<double>& row, int offset,
                                                  std::int32_t agents, int d) {
  std::map<Counts, double> dist;
  dist[Counts(d, 0)] = 1.0;
  for (std::int32_t rep = 0; rep < agents; ++rep) {
    std::map<Counts, double> next;
    for (const auto& [c, p] : dist) {
      for (int y = 0; y < static_cast<int>(row.size()); ++y) {
        if (row[y] == 0.0) continue;
        Counts c2 = c;
        c2[offset + y] += 1;
        next[c2] += p * row[y];
      }
    }
    dist = std::move(next);
  }
  return dist;
}

inline std::map<Counts, double> convolve(const std::map<Counts, double>& a,
                                         const std::map<Counts, double>& b) {
  std::map<Counts, double> out;
  for (const auto& [ca, pa] : a)
    for (const auto& [cb, pb] : b) {
      Counts c = ca;
      for (std::size_t i = 0; i < c.size(); ++i) c[i] += cb[i];
      out[c] += pa * pb;
    }
  return out;
}

}  // namespace detail

inline DenseSolution dense_dp(const ModelSpec& spec, std::uint64_t max_sweeps = 100'000) {
  spec.validate();
  const int d = spec.flat_states();
  const std::int64_t n = spec.population();
  const int M = spec.num_major_states;
  const int U0 = spec.num_major_actions;

  DenseSolution sol;
  sol.points = detail::all_compositions(n, d);
  const std::uint64_t L = sol.points.size();
  sol.num_major = M;
  if (L * static_cast<std::uint64_t>(M) > 10'000)
    throw CapacityError("dense DP handles at most 1e4 states, got " +
                        std::to_string(L * static_cast<std::uint64_t>(M)));

  std::map<Counts, std::uint64_t> index;
  for (std::uint64_t i = 0; i < L; ++i) index[sol.points[i]] = i;

  std::vector<int> radix;
  std::uint64_t num_gamma = 1;
  for (int x = 0; x < d; ++x) {
    radix.push_back(spec.actions_at(x));
    num_gamma *= static_cast<std::uint64_t>(radix.back());
  }
  sol.num_pairs = num_gamma * static_cast<std::uint64_t>(U0);
  if (L * L * num_gamma * static_cast<std::uint64_t>(M) > 40'000'000)
    throw CapacityError("dense DP transition matrices would exceed the memory guard");

  const auto type_of = detail::flat_type_of(spec);
  const auto offset_of = detail::flat_offset_of(spec);

  auto decode_gamma = [&](std::uint64_t g) {
    std::vector<int> out(d);
    for (int i = d - 1; i >= 0; --i) {
      out[i] = static_cast<int>(g % static_cast<std::uint64_t>(radix[i]));
      g /= static_cast<std::uint64_t>(radix[i]);
    }
    return out;
  };

  const bool stationary = spec.stationary();
  const bool discounted = spec.objective.kind == Objective::Kind::Discounted;
  const int T = discounted ? 1 : spec.objective.horizon;

  // mf[(g * M + x0) * L + i] is a dense row of length L; rebuilt per stage
  // only for time-varying kernels.
  std::vector<std::vector<double>> mf;
  auto build_matrices = [&](int stage) {
    mf.assign(num_gamma * static_cast<std::uint64_t>(M) * L, {});
    for (std::uint64_t g = 0; g < num_gamma; ++g) {
      const auto gamma = decode_gamma(g);
      for (int x0 = 0; x0 < M; ++x0) {
        for (std::uint64_t i = 0; i < L; ++i) {
          const MeanField z{sol.points[i], n};
          std::map<Counts, double> law;
          law[Counts(d, 0)] = 1.0;
          for (int x = 0; x < d; ++x) {
            if (z.counts[x] == 0) continue;
            const auto row =
                detail::local_row(spec, stage, z, x0, gamma[x], x, type_of);
            law = detail::convolve(
                law, detail::subpopulation_law(row, offset_of[x], z.counts[x], d));
          }
          std::vector<double> dense(L, 0.0);
          for (const auto& [c, p] : law) dense[index.at(c)] = p;
          mf[(g * M + x0) * L + i] = std::move(dense);
        }
      }
    }
  };

  const double beta = discounted ? spec.objective.beta : 1.0;
  std::vector<double> v(L * M, 0.0);

  auto backup = [&](int stage, std::vector<double>& v_out, std::vector<std::uint32_t>& arg_out,
                    std::vector<double>& q_out) {
    for (std::uint64_t i = 0; i < L; ++i) {
      const MeanField z{sol.points[i], n};
      for (int x0 = 0; x0 < M; ++x0) {
        double best = std::numeric_limits<double>::infinity();
        std::uint32_t best_pair = 0;
        for (std::uint64_t g = 0; g < num_gamma; ++g) {
          const auto gamma = decode_gamma(g);
          const auto& row_i = mf[(g * M + x0) * L + i];
          for (int u0 = 0; u0 < U0; ++u0) {
            const std::vector<double> p0 = spec.major_kernel.row(z, x0, u0);
            double ev = 0.0;
            for (std::uint64_t j = 0; j < L; ++j) {
              if (row_i[j] == 0.0) continue;
              double inner = 0.0;
              for (int y0 = 0; y0 < M; ++y0) inner += p0[y0] * v[j * M + y0];
              ev += row_i[j] * inner;
            }
            const double q =
                spec.cost_at(stage).fn(z, x0, gamma, u0) + beta * ev;
            q_out[(i * M + x0) * sol.num_pairs + g * U0 + u0] = q;
            if (q < best) {
              best = q;
              best_pair = static_cast<std::uint32_t>(g * U0 + u0);
            }
          }
        }
        v_out[i * M + x0] = best;
        arg_out[i * M + x0] = best_pair;
      }
    }
  };

  if (discounted) {
    build_matrices(1);
    const double threshold = spec.objective.tol * (1.0 - beta) / (2.0 * beta);
    std::vector<double> v_new(L * M, 0.0);
    std::vector<std::uint32_t> arg(L * M, 0);
    std::vector<double> q(L * M * sol.num_pairs, 0.0);
    while (true) {
      backup(1, v_new, arg, q);
      double resid = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i)
        resid = std::max(resid, std::abs(v_new[i] - v[i]));
      v = v_new;
      ++sol.sweeps;
      if (resid <= threshold) break;
      if (sol.sweeps >= max_sweeps)
        throw ConvergenceError("dense value iteration did not converge");
    }
    backup(1, v_new, arg, q);  // greedy extraction against the converged value
    sol.values.push_back(v);
    sol.argmin.push_back(arg);
    sol.q_values.push_back(q);
  } else {
    sol.values.assign(T, std::vector<double>(L * M, 0.0));
    sol.argmin.assign(T, std::vector<std::uint32_t>(L * M, 0));
    sol.q_values.assign(T, std::vector<double>(L * M * sol.num_pairs, 0.0));
    if (stationary) build_matrices(1);
    for (int t = T; t >= 1; --t) {
      if (!stationary) build_matrices(t);
      backup(t, sol.values[t - 1], sol.argmin[t - 1], sol.q_values[t - 1]);
      v = sol.values[t - 1];
    }
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Classical MDP solve for n = 1 (no major subsystem): the mean-field is a
// unit mass and the prescription reduces to the action at the occupied state.
// Requires a cost whose value does not depend on prescription entries at
// unoccupied states (any per-agent-separable family qualifies).

struct SingleAgentSolution {
  std::vector<std::vector<double>> values;  // one table, or one per stage
};

inline SingleAgentSolution single_agent_mdp(const ModelSpec& spec,
                                            std::uint64_t max_sweeps = 100'000) {
  spec.validate();
  if (spec.population() != 1)
    throw SchemaError("single-agent oracle requires population 1");
  if (spec.num_major_states != 1 || spec.num_major_actions != 1)
    throw SchemaError("single-agent oracle requires the sentinel major block");

  const int d = spec.flat_states();
  const auto type_of = detail::flat_type_of(spec);
  const auto offset_of = detail::flat_offset_of(spec);

  auto cost_of = [&](int stage, int x, int u) {
    const MeanField z = MeanField::point_mass(d, x, 1);
    std::vector<int> gamma(d, 0);
    gamma[x] = u;
    return spec.cost_at(stage).fn(z, 0, gamma, 0);
  };
  auto row_of = [&](int stage, int x, int u) {
    const MeanField z = MeanField::point_mass(d, x, 1);
    return detail::local_row(spec, stage, z, 0, u, x, type_of);
  };

  auto backup = [&](int stage, const std::vector<double>& v_next, double beta) {
    std::vector<double> v(d, 0.0);
    for (int x = 0; x < d; ++x) {
      double best = std::numeric_limits<double>::infinity();
      for (int u = 0; u < spec.actions_at(x); ++u) {
        const auto row = row_of(stage, x, u);
        double ev = 0.0;
        for (int y = 0; y < static_cast<int>(row.size()); ++y)
          ev += row[y] * v_next[offset_of[x] + y];
        best = std::min(best, cost_of(stage, x, u) + beta * ev);
      }
      v[x] = best;
    }
    return v;
  };

  SingleAgentSolution sol;
  if (spec.objective.kind == Objective::Kind::Discounted) {
    const double beta = spec.objective.beta;
    const double threshold = spec.objective.tol * (1.0 - beta) / (2.0 * beta);
    std::vector<double> v(d, 0.0);
    std::uint64_t sweeps = 0;
    while (true) {
      std::vector<double> v_new = backup(1, v, beta);
      double resid = 0.0;
      for (int x = 0; x < d; ++x) resid = std::max(resid, std::abs(v_new[x] - v[x]));
      v = std::move(v_new);
      if (resid <= threshold) break;
      if (++sweeps >= max_sweeps)
        throw ConvergenceError("single-agent value iteration did not converge");
    }
    sol.values.push_back(std::move(v));
  } else {
    const int T = spec.objective.horizon;
    sol.values.assign(T, std::vector<double>(d, 0.0));
    std::vector<double> v(d, 0.0);
    for (int t = T; t >= 1; --t) {
      v = backup(t, v, 1.0);
      sol.values[t - 1] = v;
    }
  }
  return sol;
}

}  // namespace mfc::oracle
