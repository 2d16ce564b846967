#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mfc/dynamics.hpp"
#include "mfc/errors.hpp"
#include "mfc/lattice.hpp"
#include "mfc/model.hpp"
#include "mfc/parallel.hpp"

namespace mfc {

// ---------------------------------------------------------------------------
// Action set of the coordinated system: all maps from flat augmented states
// to per-type minor actions, crossed with the major actions. Fixed
// lexicographic order (state 0 most significant, major action innermost), so
// argmin tie-breaking and serialized policies are reproducible.

struct PrescriptionSet {
  std::vector<int> radix;  // admissible action count per flat state
  int num_major_actions = 1;
  std::uint64_t num_gamma = 1;
  std::uint64_t num_pairs = 1;

  std::vector<int> decode(std::uint64_t g) const {
    std::vector<int> out(radix.size());
    for (std::size_t i = radix.size(); i-- > 0;) {
      out[i] = static_cast<int>(g % static_cast<std::uint64_t>(radix[i]));
      g /= static_cast<std::uint64_t>(radix[i]);
    }
    return out;
  }

  std::uint64_t rank(std::span<const int> gamma) const {
    return mixed_radix_rank(gamma, radix);
  }

  Prescription at(std::uint64_t pair_rank) const {
    Prescription p;
    p.major_action = static_cast<int>(pair_rank % static_cast<std::uint64_t>(num_major_actions));
    p.action = decode(pair_rank / static_cast<std::uint64_t>(num_major_actions));
    return p;
  }
};

inline PrescriptionSet enumerate_prescriptions(const ModelSpec& spec) {
  constexpr std::uint64_t kMaxPairs = 1'000'000;
  PrescriptionSet ps;
  ps.num_major_actions = spec.num_major_actions;
  std::uint64_t product = 1;
  for (int x = 0; x < spec.flat_states(); ++x) {
    const int r = spec.actions_at(x);
    ps.radix.push_back(r);
    product *= static_cast<std::uint64_t>(r);
    if (product * static_cast<std::uint64_t>(spec.num_major_actions) > kMaxPairs)
      throw CapacityError("prescription space has " + std::to_string(product) + " x " +
                          std::to_string(spec.num_major_actions) +
                          " elements, cap is " + std::to_string(kMaxPairs));
  }
  ps.num_gamma = product;
  ps.num_pairs = product * static_cast<std::uint64_t>(spec.num_major_actions);
  return ps;
}

// ---------------------------------------------------------------------------
// DP state space: the full composition lattice, or an explicit subset of it
// (the reachable set of a structured model, e.g. fixed per-type populations).

class StateSpace {
 public:
  static StateSpace full(std::int64_t n, int d) {
    StateSpace s(n, d);
    s.size_ = s.lattice_.size();
    return s;
  }

  static StateSpace restricted(std::int64_t n, int d, std::vector<MeanField> points) {
    StateSpace s(n, d);
    s.points_ = std::move(points);
    s.size_ = s.points_.size();
    s.rank_to_index_.reserve(s.points_.size());
    for (std::uint64_t i = 0; i < s.points_.size(); ++i)
      s.rank_to_index_.emplace(s.lattice_.rank(s.points_[i]), i);
    return s;
  }

  std::uint64_t size() const { return size_; }
  bool is_restricted() const { return !points_.empty(); }
  const Lattice& lattice() const { return lattice_; }

  MeanField point(std::uint64_t i) const {
    return is_restricted() ? points_[i] : lattice_.unrank(i);
  }

  std::uint64_t index_of_rank(std::uint64_t rank) const {
    if (!is_restricted()) return rank;
    auto it = rank_to_index_.find(rank);
    if (it == rank_to_index_.end())
      throw LookupError("successor lattice point " + std::to_string(rank) +
                        " lies outside the solved state set");
    return it->second;
  }

  std::optional<std::uint64_t> try_index(const MeanField& z) const {
    if (z.dim() != lattice_.states() || z.n != lattice_.population()) return std::nullopt;
    std::int64_t total = 0;
    for (auto c : z.counts) {
      if (c < 0) return std::nullopt;
      total += c;
    }
    if (total != z.n) return std::nullopt;
    const std::uint64_t r = lattice_.rank(z);
    if (!is_restricted()) return r;
    auto it = rank_to_index_.find(r);
    if (it == rank_to_index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  StateSpace(std::int64_t n, int d) : lattice_(n, d) {}

  Lattice lattice_;
  std::uint64_t size_ = 0;
  std::vector<MeanField> points_;
  std::unordered_map<std::uint64_t, std::uint64_t> rank_to_index_;
};

// ---------------------------------------------------------------------------

struct ValueTable {
  std::uint64_t num_states = 0;
  int num_major = 1;
  std::vector<double> v;

  static ValueTable zeros(std::uint64_t num_states, int num_major) {
    return ValueTable{num_states, num_major,
                      std::vector<double>(num_states * static_cast<std::uint64_t>(num_major), 0.0)};
  }
  double& at(std::uint64_t i, int x0) { return v[i * num_major + x0]; }
  double at(std::uint64_t i, int x0) const { return v[i * num_major + x0]; }

  double sup_diff(const ValueTable& other) const {
    double m = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) m = std::max(m, std::abs(v[i] - other.v[i]));
    return m;
  }

  bool operator==(const ValueTable&) const = default;
};

// Argmin table. Stores the rank of the minimizing (prescription, major
// action) pair per (state, major state); the induced minor and major control
// laws are decoded views of the same entry.
struct PolicyTable {
  std::uint64_t num_states = 0;
  int num_major = 1;
  PrescriptionSet actions;
  std::vector<std::uint32_t> pair;

  std::uint32_t pair_at(std::uint64_t i, int x0) const { return pair[i * num_major + x0]; }
  Prescription prescription_at(std::uint64_t i, int x0) const {
    return actions.at(pair_at(i, x0));
  }
  int major_action_at(std::uint64_t i, int x0) const {
    return static_cast<int>(pair_at(i, x0) %
                            static_cast<std::uint64_t>(actions.num_major_actions));
  }
  int minor_action_at(std::uint64_t i, int x0, int flat_x) const {
    return actions.decode(pair_at(i, x0) /
                          static_cast<std::uint64_t>(actions.num_major_actions))[flat_x];
  }

  bool equal_assignments(const PolicyTable& other) const { return pair == other.pair; }
};

struct CoordinatedProblem {
  const ModelSpec* spec = nullptr;
  StateSpace states;
  PrescriptionSet actions;
};

inline CoordinatedProblem make_problem(const ModelSpec& spec) {
  spec.validate();
  return CoordinatedProblem{&spec, StateSpace::full(spec.population(), spec.flat_states()),
                            enumerate_prescriptions(spec)};
}

inline CoordinatedProblem make_problem(const ModelSpec& spec, StateSpace states) {
  spec.validate();
  return CoordinatedProblem{&spec, std::move(states), enumerate_prescriptions(spec)};
}

// ---------------------------------------------------------------------------

namespace detail {

// One Bellman sweep: for every (state, major state), minimize stage cost plus
// discounted expected continuation over all (prescription, major action)
// pairs. First minimizer in enumeration order wins ties. Writes are disjoint
// per state, so the sweep is data-parallel and bit-reproducible.
inline void backup_into(const CoordinatedProblem& pb, const ValueTable& v_next, int stage,
                        double discount, const TransitionTable* table, ValueTable& v_out,
                        PolicyTable* p_out) {
  const ModelSpec& spec = *pb.spec;
  const int M = spec.num_major_states;
  const int U0 = spec.num_major_actions;
  const bool homogeneous = spec.minor_kernel_at(stage).state_homogeneous;
  const Lattice& lat = pb.states.lattice();

  parallel_chunks(0, pb.states.size(), [&](std::uint64_t lo, std::uint64_t hi, std::size_t) {
    std::vector<double> continuation(M);
    std::vector<double> best(M);
    std::vector<std::uint32_t> best_pair(M);
    std::vector<std::vector<double>> major_rows(M * U0);
    for (std::uint64_t i = lo; i < hi; ++i) {
      const MeanField z = pb.states.point(i);
      for (int x0 = 0; x0 < M; ++x0)
        for (int u0 = 0; u0 < U0; ++u0) major_rows[x0 * U0 + u0] = major_row(spec, z, x0, u0);
      std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
      std::fill(best_pair.begin(), best_pair.end(), 0);

      SuccessorDist scratch;
      for (std::uint64_t g = 0; g < pb.actions.num_gamma; ++g) {
        const std::vector<int> gamma = pb.actions.decode(g);
        const SuccessorDist* dist = nullptr;
        for (int x0 = 0; x0 < M; ++x0) {
          // Kernels that ignore the major state share the distribution and
          // the continuation vector across x0.
          if (!homogeneous || x0 == 0) {
            dist = table ? table->lookup(i, x0, g) : nullptr;
            if (!dist) {
              scratch = meanfield_kernel(spec, stage, lat, z, x0, gamma);
              if (pb.states.is_restricted())
                for (auto& [rank, p] : scratch) rank = pb.states.index_of_rank(rank);
              dist = &scratch;
            }
            std::fill(continuation.begin(), continuation.end(), 0.0);
            for (const auto& [j, p] : *dist)
              for (int y0 = 0; y0 < M; ++y0) continuation[y0] += p * v_next.at(j, y0);
          }
          for (int u0 = 0; u0 < U0; ++u0) {
            const auto& row = major_rows[x0 * U0 + u0];
            double ev = 0.0;
            for (int y0 = 0; y0 < M; ++y0) ev += row[y0] * continuation[y0];
            const double q =
                expected_stage_cost(spec, stage, z, x0, gamma, u0) + discount * ev;
            if (q < best[x0]) {
              best[x0] = q;
              best_pair[x0] = static_cast<std::uint32_t>(g * U0 + u0);
            }
          }
        }
      }
      for (int x0 = 0; x0 < M; ++x0) {
        v_out.at(i, x0) = best[x0];
        if (p_out) p_out->pair[i * M + x0] = best_pair[x0];
      }
    }
  });
}

}  // namespace detail

struct BackupResult {
  ValueTable value;
  PolicyTable policy;
};

inline BackupResult bellman_backup(const CoordinatedProblem& pb, const ValueTable& v_next,
                                   int stage, double discount,
                                   const TransitionTable* table = nullptr) {
  BackupResult r{ValueTable::zeros(pb.states.size(), pb.spec->num_major_states),
                 PolicyTable{pb.states.size(), pb.spec->num_major_states, pb.actions,
                             std::vector<std::uint32_t>(
                                 pb.states.size() * pb.spec->num_major_states, 0)}};
  detail::backup_into(pb, v_next, stage, discount, table, r.value, &r.policy);
  return r;
}

// ---------------------------------------------------------------------------

struct FiniteSolution {
  std::vector<ValueTable> values;     // index t-1 holds V_t; V_{T+1} = 0 implicitly
  std::vector<PolicyTable> policies;
};

struct DiscountedSolution {
  ValueTable value;
  PolicyTable policy;
  std::uint64_t sweeps = 0;
  double residual = 0.0;
};

namespace detail {

inline TransitionTable make_table(const CoordinatedProblem& pb, int stage) {
  TransitionTable table(*pb.spec, pb.states.lattice(), pb.states.size(), pb.actions.radix,
                        stage);
  table.populate([&](std::uint64_t i) { return pb.states.point(i); },
                 [&](std::uint64_t rank) { return pb.states.index_of_rank(rank); });
  return table;
}

}  // namespace detail

inline FiniteSolution solve_finite(const CoordinatedProblem& pb) {
  const ModelSpec& spec = *pb.spec;
  if (spec.objective.kind != Objective::Kind::FiniteHorizon)
    throw SchemaError("solve_finite requires a finite-horizon objective");
  const int T = spec.objective.horizon;

  std::optional<TransitionTable> table;
  if (spec.stationary()) table.emplace(detail::make_table(pb, 1));

  FiniteSolution out;
  out.values.resize(T);
  out.policies.resize(T);
  ValueTable v_next = ValueTable::zeros(pb.states.size(), spec.num_major_states);
  for (int t = T; t >= 1; --t) {
    std::optional<TransitionTable> stage_table;
    const TransitionTable* tp = nullptr;
    if (spec.stationary()) {
      tp = &*table;
    } else {
      stage_table.emplace(detail::make_table(pb, t));
      tp = &*stage_table;
    }
    BackupResult r = bellman_backup(pb, v_next, t, 1.0, tp);
    v_next = r.value;
    out.values[t - 1] = std::move(r.value);
    out.policies[t - 1] = std::move(r.policy);
  }
  return out;
}

inline DiscountedSolution solve_discounted(const CoordinatedProblem& pb,
                                           std::uint64_t max_sweeps = 100'000) {
  const ModelSpec& spec = *pb.spec;
  if (spec.objective.kind != Objective::Kind::Discounted)
    throw SchemaError("solve_discounted requires a discounted objective");
  const double beta = spec.objective.beta;
  // Stopping rule: a sup-norm residual below tol*(1-beta)/(2*beta) certifies
  // that the final iterate is within tol of the optimal value.
  const double threshold = spec.objective.tol * (1.0 - beta) / (2.0 * beta);

  TransitionTable table = detail::make_table(pb, 1);

  ValueTable v = ValueTable::zeros(pb.states.size(), spec.num_major_states);
  double residual = std::numeric_limits<double>::infinity();
  std::uint64_t sweeps = 0;
  while (true) {
    BackupResult r = bellman_backup(pb, v, 1, beta, &table);
    residual = r.value.sup_diff(v);
    v = std::move(r.value);
    ++sweeps;
    if (residual <= threshold) break;
    if (sweeps >= max_sweeps)
      throw ConvergenceError("value iteration did not converge in " +
                             std::to_string(max_sweeps) +
                             " sweeps; residual = " + std::to_string(residual));
  }
  // Extract the stationary policy with one greedy pass over the converged
  // value, so the result does not depend on sweep-order effects near the
  // stopping threshold.
  BackupResult greedy = bellman_backup(pb, v, 1, beta, &table);
  return DiscountedSolution{std::move(v), std::move(greedy.policy), sweeps, residual};
}

inline FiniteSolution solve_finite(const ModelSpec& spec) {
  return solve_finite(make_problem(spec));
}

inline DiscountedSolution solve_discounted(const ModelSpec& spec) {
  return solve_discounted(make_problem(spec));
}

// Induced control laws: the major action when x is absent, the minor action
// of an agent at flat state x otherwise.
inline int query_policy(const PolicyTable& policy, const StateSpace& states, const MeanField& z,
                        int x0, std::optional<int> x = std::nullopt) {
  auto idx = states.try_index(z);
  if (!idx) throw LookupError("mean-field is not on the solved lattice");
  return x ? policy.minor_action_at(*idx, x0, *x) : policy.major_action_at(*idx, x0);
}

}  // namespace mfc
