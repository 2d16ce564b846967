#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mfc/errors.hpp"
#include "mfc/lattice.hpp"

namespace mfc {

using TypeId = int;

// Pair (type, local state). For single-type models this is just the state
// index; for multi-type models the flat augmented index is offset + local.
struct AugmentedState {
  TypeId type = 0;
  int local = 0;
  bool operator==(const AugmentedState&) const = default;
};

struct TypeBlock {
  std::int64_t population = 0;
  int num_states = 0;
  int num_actions = 0;
  bool operator==(const TypeBlock&) const = default;
};

using Matrix = std::vector<std::vector<double>>;

// ---------------------------------------------------------------------------
// Probability-row helpers shared by the kernel factories.

inline double row_sum(std::span<const double> row) {
  double s = 0.0;
  for (double v : row) s += v;
  return s;
}

// Ingestion check: tolerate decimal round-off in hand-written files (1e-9),
// reject anything worse, then renormalize so downstream queries see rows that
// sum to 1 up to machine precision. Rows already within the machine-precision
// band are left untouched, which keeps parse/serialize idempotent.
inline void validate_and_normalize_row(std::vector<double>& row, const std::string& where) {
  double s = 0.0;
  for (double v : row) {
    if (v < 0.0) throw StochasticityError(where + ": negative probability " + std::to_string(v));
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9)
    throw StochasticityError(where + ": row sums to " + std::to_string(s) + ", expected 1");
  if (std::abs(s - 1.0) <= 1e-13) return;
  for (double& v : row) v /= s;
}

inline void validate_and_normalize_matrix(Matrix& m, const std::string& where) {
  for (std::size_t r = 0; r < m.size(); ++r)
    validate_and_normalize_row(m[r], where + " row " + std::to_string(r));
}

// ---------------------------------------------------------------------------
// Kernels. The function objects are the operational form; the declarative
// payloads (when present) are what the file format round-trips.

struct TableKernelDecl {
  // per_type[t][u] is the |X(t)| x |X(t)| transition matrix under action u.
  std::vector<std::vector<Matrix>> per_type;
  bool operator==(const TableKernelDecl&) const = default;
};

struct ForcedMixDecl {
  Matrix q;                     // natural dynamics, action 0
  std::vector<double> epsilon;  // epsilon[u-1] for forcing action u
  bool operator==(const ForcedMixDecl&) const = default;
};

using MinorKernelDecl = std::variant<std::monostate, TableKernelDecl, ForcedMixDecl>;

// Row over successor local states of x.type, given the current mean-field,
// major state, and the action applied to an agent at x.
using MinorRowFn =
    std::function<std::vector<double>(const MeanField&, int, int, AugmentedState)>;

struct MinorKernel {
  MinorRowFn row;
  MinorKernelDecl decl;
  // Declarative kernels ignore (z, x0); the transition tabulator exploits this.
  bool state_homogeneous = false;
};

struct DeterministicSetDecl {
  bool operator==(const DeterministicSetDecl&) const = default;
};

struct MajorTableDecl {
  std::vector<Matrix> per_action;  // per_action[u0][x0][x0']
  bool operator==(const MajorTableDecl&) const = default;
};

using MajorKernelDecl =
    std::variant<std::monostate, DeterministicSetDecl, MajorTableDecl>;

using MajorRowFn = std::function<std::vector<double>(const MeanField&, int, int)>;

struct MajorKernel {
  MajorRowFn row;
  MajorKernelDecl decl;
  bool state_homogeneous = false;
};

// ---------------------------------------------------------------------------
// Stage cost: the reduced cost of the coordinated system, a function of
// (mean-field, major state, prescription, major action).

struct CapacityServiceDecl {
  std::vector<double> supply_cost;   // per major action
  double adjust_rate = 0;            // per unit of capacity change
  double benefit_rate = 0;           // per served active user
  double shortage_rate = 0;          // per unserved active user
  std::vector<double> action_cost;   // per minor action
  bool operator==(const CapacityServiceDecl&) const = default;
};

struct SeparableDecl {
  std::vector<std::vector<double>> action_cost;  // per type, per minor action
  Matrix major;                                  // [x0][u0], empty means zero
  bool operator==(const SeparableDecl&) const = default;
};

struct TableCostDecl {
  // values[lattice rank][x0][prescription rank][u0]
  std::vector<std::vector<std::vector<std::vector<double>>>> values;
  bool operator==(const TableCostDecl&) const = default;
};

using CostDecl =
    std::variant<std::monostate, CapacityServiceDecl, SeparableDecl, TableCostDecl>;

using StageCostFn = std::function<double(const MeanField&, int, std::span<const int>, int)>;

struct CostModel {
  StageCostFn fn;
  CostDecl decl;
};

// ---------------------------------------------------------------------------

struct Objective {
  enum class Kind { FiniteHorizon, Discounted };
  Kind kind = Kind::FiniteHorizon;
  int horizon = 1;     // FiniteHorizon
  double beta = 0.0;   // Discounted
  double tol = 0.0;    // Discounted: sup-norm optimality target
  bool operator==(const Objective&) const = default;

  static Objective finite(int T) { return Objective{Kind::FiniteHorizon, T, 0.0, 0.0}; }
  static Objective discounted(double beta, double tol) {
    return Objective{Kind::Discounted, 1, beta, tol};
  }
};

// Full problem description. Minor subsystems are grouped into types; the flat
// augmented state space concatenates the per-type state spaces. A model with
// no major subsystem keeps the sentinel 1-state, 1-action major block so there
// is a single solver path.
struct ModelSpec {
  std::vector<TypeBlock> types;

  bool has_major = false;
  int num_major_states = 1;
  int num_major_actions = 1;
  std::vector<double> major_state_labels;   // optional presentation labels
  std::vector<double> major_action_labels;

  std::vector<MinorKernel> minor_kernels;   // size 1 (stationary) or horizon
  MajorKernel major_kernel;
  std::vector<CostModel> costs;             // size 1 (stationary) or horizon
  Objective objective;

  // When non-empty, overrides the per-type action counts per flat state
  // (used by the augmentation and embedding transforms).
  std::vector<int> per_state_actions;

  std::int64_t population() const {
    std::int64_t n = 0;
    for (const auto& t : types) n += t.population;
    return n;
  }

  int flat_states() const {
    int d = 0;
    for (const auto& t : types) d += t.num_states;
    return d;
  }

  int type_offset(TypeId t) const {
    int off = 0;
    for (TypeId i = 0; i < t; ++i) off += types[i].num_states;
    return off;
  }

  AugmentedState to_augmented(int flat) const {
    for (TypeId t = 0; t < static_cast<TypeId>(types.size()); ++t) {
      if (flat < types[t].num_states) return AugmentedState{t, flat};
      flat -= types[t].num_states;
    }
    throw LookupError("flat state out of range");
  }

  int to_flat(AugmentedState x) const { return type_offset(x.type) + x.local; }

  int actions_at(int flat) const {
    if (!per_state_actions.empty()) return per_state_actions[flat];
    return types[to_augmented(flat).type].num_actions;
  }

  bool stationary() const { return minor_kernels.size() == 1 && costs.size() == 1; }

  // Stage arguments are 1-based throughout.
  const MinorKernel& minor_kernel_at(int stage) const {
    return minor_kernels[std::min<std::size_t>(stage - 1, minor_kernels.size() - 1)];
  }
  const CostModel& cost_at(int stage) const {
    return costs[std::min<std::size_t>(stage - 1, costs.size() - 1)];
  }

  void validate() const {
    if (types.empty()) throw SchemaError("model needs at least one type");
    for (const auto& t : types) {
      if (t.population < 1) throw SchemaError("type population must be >= 1");
      if (t.num_states < 1 || t.num_actions < 1)
        throw SchemaError("state and action spaces must be nonempty");
    }
    if (population() < 1) throw SchemaError("population mismatch: total population must be >= 1");
    if (num_major_states < 1 || num_major_actions < 1)
      throw SchemaError("major state and action spaces must be nonempty");
    if (!major_state_labels.empty() &&
        static_cast<int>(major_state_labels.size()) != num_major_states)
      throw SchemaError("major state labels do not match the state count");
    if (!major_action_labels.empty() &&
        static_cast<int>(major_action_labels.size()) != num_major_actions)
      throw SchemaError("major action labels do not match the action count");
    if (!per_state_actions.empty()) {
      if (static_cast<int>(per_state_actions.size()) != flat_states())
        throw SchemaError("per-state action table does not match the flat state count");
      for (int a : per_state_actions)
        if (a < 1) throw SchemaError("per-state action counts must be >= 1");
    }
    if (minor_kernels.empty() || costs.empty())
      throw SchemaError("model needs a minor kernel and a cost");
    for (const auto& k : minor_kernels)
      if (!k.row) throw SchemaError("minor kernel function missing");
    if (!major_kernel.row) throw SchemaError("major kernel function missing");
    for (const auto& c : costs)
      if (!c.fn) throw SchemaError("cost function missing");
    if (objective.kind == Objective::Kind::Discounted) {
      if (!(objective.beta > 0.0 && objective.beta < 1.0))
        throw SchemaError("discount factor must lie in (0, 1)");
      if (!(objective.tol > 0.0)) throw SchemaError("discounted tolerance must be positive");
      if (!stationary())
        throw SchemaError("discounted objective requires a stationary model");
    } else {
      if (objective.horizon < 1) throw SchemaError("horizon must be >= 1");
      auto fits = [&](std::size_t s) {
        return s == 1 || s == static_cast<std::size_t>(objective.horizon);
      };
      if (!fits(minor_kernels.size()) || !fits(costs.size()))
        throw SchemaError("time-varying kernels/costs must have one entry per stage");
    }
    if (std::holds_alternative<DeterministicSetDecl>(major_kernel.decl)) {
      if (num_major_states != num_major_actions)
        throw SchemaError("deterministic-set major kernel needs matching state/action sets");
      if (major_state_labels != major_action_labels)
        throw SchemaError("deterministic-set major kernel needs matching state/action labels");
    }
  }
};

// ---------------------------------------------------------------------------
// Kernel factories.

inline MinorKernel make_table_kernel(TableKernelDecl decl, const std::vector<TypeBlock>& types) {
  if (decl.per_type.size() != types.size())
    throw SchemaError("table kernel: need one matrix set per type");
  for (std::size_t t = 0; t < types.size(); ++t) {
    if (static_cast<int>(decl.per_type[t].size()) != types[t].num_actions)
      throw SchemaError("table kernel: need one matrix per action");
    for (auto& m : decl.per_type[t]) {
      if (static_cast<int>(m.size()) != types[t].num_states)
        throw SchemaError("table kernel: matrix has wrong row count");
      for (auto& row : m)
        if (static_cast<int>(row.size()) != types[t].num_states)
          throw SchemaError("table kernel: matrix has wrong column count");
      validate_and_normalize_matrix(m, "minor kernel");
    }
  }
  auto table = std::make_shared<const TableKernelDecl>(decl);
  MinorKernel k;
  k.decl = *table;
  k.state_homogeneous = true;
  k.row = [table](const MeanField&, int, int action, AugmentedState x) {
    return table->per_type[x.type][action][x.local];
  };
  return k;
}

// Controlled transitions of the forced-mix family: action 0 follows the
// natural chain Q; forcing action u in {1..d} sends the agent to state u-1,
// except with probability epsilon[u-1] it follows Q instead:
//   P(0) = Q,  P(u) = (1 - eps_u) K_u + eps_u Q,
// where K_u has column u-1 all ones.
inline MinorKernel build_forced_mix_kernel(const Matrix& q_in, const std::vector<double>& epsilon) {
  const int d = static_cast<int>(q_in.size());
  if (d < 1) throw SchemaError("forced-mix kernel: Q is empty");
  for (const auto& row : q_in)
    if (static_cast<int>(row.size()) != d) throw SchemaError("forced-mix kernel: Q is not square");
  if (static_cast<int>(epsilon.size()) != d)
    throw SchemaError("forced-mix kernel: need one epsilon per forcing action");
  for (double e : epsilon)
    if (!(e >= 0.0 && e <= 1.0))
      throw SchemaError("forced-mix kernel: epsilon must lie in [0, 1]");

  Matrix q = q_in;
  validate_and_normalize_matrix(q, "forced-mix Q");

  auto matrices = std::make_shared<std::vector<Matrix>>();
  matrices->push_back(q);  // action 0
  for (int u = 1; u <= d; ++u) {
    Matrix p(d, std::vector<double>(d, 0.0));
    const double eps = epsilon[u - 1];
    for (int x = 0; x < d; ++x)
      for (int y = 0; y < d; ++y) {
        const double forced = (y == u - 1) ? 1.0 : 0.0;
        p[x][y] = (1.0 - eps) * forced + eps * q[x][y];
      }
    matrices->push_back(std::move(p));
  }

  MinorKernel k;
  k.decl = ForcedMixDecl{q, epsilon};
  k.state_homogeneous = true;
  k.row = [matrices](const MeanField&, int, int action, AugmentedState x) {
    return (*matrices)[action][x.local];
  };
  return k;
}

inline MajorKernel make_sentinel_major() {
  MajorKernel k;
  k.state_homogeneous = true;
  k.row = [](const MeanField&, int, int) { return std::vector<double>{1.0}; };
  return k;
}

// Major state jumps to the chosen action: X0' = U0.
inline MajorKernel make_deterministic_set_major(int num_states) {
  MajorKernel k;
  k.decl = DeterministicSetDecl{};
  k.state_homogeneous = true;
  k.row = [num_states](const MeanField&, int, int u0) {
    std::vector<double> row(num_states, 0.0);
    row[u0] = 1.0;
    return row;
  };
  return k;
}

inline MajorKernel make_table_major(MajorTableDecl decl, int num_states, int num_actions) {
  if (static_cast<int>(decl.per_action.size()) != num_actions)
    throw SchemaError("major kernel: need one matrix per action");
  for (auto& m : decl.per_action) {
    if (static_cast<int>(m.size()) != num_states)
      throw SchemaError("major kernel: matrix has wrong row count");
    for (auto& row : m)
      if (static_cast<int>(row.size()) != num_states)
        throw SchemaError("major kernel: matrix has wrong column count");
    validate_and_normalize_matrix(m, "major kernel");
  }
  auto table = std::make_shared<const MajorTableDecl>(decl);
  MajorKernel k;
  k.decl = *table;
  k.state_homogeneous = true;
  k.row = [table](const MeanField&, int x0, int u0) { return table->per_action[u0][x0]; };
  return k;
}

// ---------------------------------------------------------------------------
// Cost factories.

// Service-provider family over a 2-state user population:
//   S(u0) + adjust * |label(u0) - label(x0)| - G(z, x0) + sum_x counts(x) H(gamma(x))
// with G the served-benefit / shortage-penalty term driven by the number of
// active users n*z(1) against the current capacity.
inline CostModel make_capacity_service_cost(CapacityServiceDecl decl,
                                            std::vector<double> state_labels,
                                            std::vector<double> action_labels) {
  CostModel c;
  c.decl = decl;
  c.fn = [decl = std::move(decl), state_labels = std::move(state_labels),
          action_labels = std::move(action_labels)](const MeanField& z, int x0,
                                                    std::span<const int> gamma, int u0) {
    const double capacity = state_labels[x0];
    const double active = static_cast<double>(z.counts[1]);
    double served;
    if (active <= capacity)
      served = decl.benefit_rate * active;
    else
      served = decl.benefit_rate * capacity - decl.shortage_rate * (active - capacity);
    double cost = decl.supply_cost[u0] +
                  decl.adjust_rate * std::abs(action_labels[u0] - capacity) - served;
    for (int x = 0; x < z.dim(); ++x)
      if (z.counts[x] > 0) cost += static_cast<double>(z.counts[x]) * decl.action_cost[gamma[x]];
    return cost;
  };
  return c;
}

// Exchangeable per-agent action costs plus an optional major term:
//   sum_x n z(x) H_type(x)(gamma(x)) + major[x0][u0].
inline CostModel make_separable_cost(SeparableDecl decl, std::vector<TypeId> type_of_flat) {
  CostModel c;
  c.decl = decl;
  c.fn = [decl = std::move(decl), type_of_flat = std::move(type_of_flat)](
             const MeanField& z, int x0, std::span<const int> gamma, int u0) {
    double cost = decl.major.empty() ? 0.0 : decl.major[x0][u0];
    for (int x = 0; x < z.dim(); ++x)
      if (z.counts[x] > 0)
        cost += static_cast<double>(z.counts[x]) * decl.action_cost[type_of_flat[x]][gamma[x]];
    return cost;
  };
  return c;
}

inline std::uint64_t mixed_radix_rank(std::span<const int> digits, std::span<const int> radix) {
  // digits[0] is the most significant position.
  std::uint64_t r = 0;
  for (std::size_t i = 0; i < digits.size(); ++i)
    r = r * static_cast<std::uint64_t>(radix[i]) + static_cast<std::uint64_t>(digits[i]);
  return r;
}

// Dense cost table indexed by (lattice rank, major state, prescription rank,
// major action), in the canonical enumeration orders.
inline CostModel make_table_cost(TableCostDecl decl, std::int64_t population,
                                 std::vector<int> radix) {
  auto lat = std::make_shared<const Lattice>(population, static_cast<int>(radix.size()));
  CostModel c;
  c.decl = decl;
  c.fn = [decl = std::move(decl), lat, radix = std::move(radix)](
             const MeanField& z, int x0, std::span<const int> gamma, int u0) {
    const std::uint64_t zi = lat->rank(z);
    const std::uint64_t gi = mixed_radix_rank(gamma, radix);
    return decl.values.at(zi).at(x0).at(gi).at(u0);
  };
  return c;
}

inline CostModel make_zero_cost() {
  CostModel c;
  c.fn = [](const MeanField&, int, std::span<const int>, int) { return 0.0; };
  return c;
}

}  // namespace mfc
