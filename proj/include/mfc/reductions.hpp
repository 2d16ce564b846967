#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfc/errors.hpp"
#include "mfc/lattice.hpp"
#include "mfc/model.hpp"
#include "mfc/solver.hpp"

namespace mfc {

// Bijection between typed states (type, local) and the flat augmented range
// that concatenates the per-type state spaces.
struct AugmentationMap {
  std::vector<int> type_offset;               // size k+1, last entry = flat count
  std::vector<AugmentedState> flat_to_typed;  // size flat count

  int flat_count() const { return type_offset.back(); }
  int to_flat(AugmentedState x) const { return type_offset[x.type] + x.local; }
  AugmentedState to_typed(int flat) const { return flat_to_typed[flat]; }
};

inline AugmentationMap make_augmentation(const ModelSpec& spec) {
  AugmentationMap map;
  map.type_offset.push_back(0);
  for (TypeId t = 0; t < static_cast<TypeId>(spec.types.size()); ++t) {
    for (int s = 0; s < spec.types[t].num_states; ++s)
      map.flat_to_typed.push_back(AugmentedState{t, s});
    map.type_offset.push_back(map.type_offset.back() + spec.types[t].num_states);
  }
  return map;
}

struct AugmentedModel {
  ModelSpec spec;  // single type over the flat state space
  AugmentationMap map;
};

// Change of variables collapsing the multi-type model onto a single type over
// the flat augmented state space. Per-state admissible action counts carry the
// original per-type action spaces; kernels and costs are transported through
// the map. Solving the result is equivalent to solving the input, state for
// state.
inline AugmentedModel augment(const ModelSpec& typed) {
  typed.validate();
  AugmentationMap map = make_augmentation(typed);
  const int d = map.flat_count();

  ModelSpec flat;
  int max_actions = 1;
  std::vector<int> per_state;
  for (int x = 0; x < d; ++x) {
    per_state.push_back(typed.actions_at(x));
    max_actions = std::max(max_actions, per_state.back());
  }
  flat.types = {TypeBlock{typed.population(), d, max_actions}};
  flat.per_state_actions = std::move(per_state);
  flat.has_major = typed.has_major;
  flat.num_major_states = typed.num_major_states;
  flat.num_major_actions = typed.num_major_actions;
  flat.major_state_labels = typed.major_state_labels;
  flat.major_action_labels = typed.major_action_labels;
  flat.major_kernel = typed.major_kernel;
  flat.costs = typed.costs;            // already expressed over flat prescriptions
  flat.objective = typed.objective;

  auto offsets = std::make_shared<const AugmentationMap>(map);
  for (const auto& mk : typed.minor_kernels) {
    MinorKernel wrapped;
    wrapped.state_homogeneous = mk.state_homogeneous;
    wrapped.row = [inner = mk.row, offsets, d](const MeanField& z, int x0, int action,
                                               AugmentedState x) {
      const AugmentedState orig = offsets->to_typed(x.local);
      const std::vector<double> local = inner(z, x0, action, orig);
      std::vector<double> out(d, 0.0);
      const int off = offsets->type_offset[orig.type];
      for (std::size_t y = 0; y < local.size(); ++y) out[off + static_cast<int>(y)] = local[y];
      return out;
    };
    flat.minor_kernels.push_back(std::move(wrapped));
  }
  flat.validate();
  return AugmentedModel{std::move(flat), std::move(map)};
}

// Induced per-type control law of a solved policy: U = g(type, z, local).
inline int typed_minor_action(const PolicyTable& policy, const AugmentationMap& map,
                              std::uint64_t state_index, int x0, AugmentedState x) {
  return policy.minor_action_at(state_index, x0, map.to_flat(x));
}

// ---------------------------------------------------------------------------
// Embedding of the major subsystem as a population-1 type. The combined
// mean-field over n+1 subsystems, restricted to points carrying exactly one
// unit of major-type mass, is in bijection with (z, x0). The transform exists
// as a cross-validation path; the direct (z, x0) solve is the production one.

struct MajorEmbedding {
  ModelSpec embedded;           // sentinel major block; original types + major type
  std::int64_t minor_population = 0;
  int minor_flat_states = 0;    // d; major block occupies [d, d + num_major_states)
  int num_major_states = 0;

  MeanField embed_point(const MeanField& z, int x0) const {
    MeanField out;
    out.counts = z.counts;
    out.counts.resize(minor_flat_states + num_major_states, 0);
    out.counts[minor_flat_states + x0] = 1;
    out.n = z.n + 1;
    return out;
  }

  std::pair<MeanField, int> split_point(const MeanField& combined) const {
    MeanField z;
    z.counts.assign(combined.counts.begin(), combined.counts.begin() + minor_flat_states);
    z.n = minor_population;
    int x0 = -1;
    for (int j = 0; j < num_major_states; ++j) {
      const std::int32_t c = combined.counts[minor_flat_states + j];
      if (c == 1 && x0 < 0)
        x0 = j;
      else if (c != 0)
        x0 = -2;
    }
    if (x0 < 0)
      throw LookupError("combined mean-field does not carry exactly one unit of major mass");
    return {std::move(z), x0};
  }

  // Reachable combined lattice: minor compositions crossed with the major
  // position, ordered by (minor colex rank, major state). Point i*|X0| + x0
  // corresponds to the direct state (i, x0).
  std::vector<MeanField> reachable_points() const {
    std::vector<MeanField> pts;
    const Lattice minor_lat(minor_population, minor_flat_states);
    pts.reserve(minor_lat.size() * static_cast<std::uint64_t>(num_major_states));
    minor_lat.for_each([&](std::uint64_t, const MeanField& z) {
      for (int x0 = 0; x0 < num_major_states; ++x0) pts.push_back(embed_point(z, x0));
    });
    return pts;
  }

  StateSpace reachable_state_space() const {
    return StateSpace::restricted(minor_population + 1,
                                  minor_flat_states + num_major_states, reachable_points());
  }
};

inline MajorEmbedding embed_major_as_type(const ModelSpec& spec) {
  spec.validate();
  if (!spec.has_major)
    throw SchemaError("embedding requires a model with a major subsystem");

  MajorEmbedding emb;
  emb.minor_population = spec.population();
  emb.minor_flat_states = spec.flat_states();
  emb.num_major_states = spec.num_major_states;

  const int d = emb.minor_flat_states;
  const int d0 = emb.num_major_states;
  const TypeId major_type = static_cast<TypeId>(spec.types.size());
  const std::int64_t n = emb.minor_population;

  ModelSpec& out = emb.embedded;
  out.types = spec.types;
  out.types.push_back(TypeBlock{1, d0, spec.num_major_actions});
  if (!spec.per_state_actions.empty()) {
    out.per_state_actions = spec.per_state_actions;
    out.per_state_actions.insert(out.per_state_actions.end(), d0, spec.num_major_actions);
  }
  out.has_major = false;
  out.major_kernel = make_sentinel_major();
  out.objective = spec.objective;

  auto split = [d, d0, n](const MeanField& combined) {
    MeanField z;
    z.counts.assign(combined.counts.begin(), combined.counts.begin() + d);
    z.n = n;
    int x0 = -1;
    for (int j = 0; j < d0; ++j)
      if (combined.counts[d + j] > 0) x0 = j;
    if (x0 < 0) throw LookupError("combined mean-field carries no major mass");
    return std::make_pair(std::move(z), x0);
  };

  for (const auto& mk : spec.minor_kernels) {
    MinorKernel wrapped;
    wrapped.row = [inner = mk.row, major = spec.major_kernel.row, split, major_type](
                      const MeanField& combined, int, int action, AugmentedState x) {
      auto [z, x0] = split(combined);
      if (x.type == major_type) return major(z, x.local, action);
      return inner(z, x0, action, x);
    };
    out.minor_kernels.push_back(std::move(wrapped));
  }

  for (const auto& cost : spec.costs) {
    CostModel wrapped;
    wrapped.fn = [inner = cost.fn, split, d](const MeanField& combined, int,
                                             std::span<const int> gamma, int) {
      auto [z, x0] = split(combined);
      const int u0 = gamma[d + x0];
      return inner(z, x0, gamma.first(d), u0);
    };
    out.costs.push_back(std::move(wrapped));
  }

  out.validate();
  return emb;
}

}  // namespace mfc
