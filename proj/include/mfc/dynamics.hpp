#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfc/errors.hpp"
#include "mfc/lattice.hpp"
#include "mfc/model.hpp"
#include "mfc/parallel.hpp"

namespace mfc {

// Coordinator action: one minor action per flat augmented state, plus the
// major action when a major subsystem is present.
struct Prescription {
  std::vector<int> action;
  int major_action = 0;
  bool operator==(const Prescription&) const = default;
};

// Law of the successor mean-field as (lattice rank, probability) pairs,
// together with the successor-major-state row. Minor and major noises are
// independent, so the joint law is the product of the two parts.
using SuccessorDist = std::vector<std::pair<std::uint64_t, double>>;

struct KernelMatrix {
  SuccessorDist mean_field;
  std::vector<double> major;
};

namespace detail {

// Query-time contract on kernel rows: entries >= -1e-15 (clamped to zero),
// mass within 1e-12 of 1 (then renormalized). Anything worse is a model bug.
inline void check_query_row(std::vector<double>& row, const char* where) {
  double sum = 0.0;
  for (double& v : row) {
    if (v < 0.0) {
      if (v < -1e-15)
        throw StochasticityError(std::string(where) + ": negative probability " +
                                 std::to_string(v));
      v = 0.0;
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw StochasticityError(std::string(where) + ": row sums to " + std::to_string(sum));
  for (double& v : row) v /= sum;
}

}  // namespace detail

// Minor transition row for an agent at flat state x, lifted onto the flat
// augmented space (support stays inside the state's type block; types are
// fixed over time).
inline std::vector<double> flat_minor_row(const ModelSpec& spec, int stage, const MeanField& z,
                                          int x0, int action, int flat_x) {
  const AugmentedState ax = spec.to_augmented(flat_x);
  std::vector<double> local = spec.minor_kernel_at(stage).row(z, x0, action, ax);
  if (static_cast<int>(local.size()) != spec.types[ax.type].num_states)
    throw ModelError("minor kernel returned a row of wrong length for type " +
                     std::to_string(ax.type));
  detail::check_query_row(local, "minor kernel");
  std::vector<double> flat(spec.flat_states(), 0.0);
  const int off = spec.type_offset(ax.type);
  for (std::size_t y = 0; y < local.size(); ++y) flat[off + static_cast<int>(y)] = local[y];
  return flat;
}

// One validated row per occupied source state; unoccupied states get an
// empty vector.
inline std::vector<std::vector<double>> minor_step_rows(const ModelSpec& spec, int stage,
                                                        const MeanField& z, int x0,
                                                        std::span<const int> gamma) {
  std::vector<std::vector<double>> rows(z.dim());
  for (int x = 0; x < z.dim(); ++x)
    if (z.counts[x] > 0) rows[x] = flat_minor_row(spec, stage, z, x0, gamma[x], x);
  return rows;
}

namespace detail {

// Successor law of one type block: the block's agents transition
// independently inside the block, so we convolve them one at a time over
// dense layers of partial local count vectors (mass m -> m+1). Returns
// (local counts, probability) pairs.
inline std::vector<std::pair<std::vector<std::int32_t>, double>> block_law(
    const std::vector<std::vector<double>>& flat_rows, const MeanField& z, int offset,
    int width) {
  std::int64_t mass = 0;
  for (int s = 0; s < width; ++s) mass += z.counts[offset + s];

  std::vector<std::pair<std::vector<std::int32_t>, double>> out;
  if (mass == 0) {
    out.emplace_back(std::vector<std::int32_t>(width, 0), 1.0);
    return out;
  }

  const Lattice block_lat(mass, width);
  std::vector<double> layer{1.0};
  std::int64_t filled = 0;
  std::vector<std::int32_t> c(width, 0);
  for (int s = 0; s < width; ++s) {
    const int x = offset + s;
    for (std::int32_t rep = 0; rep < z.counts[x]; ++rep) {
      std::vector<double> next(block_lat.size_at(filled + 1), 0.0);
      std::fill(c.begin(), c.end(), 0);
      c[0] = static_cast<std::int32_t>(filled);
      std::uint64_t idx = 0;
      do {
        const double p = layer[idx];
        if (p != 0.0) {
          const auto& row = flat_rows[x];
          for (int y = 0; y < width; ++y) {
            const double q = row[offset + y];
            if (q == 0.0) continue;
            c[y] += 1;
            next[block_lat.rank(c)] += p * q;
            c[y] -= 1;
          }
        }
        ++idx;
      } while (Lattice::next_composition(c));
      layer = std::move(next);
      ++filled;
    }
  }
  for (std::uint64_t i = 0; i < layer.size(); ++i)
    if (layer[i] > 0.0) out.emplace_back(block_lat.unrank_mass(i, mass), layer[i]);
  return out;
}

}  // namespace detail

// Exact law of the successor count vector: the convolution over source states
// of independent per-agent transitions, computed one agent at a time over
// dense layers of partial count vectors. Types are fixed, so the law
// factorizes across type blocks and each block is convolved over its own
// (much smaller) composition lattice. Polynomial in n and numerically stable;
// round-off is renormalized if below 1e-10 and is a hard error beyond that.
inline SuccessorDist meanfield_kernel(const ModelSpec& spec, int stage, const Lattice& lat,
                                      const MeanField& z, int x0, std::span<const int> gamma) {
  const int d = z.dim();
  const auto rows = minor_step_rows(spec, stage, z, x0, gamma);

  std::vector<std::vector<std::pair<std::vector<std::int32_t>, double>>> blocks;
  std::vector<int> offsets;
  int off = 0;
  for (const auto& t : spec.types) {
    blocks.push_back(detail::block_law(rows, z, off, t.num_states));
    offsets.push_back(off);
    off += t.num_states;
  }
  if (off != d) throw ModelError("type blocks do not cover the flat state space");

  // Outer product across blocks, concatenated into flat count vectors.
  SuccessorDist out;
  std::vector<std::size_t> pick(blocks.size(), 0);
  std::vector<std::int32_t> counts(d, 0);
  double total = 0.0;
  while (true) {
    double p = 1.0;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto& [local, bp] = blocks[b][pick[b]];
      p *= bp;
      for (std::size_t y = 0; y < local.size(); ++y)
        counts[offsets[b] + static_cast<int>(y)] = local[y];
    }
    out.emplace_back(lat.rank(counts), p);
    total += p;
    std::size_t b = 0;
    while (b < blocks.size()) {
      if (++pick[b] < blocks[b].size()) break;
      pick[b] = 0;
      ++b;
    }
    if (b == blocks.size()) break;
  }

  if (std::abs(total - 1.0) > 1e-10)
    throw StochasticityError("mean-field kernel mass drifted to " + std::to_string(total));
  std::sort(out.begin(), out.end());
  for (auto& [i, p] : out) p /= total;
  return out;
}

inline std::vector<double> major_row(const ModelSpec& spec, const MeanField& z, int x0, int u0) {
  std::vector<double> row = spec.major_kernel.row(z, x0, u0);
  if (static_cast<int>(row.size()) != spec.num_major_states)
    throw ModelError("major kernel returned a row of wrong length");
  detail::check_query_row(row, "major kernel");
  return row;
}

inline KernelMatrix joint_kernel(const ModelSpec& spec, int stage, const Lattice& lat,
                                 const MeanField& z, int x0, std::span<const int> gamma, int u0) {
  return KernelMatrix{meanfield_kernel(spec, stage, lat, z, x0, gamma),
                      major_row(spec, z, x0, u0)};
}

inline double expected_stage_cost(const ModelSpec& spec, int stage, const MeanField& z, int x0,
                                  std::span<const int> gamma, int u0) {
  const double c = spec.cost_at(stage).fn(z, x0, gamma, u0);
  if (!std::isfinite(c)) throw ModelError("stage cost is not finite");
  return c;
}

// ---------------------------------------------------------------------------
// Tabulated mean-field kernels. Value iteration re-queries the same kernels
// every sweep, so when the prescription space is small enough we precompute
// one successor distribution per (state, major state, prescription). Kernels
// that ignore the major state collapse that axis. The table is filled in
// parallel over disjoint slots before any reads.

class TransitionTable {
 public:
  static constexpr std::uint64_t kMaxTabulatedPairs = 100'000;
  static constexpr std::uint64_t kMaxEntries = 4'000'000;

  TransitionTable(const ModelSpec& spec, const Lattice& lat, std::uint64_t num_states,
                  std::vector<int> gamma_radix, int stage)
      : spec_(&spec), lat_(&lat), num_states_(num_states), radix_(std::move(gamma_radix)),
        stage_(stage) {
    num_gamma_ = 1;
    for (int r : radix_) {
      num_gamma_ *= static_cast<std::uint64_t>(r);
      if (num_gamma_ > kMaxTabulatedPairs * 2) break;  // avoid overflow; disables tabulation
    }
    x0_dim_ = spec.minor_kernel_at(stage).state_homogeneous ? 1 : spec.num_major_states;
    const std::uint64_t pairs =
        num_gamma_ * static_cast<std::uint64_t>(spec.num_major_actions);
    const std::uint64_t entries = num_states_ * x0_dim_ * num_gamma_;
    tabulated_ = pairs <= kMaxTabulatedPairs && entries <= kMaxEntries;
  }

  bool tabulated() const { return tabulated_; }
  std::uint64_t num_gamma() const { return num_gamma_; }

  std::vector<int> decode_gamma(std::uint64_t g) const {
    std::vector<int> out(radix_.size());
    for (std::size_t i = radix_.size(); i-- > 0;) {
      out[i] = static_cast<int>(g % static_cast<std::uint64_t>(radix_[i]));
      g /= static_cast<std::uint64_t>(radix_[i]);
    }
    return out;
  }

  // point_of(i) must return the mean-field of state index i; remap converts
  // successor lattice ranks into the caller's state indexing.
  template <class PointOf, class Remap>
  void populate(PointOf&& point_of, Remap&& remap) {
    if (!tabulated_) return;
    store_.resize(num_states_ * x0_dim_ * num_gamma_);
    parallel_chunks(0, num_states_, [&](std::uint64_t lo, std::uint64_t hi, std::size_t) {
      for (std::uint64_t i = lo; i < hi; ++i) {
        const MeanField z = point_of(i);
        for (std::uint64_t x0 = 0; x0 < x0_dim_; ++x0) {
          for (std::uint64_t g = 0; g < num_gamma_; ++g) {
            const auto gamma = decode_gamma(g);
            SuccessorDist dist = meanfield_kernel(
                *spec_, stage_, *lat_, z, static_cast<int>(x0), gamma);
            for (auto& [rank, p] : dist) rank = remap(rank);
            store_[(i * x0_dim_ + x0) * num_gamma_ + g] = std::move(dist);
          }
        }
      }
    });
    populated_ = true;
  }

  const SuccessorDist* lookup(std::uint64_t state, int x0, std::uint64_t g) const {
    if (!populated_) return nullptr;
    const std::uint64_t xi = x0_dim_ == 1 ? 0 : static_cast<std::uint64_t>(x0);
    return &store_[(state * x0_dim_ + xi) * num_gamma_ + g];
  }

 private:
  const ModelSpec* spec_;
  const Lattice* lat_;
  std::uint64_t num_states_;
  std::vector<int> radix_;
  int stage_;
  std::uint64_t num_gamma_ = 1;
  std::uint64_t x0_dim_ = 1;
  bool tabulated_ = false;
  bool populated_ = false;
  std::vector<SuccessorDist> store_;
};

}  // namespace mfc
