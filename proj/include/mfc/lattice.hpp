#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mfc/errors.hpp"

namespace mfc {

// Empirical distribution of a population of n agents over d augmented states,
// stored as the integer count vector (so fractions are exact multiples of 1/n).
struct MeanField {
  std::vector<std::int32_t> counts;
  std::int64_t n = 0;

  int dim() const { return static_cast<int>(counts.size()); }
  double fraction(int x) const { return static_cast<double>(counts[x]) / static_cast<double>(n); }

  // Unit-population point mass, and the all-mass-at-x corner of a larger lattice.
  static MeanField point_mass(int d, int x, std::int64_t n) {
    MeanField z;
    z.counts.assign(d, 0);
    z.counts[x] = static_cast<std::int32_t>(n);
    z.n = n;
    return z;
  }

  bool operator==(const MeanField& other) const = default;
};

// The composition lattice: all nonnegative integer vectors of length d that
// sum to n. Canonical enumeration order is colexicographic (vectors compared
// at their highest differing coordinate), which makes indices reproducible
// across runs and implementations. For d = 2 the rank of (n-k, k) is simply k.
//
// rank() uses the hockey-stick identity: with prefix sums S_j = c_0+...+c_j,
//   rank(c) = sum_{j>=1} [ C(S_j + j, j) - C(S_j - c_j + j, j) ].
class Lattice {
 public:
  static constexpr std::uint64_t kMaxPoints = 10'000'000;

  Lattice(std::int64_t population, int states) : n_(population), d_(states) {
    if (n_ < 1 || d_ < 1) throw SchemaError("lattice requires population >= 1 and states >= 1");
    build_binomials();
    size_ = size_at(n_);
    if (size_ > kMaxPoints) {
      throw CapacityError("lattice has " + std::to_string(size_) + " points, cap is " +
                          std::to_string(kMaxPoints));
    }
  }

  std::int64_t population() const { return n_; }
  int states() const { return d_; }
  std::uint64_t size() const { return size_; }

  // Number of compositions of mass m into d parts: C(m + d - 1, d - 1).
  std::uint64_t size_at(std::int64_t m) const { return choose(m + d_ - 1, d_ - 1); }

  // Rank of a count vector among compositions of its own total, colex order.
  std::uint64_t rank(std::span<const std::int32_t> c) const {
    std::uint64_t r = 0;
    std::int64_t prefix = c[0];
    for (int j = 1; j < d_; ++j) {
      prefix += c[j];
      if (c[j] > 0) r += choose(prefix + j, j) - choose(prefix - c[j] + j, j);
    }
    return r;
  }
  std::uint64_t rank(const MeanField& z) const { return rank(std::span<const std::int32_t>(z.counts)); }

  // Inverse of rank() for compositions of mass m.
  std::vector<std::int32_t> unrank_mass(std::uint64_t idx, std::int64_t m) const {
    std::vector<std::int32_t> c(d_, 0);
    std::int64_t rem = m;
    for (int j = d_ - 1; j >= 1; --j) {
      std::int32_t v = 0;
      for (;; ++v) {
        std::uint64_t block = choose(rem - v + j - 1, j - 1);
        if (idx < block) break;
        idx -= block;
      }
      c[j] = v;
      rem -= v;
    }
    c[0] = static_cast<std::int32_t>(rem);
    return c;
  }

  MeanField unrank(std::uint64_t idx) const {
    if (idx >= size_) throw LookupError("lattice index " + std::to_string(idx) + " out of range");
    return MeanField{unrank_mass(idx, n_), n_};
  }

  // Advances c to its colex successor among compositions of the same total.
  // Returns false when c was the last composition.
  static bool next_composition(std::span<std::int32_t> c) {
    const int d = static_cast<int>(c.size());
    int p = 0;
    while (p < d && c[p] == 0) ++p;
    if (p >= d - 1) return false;
    std::int32_t freed = c[p] - 1;
    c[p] = 0;
    c[p + 1] += 1;
    c[0] = freed;
    return true;
  }

  std::vector<MeanField> enumerate() const {
    std::vector<MeanField> out;
    out.reserve(size_);
    MeanField z = MeanField::point_mass(d_, 0, n_);
    out.push_back(z);
    while (next_composition(std::span<std::int32_t>(z.counts))) out.push_back(z);
    return out;
  }

  template <class Fn>
  void for_each(Fn&& fn) const {
    MeanField z = MeanField::point_mass(d_, 0, n_);
    std::uint64_t idx = 0;
    do {
      fn(idx, static_cast<const MeanField&>(z));
      ++idx;
    } while (next_composition(std::span<std::int32_t>(z.counts)));
  }

 private:
  std::uint64_t choose(std::int64_t a, std::int64_t b) const {
    if (b < 0 || a < 0 || b > a) return 0;
    return binom_[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
  }

  void build_binomials() {
    // Entries are capped: anything used by rank/size stays <= C(n+d-1, d-1),
    // but Pascal's triangle is filled saturating to avoid overflow on the rim.
    const std::size_t rows = static_cast<std::size_t>(n_ + d_) + 1;
    const std::size_t cols = static_cast<std::size_t>(d_) + 1;
    constexpr std::uint64_t kSat = ~std::uint64_t{0} / 2;
    binom_.assign(rows, std::vector<std::uint64_t>(cols, 0));
    for (std::size_t a = 0; a < rows; ++a) {
      binom_[a][0] = 1;
      for (std::size_t b = 1; b < cols && b <= a; ++b) {
        std::uint64_t up = binom_[a - 1][b];
        std::uint64_t left = b <= a - 1 ? binom_[a - 1][b - 1] : (b == a ? 1 : 0);
        if (b == a) {
          binom_[a][b] = 1;
          continue;
        }
        std::uint64_t sum = up + left;
        binom_[a][b] = (sum < up || sum > kSat) ? kSat : sum;
      }
      if (static_cast<std::size_t>(a) < cols) binom_[a][a] = 1;
    }
  }

  std::int64_t n_;
  int d_;
  std::uint64_t size_ = 0;
  std::vector<std::vector<std::uint64_t>> binom_;
};

}  // namespace mfc
