#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "core.hpp"
#include "errors.hpp"

namespace mfe {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Output is a
// pure function of (key, counter), so a draw can be addressed directly by
// (seed, sample, step, component) without any sequential state.
class Philox4x32 {
public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      ctr = single_round(ctr, key);
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }

private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static Counter single_round(const Counter& c, const Key& k) {
    const std::uint64_t p0 = std::uint64_t{kMul0} * c[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * c[2];
    return {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0],
            static_cast<std::uint32_t>(p1), static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1],
            static_cast<std::uint32_t>(p0)};
  }
};

// Draws keyed by (master_seed, stream, index, component).
class CounterRng {
public:
  explicit CounterRng(std::uint64_t master_seed)
      : key_{static_cast<std::uint32_t>(master_seed),
             static_cast<std::uint32_t>(master_seed >> 32)} {}

  std::array<std::uint64_t, 2> bits(std::uint64_t stream, std::uint32_t index,
                                    std::uint32_t component) const {
    const auto out = Philox4x32::generate(
        {static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), index,
         component},
        key_);
    return {(std::uint64_t{out[0]} << 32) | out[1], (std::uint64_t{out[2]} << 32) | out[3]};
  }

  // Uniform in (0, 1]; 53 random bits.
  double uniform(std::uint64_t stream, std::uint32_t index, std::uint32_t component) const {
    return to_unit(bits(stream, index, component)[0]);
  }

  // Standard normal via Box-Muller on the two 64-bit words.
  double normal(std::uint64_t stream, std::uint32_t index, std::uint32_t component) const {
    const auto b = bits(stream, index, component);
    const double u1 = to_unit(b[0]);
    const double u2 = to_unit(b[1]);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

private:
  static double to_unit(std::uint64_t w) {
    return (static_cast<double>(w >> 11) + 1.0) * 0x1.0p-53;
  }

  Philox4x32::Key key_;
};

// Shared Brownian increments: row s holds (dB^1, ..., dB^d) over [s dt, (s+1) dt).
// The path depends only on (master_seed, sample), never on the particle count.
struct NoisePath {
  int dim = 1;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t sample = 0;
  std::vector<double> increments;

  std::size_t steps() const { return dim > 0 ? increments.size() / dim : 0; }

  std::span<const double> increment(std::size_t step) const {
    return {increments.data() + step * dim, static_cast<std::size_t>(dim)};
  }

  // Running sum B_t at the end of `steps` increments, per component.
  Vec brownian(std::size_t steps_taken) const {
    Vec b{};
    for (std::size_t s = 0; s < steps_taken; ++s)
      for (int q = 0; q < dim; ++q) b[q] += increments[s * dim + q];
    return b;
  }

  static NoisePath generate(int dim, std::size_t steps, double dt, std::uint64_t master_seed,
                            std::uint64_t sample) {
    require(dim >= 1 && dim <= kMaxDim, "noise path dimension out of range");
    require(dt > 0.0, "noise path dt must be positive");
    NoisePath p{dim, dt, master_seed, sample, std::vector<double>(steps * dim)};
    const CounterRng rng(master_seed);
    const double scale = std::sqrt(dt);
    for (std::size_t s = 0; s < steps; ++s)
      for (int q = 0; q < dim; ++q)
        p.increments[s * dim + q] =
            scale * rng.normal(sample, static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(q));
    return p;
  }

  // Sums consecutive blocks of `factor` increments: the same Brownian path
  // observed on a coarser time grid.
  NoisePath coarsen(std::size_t factor) const {
    require(factor >= 1 && steps() % factor == 0, "coarsening factor must divide the step count");
    NoisePath c{dim, dt * static_cast<double>(factor), seed, sample,
                std::vector<double>(increments.size() / factor, 0.0)};
    for (std::size_t s = 0; s < steps(); ++s)
      for (int q = 0; q < dim; ++q) c.increments[(s / factor) * dim + q] += increments[s * dim + q];
    return c;
  }
};

} // namespace mfe
