// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 csipred contributors

#ifndef CSIPRED_RNG_HPP
#define CSIPRED_RNG_HPP

#include <cstdint>
#include <vector>

namespace csipred {

// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Derives an independent child seed from (base, stream). Used to give every
// link, split, epoch and sweep point its own reproducible stream.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return mix64(base + 0x9E3779B97F4A7C15ull * (stream + 1));
}

// Minimal 64-bit generator (splitmix64). All randomness in the project goes
// through this type so results do not depend on the platform's <random>
// distributions.
class Rng64 {
  public:
    explicit Rng64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ull;
        return mix64(state_);
    }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) via rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % n;
        std::uint64_t x;
        do {
            x = next();
        } while (x >= limit);
        return x % n;
    }

    // Fisher-Yates; deterministic for a fixed generator state.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::uint64_t state_;
};

} // namespace csipred

#endif
