#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace stratx {

// Seeded, splittable random stream. Identical (seed, stream) pairs produce
// identical draw sequences; distinct streams from the same seed are
// statistically independent. All randomness in the library flows through
// instances of this class -- there is no global generator.
//
// Core generator is xoshiro256++ with state filled by a splitmix64 chain
// over (seed, stream).
class Rng {
  public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t next_u64();

    // Uniform on [0, 1) with 53 random bits.
    double uniform();

    // Uniform on {0, ..., bound-1}, rejection-sampled (no modulo bias).
    int uniform_int(int bound);

    double standard_normal();

    // Student t with 3 degrees of freedom via N(0,1) / sqrt(chi2_3 / 3).
    double t3();

    // Random permutation of {0, ..., n-1} (Fisher-Yates).
    std::vector<int> permutation(int n);

    // k distinct indices from {0, ..., n-1}, uniformly over all subsets
    // (partial Fisher-Yates). Throws DomainError if k > n or k < 0.
    std::vector<int> choose_without_replacement(int n, int k);

  private:
    std::array<std::uint64_t, 4> state_;
    double spare_normal_ = 0.0;
    bool have_spare_ = false;
};

// Deterministic 64-bit mix used to derive sub-seeds (e.g. the per-population
// seed from the master seed and a cell key).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace stratx
