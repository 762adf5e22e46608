#include "stratx/rng.hpp"

#include <cmath>
#include <numeric>

#include "stratx/errors.hpp"

namespace stratx {

namespace {

inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a;
    (void)splitmix64(x);
    x ^= b * 0xd1342543de82ef95ULL + 0x632be59bd9b4e019ULL;
    return splitmix64(x);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t x = mix_seed(seed, stream);
    for (auto& s : state_) s = splitmix64(x);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

int Rng::uniform_int(int bound) {
    if (bound <= 0) throw DomainError("uniform_int: bound must be positive");
    const std::uint64_t b = static_cast<std::uint64_t>(bound);
    const std::uint64_t threshold = (0 - b) % b;  // 2^64 mod b
    for (;;) {
        const std::uint64_t r = next_u64();
        if (r >= threshold) return static_cast<int>(r % b);
    }
}

double Rng::standard_normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_normal_;
    }
    // Marsaglia polar method.
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_normal_ = v * f;
    have_spare_ = true;
    return u * f;
}

double Rng::t3() {
    const double z = standard_normal();
    double chi2 = 0.0;
    for (int i = 0; i < 3; ++i) {
        const double g = standard_normal();
        chi2 += g * g;
    }
    return z / std::sqrt(chi2 / 3.0);
}

std::vector<int> Rng::permutation(int n) {
    if (n < 0) throw DomainError("permutation: n must be nonnegative");
    std::vector<int> out(static_cast<std::size_t>(n));
    std::iota(out.begin(), out.end(), 0);
    for (int i = n - 1; i > 0; --i) {
        const int j = uniform_int(i + 1);
        std::swap(out[static_cast<std::size_t>(i)], out[static_cast<std::size_t>(j)]);
    }
    return out;
}

std::vector<int> Rng::choose_without_replacement(int n, int k) {
    if (k < 0 || k > n) throw DomainError("choose_without_replacement: require 0 <= k <= n");
    std::vector<int> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < k; ++i) {
        const int j = i + uniform_int(n - i);
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }
    pool.resize(static_cast<std::size_t>(k));
    return pool;
}

}  // namespace stratx
