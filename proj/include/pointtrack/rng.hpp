#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace pointtrack {

/// splitmix64; used to derive independent stream seeds from (seed, tag).
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t seed, uint64_t v) {
    return splitmix64(seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

inline uint64_t hash_str(const std::string& s, uint64_t seed = 0) {
    uint64_t h = splitmix64(seed ^ 0xcbf29ce484222325ULL);
    for (unsigned char c : s) h = splitmix64(h ^ c);
    return h;
}

/// xoshiro256** with hand-rolled distributions so sequences are identical
/// across standard library implementations.
class Rng {
  public:
    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& si : s_) si = x = splitmix64(x);
    }

    /// Independent child stream, keyed by a purpose tag.
    Rng fork(const std::string& tag) const {
        return Rng(hash_combine(s_[0] ^ s_[3], hash_str(tag)));
    }
    Rng fork(uint64_t tag) const { return Rng(hash_combine(s_[0] ^ s_[3], splitmix64(tag))); }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    int64_t uniform_int(int64_t n) {
        // rejection sampling keeps the draw unbiased
        const uint64_t un = static_cast<uint64_t>(n);
        const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return static_cast<int64_t>(x % un);
    }

    int64_t uniform_int(int64_t lo, int64_t hi_inclusive) {
        return lo + uniform_int(hi_inclusive - lo + 1);
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename It>
    void shuffle(It first, It last) {
        const int64_t n = static_cast<int64_t>(last - first);
        for (int64_t i = n - 1; i > 0; --i) std::swap(first[i], first[uniform_int(i + 1)]);
    }

    /// k distinct values from [0, n), in random order.
    std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k) {
        std::vector<int64_t> idx(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
        shuffle(idx.begin(), idx.end());
        idx.resize(static_cast<size_t>(std::min(k, n)));
        return idx;
    }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_[4];
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace pointtrack
