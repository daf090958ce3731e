#pragma once
#include <cstdint>
#include <cstring>
#include <cmath>
#include <string>
#include <vector>

namespace intrin {

// Deterministic RNG with explicit stream derivation. Every consumer derives
// its own stream from (master seed, tag, counters), so adding a draw in one
// place never shifts the numbers another place sees, and re-rendering a chunk
// during the backward phase replays exactly the jitter used in the forward
// phase. Distributions are implemented by hand (uniform from the top 53 bits,
// Box-Muller for normals) so sequences do not depend on the C++ stdlib.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t hash_tag(const std::string& tag) {
    uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
    for (unsigned char c : tag) { h ^= c; h *= 0x100000001b3ULL; }
    return h;
}

// xoshiro256** seeded via splitmix64; small, fast, and fully portable.
class Rng {
public:
    explicit Rng(uint64_t seed) { reseed(seed); }
    Rng(uint64_t master, const std::string& tag, uint64_t a = 0, uint64_t b = 0, uint64_t c = 0) {
        uint64_t s = master;
        s = splitmix64(s ^ hash_tag(tag));
        s = splitmix64(s ^ a);
        s = splitmix64(s ^ b);
        s = splitmix64(s ^ c);
        reseed(s);
    }

    void reseed(uint64_t seed) {
        for (auto& si : s_) { seed = splitmix64(seed); si = seed; }
        have_gauss_ = false;
    }

    uint64_t next_u64() {
        auto rotl = [](uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
        uint64_t result = rotl(s_[1] * 5, 7) * 9;
        uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0]; s_[3] ^= s_[1]; s_[1] ^= s_[2]; s_[0] ^= s_[3];
        s_[2] ^= t; s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in [0,1)
    double uniform() { return (double)(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double log_uniform(double lo, double hi) { return std::exp(uniform(std::log(lo), std::log(hi))); }

    double normal() {
        if (have_gauss_) { have_gauss_ = false; return gauss_; }
        double u1, u2;
        do { u1 = uniform(); } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        gauss_ = r * std::sin(2.0 * M_PI * u2);
        have_gauss_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    int64_t uniform_int(int64_t n) { // [0, n)
        return (int64_t)(uniform() * (double)n) % n;
    }

    // serialization for checkpoints
    std::vector<uint64_t> state() const {
        std::vector<uint64_t> v(s_, s_ + 4);
        v.push_back(have_gauss_ ? 1 : 0);
        uint64_t bits; static_assert(sizeof(bits) == sizeof(gauss_));
        std::memcpy(&bits, &gauss_, 8);
        v.push_back(bits);
        return v;
    }
    void set_state(const std::vector<uint64_t>& v) {
        for (int i = 0; i < 4; i++) s_[i] = v[i];
        have_gauss_ = v[4] != 0;
        std::memcpy(&gauss_, &v[5], 8);
    }

private:
    uint64_t s_[4] = {};
    bool have_gauss_ = false;
    double gauss_ = 0.0;
};

} // namespace intrin
