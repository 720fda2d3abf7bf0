#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <vector>

namespace w2v {

// Counter-based randomness. Every random draw in the project is a pure
// function of a small set of integer keys (seed, step, utterance, ...),
// so checkpoint resume needs no engine state beyond the keys themselves.

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t mix_keys(std::initializer_list<uint64_t> keys) {
    uint64_t h = 0x2545f4914f6cdd1dULL;
    for (uint64_t k : keys) h = splitmix64(h ^ k);
    return h;
}

class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(splitmix64(seed)) {}
    Rng(std::initializer_list<uint64_t> keys) : state_(mix_keys(keys)) {}

    uint64_t next_u64() {
        state_ = splitmix64(state_);
        return state_;
    }

    // [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        // avoid log(0)
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double gumbel() {
        double u = uniform();
        if (u < 1e-300) u = 1e-300;
        return -std::log(-std::log(u));
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = uniform_int(i);
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace w2v
