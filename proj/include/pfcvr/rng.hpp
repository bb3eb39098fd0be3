#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "pfcvr/matrix.hpp"

namespace pfcvr {

// mt19937_64 with transforms pinned here rather than delegated to
// std::*_distribution, so sampled streams are identical everywhere.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    int uniform_int(int n) {
        check(n > 0, "Rng::uniform_int: n must be positive");
        return static_cast<int>(uniform() * n);
    }

    // Box-Muller, one value per call (no cached second draw, keeps replay simple)
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        return mean + stddev * z;
    }

    // First m entries of a Fisher-Yates pass over [0, n); order randomized.
    std::vector<int> sample_without_replacement(int n, int m) {
        check(m >= 0 && m <= n, "Rng::sample_without_replacement: m out of range");
        std::vector<int> pool(n);
        for (int i = 0; i < n; ++i) pool[i] = i;
        for (int i = 0; i < m; ++i) {
            int j = i + uniform_int(n - i);
            std::swap(pool[i], pool[j]);
        }
        pool.resize(m);
        return pool;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            int j = uniform_int(i + 1);
            std::swap(v[i], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
};

// splitmix64; derives independent per-record / per-step seeds from a master seed.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline Mat random_normal_mat(Rng& rng, int rows, int cols, double stddev) {
    Mat m(rows, cols);
    for (double& v : m.data) v = rng.normal(0.0, stddev);
    return m;
}

}  // namespace pfcvr
