#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace afd {

// FNV-1a 64-bit. Used for substream derivation and parameter digests.
inline uint64_t fnv1a64(const void* bytes, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), h);
}

// Deterministic RNG built on std::mt19937_64 (whose output sequence is fixed
// by the standard). Distribution transforms are hand-rolled so results are
// identical across standard library implementations.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed), seed_(seed) {}

    // Derive an independent named substream: consuming numbers from one
    // stream never shifts another.
    Rng stream(std::string_view name) const {
        uint64_t h = fnv1a64(&seed_, sizeof(seed_));
        h = fnv1a64(name, h);
        return Rng(h);
    }

    uint64_t next_u64() { return gen_(); }

    // [0, 1) with 53 bits of precision
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [lo, hi)
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(gen_() % static_cast<uint64_t>(hi - lo));
    }

    double normal(double mean = 0.0, double stddev = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return mean + stddev * r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = gen_() % i;
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937_64 gen_;
    uint64_t seed_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace afd
