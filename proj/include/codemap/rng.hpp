#pragma once
// Seeded randomness with portable distributions.
//
// std::mt19937_64's output sequence is fixed by the standard but the
// <random> distributions and std::shuffle are not, so anything that must be
// byte-stable across toolchains goes through these helpers.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace codemap {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform in [0, n). Rejection sampling keeps it unbiased.
    std::size_t below(std::size_t n) {
        if (n == 0) {
            throw std::invalid_argument("Rng::below(0)");
        }
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
        std::uint64_t x = next();
        while (x >= limit) {
            x = next();
        }
        return static_cast<std::size_t>(x % bound);
    }

    // Uniform in [lo, hi].
    int between(int lo, int hi) { return lo + static_cast<int>(below(static_cast<std::size_t>(hi - lo + 1))); }

    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    bool chance(double p) { return unit() < p; }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[below(i)]);
        }
    }

    template <typename T>
    const T& pick(const std::vector<T>& items) {
        return items.at(below(items.size()));
    }

    // Independent stream derived from this generator's seed and a label.
    static Rng derive(std::uint64_t seed, std::uint64_t stream) {
        // splitmix64 finalizer over the combined value
        std::uint64_t z = seed ^ (stream * 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return Rng(z ^ (z >> 31));
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace codemap
