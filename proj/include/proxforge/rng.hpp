#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "proxforge/hash.hpp"

namespace proxforge {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Per-record seed: depends only on the global seed and the image id, so
/// records can be processed in any order (or in parallel) with identical output.
inline std::uint64_t derive_record_seed(std::uint64_t global_seed, std::string_view image_id) {
    return splitmix64(global_seed ^ fnv1a64(image_id));
}

/// mt19937_64 is bit-exact per the standard; the distributions are not.
/// Bounded draws and shuffles are hand-rolled here so identical seeds give
/// identical bytes on every platform and standard library.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    /// Uniform integer in [0, n), rejection-sampled, n >= 1.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t v;
        do {
            v = eng_();
        } while (v >= limit);
        return v % n;
    }

    /// Uniform double in [0, 1) with 53 bits.
    double unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
};

} // namespace proxforge
