// rng.hpp — counter-based splittable RNG. Every consumer derives an
// independent stream from the master seed and a tuple of stream keys
// (class label, rule index, iteration, ...), so evaluation order and thread
// count cannot change the draws. std::uniform_int_distribution is avoided
// on purpose: its output is not specified bit-for-bit across standard
// library implementations.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace relmesh::detail {

inline std::uint64_t splitmix64(std::uint64_t &state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // burn-in decorrelates trivially related seeds
        splitmix64(state_);
        splitmix64(state_);
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, bound) via rejection; exact, no modulo bias.
    std::uint64_t next_below(std::uint64_t bound) {
        if (bound == 0) throw std::invalid_argument("rng: bound must be positive");
        const std::uint64_t threshold = (0ull - bound) % bound;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    // Uniform double in [0, 1) with 53-bit resolution.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Child stream keyed by an arbitrary tuple of integers.
    Rng derive(std::initializer_list<std::uint64_t> keys) const {
        std::uint64_t s = state_;
        for (std::uint64_t k : keys) {
            s ^= splitmix64(s) + k * 0x9e3779b97f4a7c15ull;
            splitmix64(s);
        }
        return Rng(s);
    }

private:
    std::uint64_t state_;
};

// Uniform k-draw without replacement (partial Fisher-Yates over indices).
inline std::vector<std::size_t> sample_indices(std::size_t pool_size, std::size_t k, Rng &rng) {
    if (k > pool_size)
        throw std::invalid_argument("sample_indices: k exceeds pool size");
    std::vector<std::size_t> idx(pool_size);
    for (std::size_t i = 0; i < pool_size; ++i) idx[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.next_below(pool_size - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

} // namespace relmesh::detail
