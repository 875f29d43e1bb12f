#pragma once

// Counter-based random streams. A stream is identified by a 64-bit key derived
// from (master seed, purpose tag, index); its n-th output is a pure function of
// (key, n), so replications can run on any worker in any order and still
// produce identical draws.

#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

namespace activereg {

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

class Stream {
public:
    using result_type = std::uint64_t;

    explicit Stream(std::uint64_t key) : key_(key) {}

    /// Stream for (master_seed, purpose_tag, index).
    static Stream derive(std::uint64_t master_seed, std::string_view purpose, std::uint64_t index = 0) {
        std::uint64_t k = detail::mix64(master_seed + detail::kGolden);
        k = detail::mix64(k ^ detail::fnv1a(purpose));
        k = detail::mix64(k + index * detail::kGolden);
        return Stream(k);
    }

    /// Child stream; the parent's counter is untouched.
    Stream fork(std::string_view purpose, std::uint64_t index = 0) const {
        return derive(key_, purpose, index);
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return detail::mix64(key_ + (++counter_) * detail::kGolden); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double gaussian() { return normal_(*this); }

    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) {
        std::uniform_int_distribution<std::uint64_t> dist(0, bound - 1);
        return dist(*this);
    }

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace activereg
