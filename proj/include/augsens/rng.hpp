#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace augsens {

/// Philox4x32-10 block: a counter-based generator keyed by a 64-bit seed.
/// Every draw is a pure function of (seed, stream, index), so draws can be
/// produced in any order or in parallel without changing their values.
class Philox {
public:
    using Block = std::array<std::uint32_t, 4>;

    explicit Philox(std::uint64_t seed) : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

    Block operator()(std::uint64_t stream, std::uint64_t index) const {
        Block ctr{static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                  static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
        std::array<std::uint32_t, 2> key = key_;
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
            key[0] += 0x9E3779B9u;
            key[1] += 0xBB67AE85u;
        }
        return ctr;
    }

    std::uint64_t bits64(std::uint64_t stream, std::uint64_t index) const {
        const Block b = (*this)(stream, index);
        return (std::uint64_t{b[0]} << 32) | b[1];
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform(std::uint64_t stream, std::uint64_t index) const {
        return static_cast<double>(bits64(stream, index) >> 11) * 0x1.0p-53;
    }

private:
    std::array<std::uint32_t, 2> key_;
};

/// Combine several small identifiers into one 64-bit stream id.
constexpr std::uint64_t stream_id(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0, std::uint64_t d = 0) {
    std::uint64_t h = 0x9E3779B97F4A7C15ull;
    for (std::uint64_t v : {a, b, c, d}) {
        h ^= v + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
        h *= 0xBF58476D1CE4E5B9ull;
        h ^= h >> 31;
    }
    return h;
}

/// Sequential view of one Philox stream; satisfies UniformRandomBitGenerator
/// so it can drive the standard distributions.
class StreamEngine {
public:
    using result_type = std::uint64_t;

    StreamEngine(std::uint64_t seed, std::uint64_t stream) : philox_(seed), stream_(stream) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return philox_.bits64(stream_, counter_++); }

    double uniform() { return philox_.uniform(stream_, counter_++); }

    /// Standard normal by Box-Muller (one value per call, two uniforms consumed).
    double normal() {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

    std::uint64_t position() const { return counter_; }

private:
    Philox philox_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
};

}  // namespace augsens
