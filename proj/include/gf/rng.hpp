#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace gf {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11 constants).
/// Stateless keyed bijection: block index -> 4x32 random words. Streams are
/// cheap to create and statistically independent, which lets every simulated
/// path own stream (seed, path_id) regardless of scheduling order.
class Philox4x32 {
public:
    using Block = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Block round10(Block ctr, Key key) {
        for (int r = 0; r < 10; ++r) {
            ctr = single_round(ctr, key);
            key[0] += 0x9E3779B9u;  // golden-ratio Weyl sequence
            key[1] += 0xBB67AE85u;
        }
        return ctr;
    }

private:
    static void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
        const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
        hi = static_cast<std::uint32_t>(p >> 32);
        lo = static_cast<std::uint32_t>(p);
    }
    static Block single_round(const Block& c, const Key& k) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(0xD2511F53u, c[0], hi0, lo0);
        mulhilo(0xCD9E8D57u, c[2], hi1, lo1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
};

/// One logical random stream: (seed, stream) select the key-space slice, an
/// internal 64-bit counter walks through it. Satisfies UniformRandomBitGenerator.
class RngStream {
public:
    using result_type = std::uint32_t;

    RngStream(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_lo_(static_cast<std::uint32_t>(stream)),
          stream_hi_(static_cast<std::uint32_t>(stream >> 32)) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return 0xFFFFFFFFu; }

    result_type operator()() {
        if (idx_ == 4) {
            buf_ = Philox4x32::round10({static_cast<std::uint32_t>(counter_),
                                        static_cast<std::uint32_t>(counter_ >> 32), stream_lo_,
                                        stream_hi_},
                                       key_);
            ++counter_;
            idx_ = 0;
        }
        return buf_[idx_++];
    }

    std::uint64_t draw64() {
        const std::uint64_t lo = (*this)();
        const std::uint64_t hi = (*this)();
        return (hi << 32) | lo;
    }

    /// Uniform on the open interval (0, 1): never returns 0 or 1, so logs and
    /// inverse CDFs stay finite.
    double uniform() {
        return (static_cast<double>(draw64() >> 12) + 0.5) * 0x1.0p-52;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    double exponential() { return -std::log(uniform()); }

private:
    Philox4x32::Key key_;
    std::uint32_t stream_lo_, stream_hi_;
    std::uint64_t counter_ = 0;
    Philox4x32::Block buf_{};
    int idx_ = 4;
};

/// Stream-id layout: high bits tag the estimator context, low bits the path
/// index. Keeps every estimator on disjoint streams without coordination.
constexpr std::uint64_t make_stream(std::uint32_t context, std::uint64_t path_index) {
    return (static_cast<std::uint64_t>(context) << 40) | (path_index & ((1ull << 40) - 1));
}

}  // namespace gf
