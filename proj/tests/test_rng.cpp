#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "gf/rng.hpp"

using namespace gf;

// Known-answer vectors from the reference Random123 distribution
// (philox4x32x10, kat_vectors).
TEST_CASE("philox4x32-10 known-answer vectors") {
    using B = Philox4x32::Block;
    using K = Philox4x32::Key;

    B z = Philox4x32::round10(B{0, 0, 0, 0}, K{0, 0});
    CHECK(z == B{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});

    B f = Philox4x32::round10(B{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                              K{0xffffffffu, 0xffffffffu});
    CHECK(f == B{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});

    B pi = Philox4x32::round10(B{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                               K{0xa4093822u, 0x299f31d0u});
    CHECK(pi == B{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("stream draws are reproducible and independent of construction order") {
    RngStream a(42, make_stream(0, 7));
    std::vector<std::uint32_t> first;
    for (int i = 0; i < 16; ++i) first.push_back(a());

    RngStream b(42, make_stream(0, 7));
    for (int i = 0; i < 16; ++i) CHECK(b() == first[i]);

    // different stream ids diverge immediately
    RngStream c(42, make_stream(0, 8));
    bool all_equal = true;
    for (int i = 0; i < 16; ++i) all_equal = all_equal && (c() == first[i]);
    CHECK(!all_equal);

    // different contexts with equal path index diverge too
    RngStream d(42, make_stream(1, 7));
    all_equal = true;
    for (int i = 0; i < 16; ++i) all_equal = all_equal && (d() == first[i]);
    CHECK(!all_equal);
}

TEST_CASE("uniform stays strictly inside (0,1) and looks uniform") {
    RngStream g(123, 0);
    double lo = 1.0, hi = 0.0, sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        double u = g.uniform();
        CHECK(u > 0.0);
        CHECK(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
        sum += u;
    }
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
    CHECK(lo < 1e-4);   // with n = 2e5 the min is ~5e-6 in expectation
    CHECK(hi > 1.0 - 1e-4);
}

TEST_CASE("exponential has the right first two moments") {
    RngStream g(99, make_stream(3, 11));
    const int n = 200000;
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double e = g.exponential();
        s1 += e;
        s2 += e * e;
    }
    CHECK(s1 / n == doctest::Approx(1.0).epsilon(0.02));
    CHECK(s2 / n == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("make_stream packs context and path without collisions") {
    std::set<std::uint64_t> seen;
    for (std::uint32_t ctx : {0u, 1u, 0x10000u, 0x20000u})
        for (std::uint64_t i : {0ull, 1ull, 1023ull, (1ull << 40) - 1})
            CHECK(seen.insert(make_stream(ctx, i)).second);
    // path index wraps into its 40-bit field instead of bleeding into context
    CHECK(make_stream(1, 1ull << 40) == make_stream(1, 0));
}
