#include <doctest.h>

#include <cmath>
#include <vector>

#include "gf/malthus.hpp"

using namespace gf;

namespace {

CoefficientModel benchmark_model() {
    // tau = 1 + x/2, B = 1, binary uniform splitting: g = B (N - 1) = 1
    // everywhere, so the growth exponent is exactly 1.
    return CoefficientModel(GrowthRate::affine(1.0, 0.5), RateFunction::constant(1.0),
                            FragmentationKernel::self_similar(KernelProfile::power(2.0, 0.0)),
                            1.0);
}

CoefficientModel decay_model() {
    return CoefficientModel(GrowthRate::affine(1.0, 0.5), RateFunction::decay(1.0, 2.0, 1.0),
                            FragmentationKernel::self_similar(KernelProfile::power(2.0, 0.0)),
                            1.0);
}

CoefficientModel no_split_model(GrowthRate tau) {
    return CoefficientModel(std::move(tau), RateFunction::constant(0.0),
                            FragmentationKernel::self_similar(KernelProfile::power(2.0, 0.0)),
                            1.0);
}

}  // namespace

TEST_CASE("without splitting the transform is a pure exponential in q") {
    // no jumps: H(x -> y) is the deterministic travel time s and L = e^{-q s}
    struct Case {
        GrowthRate tau;
        double s12;  // travel time 1 -> 2
    };
    const Case cases[] = {
        {GrowthRate::constant(1.0), 1.0},
        {GrowthRate::affine(1.0, 1.0), std::log(1.5)},
        {GrowthRate::power(1.0, 0.5), 2.0 * (std::sqrt(2.0) - 1.0)},
    };
    for (const auto& c : cases) {
        auto m = no_split_model(c.tau);
        for (double q : {0.0, 1.0, 5.0}) {
            const auto e = estimate_L(m, 1.0, 2.0, q, 64, 100.0);
            CHECK(std::fabs(e.value - std::exp(-q * c.s12)) < 1e-12);
            CHECK(e.se == 0.0);
            CHECK(e.hits == 64);
        }
    }
}

TEST_CASE("common random numbers make the transform exactly monotone and convex in q") {
    auto m = benchmark_model();
    ExcursionSet set(m, 1.0, 1.0, 60.0, {.seed = 7, .workers = 2});
    set.ensure(4000);
    std::vector<double> qs, vals;
    for (double q = 0.2; q <= 2.6; q += 0.2) {
        qs.push_back(q);
        vals.push_back(set.laplace(q).value);
    }
    for (std::size_t i = 1; i < vals.size(); ++i) CHECK(vals[i] < vals[i - 1]);
    for (std::size_t i = 1; i + 1 < vals.size(); ++i)
        CHECK(vals[i - 1] + vals[i + 1] >= 2.0 * vals[i]);
}

TEST_CASE("derivative estimator agrees with a central difference on the same paths") {
    auto m = benchmark_model();
    ExcursionSet set(m, 1.0, 1.0, 60.0, {.seed = 11});
    set.ensure(3000);
    const double q = 1.3, dq = 1e-4;
    const double fd = (set.laplace(q + dq).value - set.laplace(q - dq).value) / (2.0 * dq);
    const auto d = set.derivative(q);
    CHECK(d.mean < 0.0);
    CHECK(d.mean == doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("solver certifies the benchmark exponent") {
    auto m = benchmark_model();
    auto r = solve_malthus(m, 1e-3, 50000, 60.0, {.seed = 2026, .workers = 2});
    REQUIRE(r.status == MalthusResult::Status::Ok);
    CHECK(r.lambda == doctest::Approx(1.0).epsilon(2e-3));
    CHECK(r.ci_lo <= 1.0);
    CHECK(r.ci_hi >= 1.0);
    CHECK(r.ci_hi - r.ci_lo <= r.tol * (1.0 + 1e-9));
    CHECK(r.rate_certified);
    CHECK(r.deriv_at_lambda < 0.0);
    CHECK(r.paths_used <= 50000);
    CHECK(r.curve.size() == 21);
    CHECK(!r.probes.empty());
    CHECK(r.g_sup == doctest::Approx(1.0));
}

TEST_CASE("the exponent does not depend on the reference point") {
    for (double x0 : {0.7, 1.3}) {
        CoefficientModel m(GrowthRate::affine(1.0, 0.5), RateFunction::constant(1.0),
                           FragmentationKernel::self_similar(KernelProfile::power(2.0, 0.0)),
                           x0);
        auto r = solve_malthus(m, 1e-3, 50000, 60.0, {.seed = 2026, .workers = 2});
        REQUIRE(r.status == MalthusResult::Status::Ok);
        CHECK(r.lambda == doctest::Approx(1.0).epsilon(2e-3));
        CHECK(r.ci_lo <= 1.0);
        CHECK(r.ci_hi >= 1.0);
    }
}

TEST_CASE("solver output does not depend on the worker count") {
    auto m = decay_model();
    auto r1 = solve_malthus(m, 1e-2, 20000, 50.0, {.seed = 5, .workers = 1});
    auto r4 = solve_malthus(m, 1e-2, 20000, 50.0, {.seed = 5, .workers = 4});
    CHECK(r1.status == r4.status);
    CHECK(r1.lambda == r4.lambda);  // bitwise: same streams, same reductions
    REQUIRE(r1.probes.size() == r4.probes.size());
    for (std::size_t i = 0; i < r1.probes.size(); ++i) {
        CHECK(r1.probes[i].q == r4.probes[i].q);
        CHECK(r1.probes[i].value == r4.probes[i].value);
        CHECK(r1.probes[i].se == r4.probes[i].se);
    }
}

TEST_CASE("no returns means no bracket, with an explanation") {
    auto m = no_split_model(GrowthRate::affine(1.0, 1.0));
    auto r = solve_malthus(m, 1e-3, 2000, 10.0, {.seed = 3});
    CHECK(r.status == MalthusResult::Status::NoBracket);
    CHECK(r.message.find("horizon-capped") != std::string::npos);
}

TEST_CASE("budget exhaustion degrades to point estimates honestly") {
    auto m = decay_model();
    // tolerance far below what 2048 paths can certify for a varying weight
    auto r = solve_malthus(m, 1e-7, 2048, 50.0, {.seed = 17});
    CHECK(r.status == MalthusResult::Status::BudgetExhausted);
    CHECK(r.ci_hi - r.ci_lo > 1e-7);
    CHECK(!r.message.empty());
    CHECK(r.paths_used <= 2048);
    // the point estimate still lands inside the reported bracket
    CHECK(r.lambda >= r.ci_lo);
    CHECK(r.lambda <= r.ci_hi);
}

TEST_CASE("harmonic profile of the benchmark is flat") {
    // with g = lambda = 1 the excursion weight e^{W - H} is exactly 1 on every
    // hit, so L_{x,x0}(1) is the hit probability, which the horizon makes ~1
    auto m = benchmark_model();
    std::vector<double> nodes{0.5, 0.8, 1.0, 1.5, 2.0};
    auto h = estimate_h(m, nodes, 1.0, 3000, 60.0, {.seed = 23, .workers = 2});
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        CHECK(h.value[i] == doctest::Approx(1.0).epsilon(0.01));
        CHECK(h.truncated_share[i] < 0.01);
    }

    auto interp = h.interpolant();
    CHECK(interp(1.2) == doctest::Approx(1.0).epsilon(0.02));
    CHECK(interp(1e-4) > 0.0);  // clamped, never zero
}

TEST_CASE("h interpolant works in log mass") {
    std::vector<double> xs{0.5, 1.0, 2.0, 4.0}, vs{2.0, 1.0, 0.5, 0.25};
    HInterp h(xs, vs);
    CHECK(h(1.0) == doctest::Approx(1.0));
    // data is exactly log-linear, so the log-space interpolant is exact
    CHECK(h(1.4) == doctest::Approx(1.0 / 1.4).epsilon(1e-3));
    CHECK(h(100.0) == doctest::Approx(0.25));  // clamp above
    CHECK(HInterp()(3.0) == 1.0);              // empty: constant one
}

TEST_CASE("martingale check is exact on the benchmark at the true exponent") {
    auto m = benchmark_model();
    std::vector<double> times{0.5, 1.0, 2.0};
    // true h is constant: the empty interpolant represents it exactly, and
    // every path weight e^{W - t} equals 1 up to roundoff
    auto rep = martingale_test(m, 1.0, HInterp(), times, 400, std::nullopt, HInterp(),
                               {.seed = 31, .workers = 2});
    REQUIRE(rep.martingale.size() == times.size());
    for (const auto& pt : rep.martingale) {
        CHECK(std::fabs(pt.mean - 1.0) < 1e-12);
        CHECK(pt.se < 1e-12);
    }
    CHECK(rep.supermartingale.empty());
}

TEST_CASE("supermartingale property above the exponent") {
    auto m = benchmark_model();
    const double q = 1.5;
    std::vector<double> nodes{0.4, 0.7, 1.0, 1.6, 2.5, 4.0, 7.0};
    auto hq = estimate_h(m, nodes, q, 3000, 60.0, {.seed = 37});
    std::vector<double> times{0.5, 1.0, 2.0};
    auto rep = martingale_test(m, 1.0, HInterp(), times, 4000, q, hq.interpolant(),
                               {.seed = 37, .workers = 2});
    REQUIRE(rep.supermartingale.size() == times.size());
    for (const auto& pt : rep.supermartingale)
        CHECK(pt.mean <= 1.0 + 5.0 * pt.se + 0.03);
}

TEST_CASE("tilted occupation integrates to one and matches the profile route") {
    auto m = benchmark_model();
    // the per-node route needs the horizon to dominate the mean return time at
    // every node; on [0.05, 10] the slowest node returns in ~40 time units
    Grid grid = Grid::geometric(0.05, 10.0, 48);
    auto occ = tilted_occupation(m, 1.0, grid, 4000, 60.0, {.seed = 41, .workers = 2});
    CHECK(occ.hits > 3500);
    // at the true exponent of this model every weight is 1: ESS ~ hits
    CHECK(occ.ess == doctest::Approx(double(occ.hits)).epsilon(1e-6));
    CHECK(!occ.low_ess_warning);
    double mass = 0.0;
    for (std::size_t c = 0; c < grid.size(); ++c) mass += occ.density[c] * grid.widths[c];
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));

    // exact solution of the benchmark eigenproblem: nu(x) = 3x(1+x/2)^-5
    double l1_exact = 0.0;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        const double x = grid.nodes[c];
        const double exact = 3.0 * x * std::pow(1.0 + 0.5 * x, -5.0);
        l1_exact += std::fabs(occ.density[c] - exact) * grid.widths[c];
    }
    CHECK(l1_exact < 0.08);

    auto prof = estimate_profile(m, grid, 1.0, 1500, 300.0, {.seed = 41, .workers = 2});
    CHECK(prof.integral == doctest::Approx(1.0).epsilon(0.15));
    double l1 = 0.0;
    for (std::size_t c = 0; c < grid.size(); ++c)
        l1 += std::fabs(prof.nu_normalized[c] - occ.density[c]) * grid.widths[c];
    CHECK(l1 < 0.2);
}
