#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gf/coeffs.hpp"
#include "gf/grid.hpp"
#include "gf/pdmp.hpp"

namespace gf {

struct McOptions {
    std::uint64_t seed = 1;
    unsigned workers = 1;
    std::uint32_t stream_context = 0;  // offset into the stream-id context space
};

/// Context tags keep every estimator on disjoint RNG streams. Offsets are
/// added to McOptions::stream_context.
namespace stream_ctx {
constexpr std::uint32_t solve = 0x00000;
constexpr std::uint32_t h_node = 0x10000;      // + node index
constexpr std::uint32_t deriv_node = 0x20000;  // + node index
constexpr std::uint32_t martingale = 0x30000;
constexpr std::uint32_t occupation = 0x40000;
}  // namespace stream_ctx

struct LaplaceEstimate {
    double value = 0.0;
    double se = 0.0;
    std::size_t n_paths = 0;
    std::size_t hits = 0;
    std::size_t truncated = 0;
    /// Bound on the missing-tail contribution when q exceeds sup g.
    std::optional<double> bias_bound;
    /// More than half the paths were capped and no bias bound applies.
    bool truncation_dominated = false;
};

/// Common-random-numbers store of excursions from `start` to the hitting time
/// of `target`. Path i always uses stream (context, i), so the set contents
/// are independent of worker count and growth order, and every Laplace
/// evaluation across q reuses the same paths. That makes q -> L(q) exactly
/// monotone and convex sample-by-sample.
class ExcursionSet {
public:
    ExcursionSet(const CoefficientModel& m, double start, double target, double horizon,
                 McOptions opt);

    void ensure(std::size_t n);
    std::size_t size() const { return stats_.size(); }
    std::size_t truncated_count() const;
    double horizon() const { return horizon_; }

    LaplaceEstimate laplace(double q) const;
    /// d/dq L(q) (negative) with its standard error.
    MeanStderr derivative(double q) const;

    const std::vector<ExcursionStat>& stats() const { return stats_; }

private:
    const CoefficientModel* model_;
    double start_, target_, horizon_;
    McOptions opt_;
    std::vector<ExcursionStat> stats_;
};

/// L_{x,y}(q): Monte Carlo estimate of the discounted hitting-time transform.
LaplaceEstimate estimate_L(const CoefficientModel& m, double x, double y, double q,
                           std::size_t n_paths, double horizon, const McOptions& opt = {});

struct DerivativeEstimate {
    double value = 0.0;  // dL/dq, negative
    double se = 0.0;
    std::size_t n_paths = 0;
};

DerivativeEstimate estimate_L_derivative(const CoefficientModel& m, double x, double q,
                                         std::size_t n_paths, double horizon,
                                         const McOptions& opt = {});

struct ProbePoint {
    double q = 0.0;
    double value = 0.0;
    double se = 0.0;
    std::size_t n = 0;
    bool certified = false;  // CI excluded 1 at the certification level
};

struct MalthusResult {
    enum class Status { Ok, NoBracket, BudgetExhausted };
    Status status = Status::NoBracket;
    double lambda = 0.0;
    double ci_lo = 0.0, ci_hi = 0.0;  // certified bracket when available
    double tol = 0.0;
    std::vector<ProbePoint> probes;   // bisection history
    std::vector<ProbePoint> curve;    // L(q) on a reporting grid near lambda
    double deriv_at_lambda = 0.0, deriv_se = 0.0;
    /// Some probe below lambda certified L > 1 and finite: the renewal
    /// argument for exponential convergence applies.
    bool rate_certified = false;
    std::size_t paths_used = 0;
    std::size_t truncated = 0;
    double g_sup = 0.0, g_inf = 0.0;
    std::string message;
};

/// Stochastic bisection for the Malthus exponent: the unique q where the
/// return-time transform L_{x0,x0}(q) crosses 1. Certifies each side with a
/// 3-sigma interval while the path budget lasts, then falls back to point
/// estimates and reports the widest certified bracket.
MalthusResult solve_malthus(const CoefficientModel& m, double tol, std::size_t budget,
                            double horizon, const McOptions& opt = {});

/// Positive interpolant for the harmonic profile h: shape-preserving cubic in
/// log mass, clamped outside the node range.
class HInterp {
public:
    HInterp() = default;
    HInterp(std::span<const double> xs, std::span<const double> values);
    double operator()(double x) const;
    bool empty() const { return p_.empty(); }

private:
    Pchip p_;
};

struct HEstimate {
    std::vector<double> x;
    std::vector<double> value;  // L_{x, x0}(q) per node
    std::vector<double> se;
    std::vector<double> truncated_share;
    double q = 0.0;
    HInterp interpolant() const;
};

/// h_q(x) = L_{x,x0}(q) on the given nodes (q = lambda gives the harmonic
/// eigenfunction up to normalisation; h(x0) = 1 by construction of L).
HEstimate estimate_h(const CoefficientModel& m, std::span<const double> nodes, double q,
                     std::size_t per_node, double horizon, const McOptions& opt = {});

struct ProfileEstimate {
    std::vector<double> x;                       // grid nodes
    std::vector<double> h, h_se;                 // harmonic profile at nodes
    std::vector<double> ret_deriv, ret_deriv_se; // |dL_{x,x}/dq| at lambda (tilted mean return time)
    std::vector<double> nu;                      // asymptotic profile density, unnormalised
    double integral = 0.0;                       // sum nu_i * cell width
    double normalization_defect = 0.0;           // |integral - 1|
    std::vector<double> nu_normalized;
};

/// Asymptotic profile nu(x) = 1 / (h(x) tau(x) |dL_{x,x}(lambda)/dq|) on the
/// grid nodes. The integral over the grid is a consistency diagnostic: the
/// exact profile integrates to 1.
ProfileEstimate estimate_profile(const CoefficientModel& m, const Grid& grid, double lambda,
                                 std::size_t per_node, double horizon,
                                 const McOptions& opt = {});

struct MartingaleReport {
    struct Point {
        double t = 0.0;
        double mean = 0.0;
        double se = 0.0;
    };
    std::vector<Point> martingale;       // E[e^{-lambda t} E_t h(X_t)/h(X_0)], target 1
    std::vector<Point> supermartingale;  // same at q > lambda with h_q, target <= 1
    double lambda = 0.0;
    std::optional<double> q_super;
    std::size_t n_paths = 0;
};

/// Empirical check of the martingale normalisation along fixed-horizon paths
/// started at x0. A wrong lambda or h shows up as systematic drift in t.
MartingaleReport martingale_test(const CoefficientModel& m, double lambda, const HInterp& h,
                                 std::span<const double> times, std::size_t n_paths,
                                 std::optional<double> q_super, const HInterp& h_super,
                                 const McOptions& opt = {});

struct OccupationHistogram {
    std::vector<double> density;  // per grid cell, integrates to 1 over the grid
    double ess = 0.0;             // effective sample size of the weights
    bool low_ess_warning = false;
    std::size_t n_excursions = 0;
    std::size_t hits = 0;
};

/// Tilted occupation measure of return excursions: time in each grid cell
/// weighted by e^{-lambda H} E_H. Its normalised density estimates the same
/// profile as estimate_profile (independent route).
OccupationHistogram tilted_occupation(const CoefficientModel& m, double lambda, const Grid& grid,
                                      std::size_t n_excursions, double horizon,
                                      const McOptions& opt = {});

}  // namespace gf
