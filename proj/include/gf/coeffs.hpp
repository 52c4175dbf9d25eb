#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gf/numeric.hpp"
#include "gf/rng.hpp"

namespace gf {

// ---------------------------------------------------------------------------
// Errors

struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when a travel time from mass 0 is requested but the deterministic
/// flow cannot leave 0 in finite time (growth vanishes too fast at 0).
struct TravelTimeDiverges : ModelError {
    using ModelError::ModelError;
};

/// Raised when the deterministic flow exceeds the configured mass ceiling
/// (finite-time blow-up or an unreasonably long horizon).
struct FlowOverflow : ModelError {
    using ModelError::ModelError;
};

// ---------------------------------------------------------------------------
// Growth rate tau(x)

class GrowthRate {
public:
    enum class Family { Constant, Affine, Power, Tabulated, Sum };

    static GrowthRate constant(double c);
    static GrowthRate affine(double intercept, double slope);
    static GrowthRate power(double scale, double exponent);
    /// Positive samples on increasing knots; values are interpolated with a
    /// shape-preserving cubic and clamped outside the knot range. The declared
    /// exponents describe tau near 0 and infinity for boundary classification.
    static GrowthRate tabulated(std::vector<double> xs, std::vector<double> vals,
                                double exponent_at_zero, double exponent_at_inf);

    double operator()(double x) const;

    Family family() const { return family_; }
    std::string describe() const;

    /// p such that tau(x) ~ c x^p as x -> 0+ (for families, exact).
    double exponent_at_zero() const;
    double exponent_at_inf() const;

    bool has_closed_flow() const;
    /// Time for the flow to travel x -> y (0 <= x <= y). Only for closed
    /// families; may return +inf when the flow cannot leave x.
    double closed_travel_time(double x, double y) const;
    /// Flow position after time t >= 0 from x; +inf signals blow-up past any bound.
    double closed_flow(double x, double t) const;

    GrowthRate scaled(double s) const;
    friend GrowthRate operator+(const GrowthRate& a, const GrowthRate& b);

private:
    GrowthRate() = default;
    Family family_ = Family::Constant;
    double a_ = 1.0, b_ = 0.0;                    // family parameters
    std::shared_ptr<const Pchip> tab_;            // Tabulated
    std::shared_ptr<const std::vector<GrowthRate>> terms_;  // Sum
    double p0_ = 0.0, pinf_ = 0.0;                // Tabulated declared exponents
};

// ---------------------------------------------------------------------------
// Total fragmentation rate B(x)

class RateFunction {
public:
    enum class Family { Constant, Decay, Tabulated };

    static RateFunction constant(double c);
    /// base + amplitude / (1 + x / scale); monotone, limit `base` at infinity.
    static RateFunction decay(double base, double amplitude, double scale = 1.0);
    static RateFunction tabulated(std::vector<double> xs, std::vector<double> vals);

    double operator()(double x) const;

    Family family() const { return family_; }
    bool is_constant() const { return family_ == Family::Constant; }
    double sup_bound() const;
    double inf_bound() const;
    /// Declared limit at infinity (tabulated families: last knot value).
    double limit_at_inf() const;
    std::string describe() const;

private:
    RateFunction() = default;
    Family family_ = Family::Constant;
    double a_ = 0.0, b_ = 0.0, s_ = 1.0;
    std::shared_ptr<const Pchip> tab_;
};

// ---------------------------------------------------------------------------
// Fragment-size profile k0(z), z in (0, 1]

struct MomentValue {
    double value = 0.0;
    bool finite = true;  // false: the moment integral diverges (value is +inf)
};

class KernelProfile {
public:
    enum class Family { Power, Tabulated };

    /// k0(z) = scale * z^exponent with exponent > -1 (integrability at 0).
    static KernelProfile power(double scale, double exponent);
    /// Density samples on knots z in [z0, 1] with z0 > 0; support is [z0, 1].
    static KernelProfile tabulated(std::vector<double> zs, std::vector<double> vals);

    double density(double z) const;
    /// Total mass M_0 = N (same for every parent under self-similarity).
    double mass() const;
    /// M_r = int_0^1 z^r k0(z) dz; flags divergence for r <= -(exponent+1).
    MomentValue moment(double r) const;
    /// Unnormalised CDF int_0^z k0.
    double cdf(double z) const;
    /// Draw a fragment/parent mass ratio from k0 / M_0.
    double sample_ratio(RngStream& rng) const;
    double support_lo() const;

    Family family() const { return family_; }
    std::string describe() const;

private:
    friend class FragmentationKernel;  // holds a profile member pre-factory
    KernelProfile() = default;
    Family family_ = Family::Power;
    double c_ = 2.0, alpha_ = 0.0;                // Power
    std::shared_ptr<const Pchip> dens_;           // Tabulated density
    std::shared_ptr<const Pchip> cdf_;            // Tabulated cumulative at knots
    std::shared_ptr<const Pchip> quantile_;       // inverse CDF, u in [0,1] -> z
    double mass_ = 0.0;
};

// ---------------------------------------------------------------------------
// Fragmentation kernel k(x, y), y in (0, x)

class FragmentationKernel {
public:
    /// Self-similar form k(x, y) = k0(y/x) / x.
    static FragmentationKernel self_similar(KernelProfile k0);
    /// General kernel from a density functor. Normalisers and ratio quantile
    /// tables are precomputed on geometric knots over [x_lo, x_hi] and
    /// interpolated in log x; outside that range the nearest knot is used.
    static FragmentationKernel general(std::function<double(double, double)> density,
                                       double x_lo, double x_hi, std::size_t knots = 33,
                                       std::size_t quantiles = 257);

    bool self_similar_form() const { return self_similar_; }
    const KernelProfile& profile() const;  // pre: self_similar_form()

    double density(double x, double y) const;
    /// N(x) = int_0^x k(x, y) dy.
    double normalizer(double x) const;
    /// int_0^a k(x, y) dy for a <= x.
    double mass_below(double x, double a) const;
    /// Draw a post-jump mass in (0, x) from k(x, .) / N(x).
    double sample_target(double x, RngStream& rng) const;
    double sup_normalizer() const;
    std::string describe() const;

private:
    FragmentationKernel() = default;
    bool self_similar_ = true;
    KernelProfile k0_;
    // general form
    std::function<double(double, double)> dens_;
    std::vector<double> knots_x_;
    std::vector<double> knot_norm_;                    // N at knots
    std::vector<std::vector<double>> knot_quantiles_;  // ratio quantiles per knot
    std::vector<double> ulevels_;
    std::shared_ptr<const Pchip> norm_interp_;         // log x -> N
    std::size_t knot_below(double x) const;
};

// ---------------------------------------------------------------------------
// Model bundle

struct QuadratureSettings {
    double rel_tol = 1e-10;
};

/// One cumulative integral C(z) = int_{z_lo}^{z} f(w) dw on geometric knots,
/// with exact between-knot evaluation (local quadrature) and inversion.
/// Used for travel times, jump hazards and growth-weight integrals when no
/// closed form applies. f must be positive on (z_lo, z_hi).
class CumulativeIntegral {
public:
    CumulativeIntegral() = default;
    CumulativeIntegral(std::function<double(double)> f, double z_lo, double z_hi,
                       std::size_t knots, double rel_tol);

    /// int_a^b f, for z_lo <= a <= b <= z_hi.
    double between(double a, double b) const;
    /// Smallest z with int_x^z f = target, or nullopt when the remaining
    /// integral up to z_hi is below target.
    std::optional<double> invert_from(double x, double target) const;

    double lo() const { return z_lo_; }
    double hi() const { return z_hi_; }
    bool empty() const { return knots_.empty(); }

private:
    double cum_at(double z) const;  // C(z) with local quadrature refinement
    std::function<double(double)> f_;
    std::vector<double> knots_, cum_;
    double z_lo_ = 0.0, z_hi_ = 0.0, rel_tol_ = 1e-10;
};

class CoefficientModel {
public:
    CoefficientModel(GrowthRate tau, RateFunction B, FragmentationKernel kernel, double x0,
                     QuadratureSettings quad = {}, double mass_ceiling = 1e15);

    const GrowthRate& tau() const { return tau_; }
    const RateFunction& B() const { return B_; }
    const FragmentationKernel& kernel() const { return kernel_; }
    double x0() const { return x0_; }
    double mass_ceiling() const { return ceiling_; }
    const QuadratureSettings& quadrature() const { return quad_; }

    /// g(x) = B(x) (N(x) - 1): the Feynman-Kac growth weight.
    double growth_weight(double x) const;
    /// B(x) N(x): the jump intensity of the instrumental process.
    double jump_rate(double x) const;

    /// True when B and N are constant in x (jump rate and growth weight are
    /// then exact constants and several closed forms apply).
    bool constant_rates() const { return const_rates_; }
    double growth_weight_sup() const { return g_sup_; }
    double growth_weight_inf() const { return g_inf_; }
    double jump_rate_sup() const { return jump_sup_; }

    // cumulative tables for the generic (non-closed-form) paths; built lazily
    const CumulativeIntegral& inv_tau_table() const;
    const CumulativeIntegral& hazard_table() const;  // integrand B N / tau
    const CumulativeIntegral& weight_table() const;  // integrand g / tau

private:
    double table_lo() const;
    GrowthRate tau_;
    RateFunction B_;
    FragmentationKernel kernel_;
    double x0_;
    QuadratureSettings quad_;
    double ceiling_;
    bool const_rates_ = false;
    double g_sup_ = 0.0, g_inf_ = 0.0, jump_sup_ = 0.0;
    mutable std::shared_ptr<CumulativeIntegral> inv_tau_, hazard_, weight_;
};

// ---------------------------------------------------------------------------
// Flow primitives

/// Position of the deterministic flow started at x after time t.
/// Throws FlowOverflow past the model's mass ceiling.
double flow(const CoefficientModel& m, double x, double t);

/// Time for the flow to travel from x to y >= x. Throws TravelTimeDiverges
/// when x == 0 and mass 0 is not an entrance boundary.
double travel_time(const CoefficientModel& m, double x, double y);

/// Fragment-profile moment M_r (self-similar kernels).
MomentValue moment(const CoefficientModel& m, double r);

/// Moments M_r over a set of exponents, with the monotonicity invariant
/// (M_r strictly decreasing in r) checked at build time.
class MomentTable {
public:
    static MomentTable build(const KernelProfile& k0, std::span<const double> rs);
    MomentValue at(double r) const;  // pre: r was requested at build time
    const std::vector<double>& exponents() const { return rs_; }

private:
    std::vector<double> rs_;
    std::vector<MomentValue> vals_;
};

// ---------------------------------------------------------------------------
// Validation

enum class CheckStatus { Pass, Fail, Inconclusive };

struct ValidationEntry {
    std::string id;
    CheckStatus status = CheckStatus::Inconclusive;
    double margin = 0.0;   // signed slack; positive means comfortably satisfied
    bool sampled = false;  // true when the verdict rests on grid samples only
    std::string note;
};

struct ValidationReport {
    std::vector<ValidationEntry> entries;
    bool all_passed() const;
    const ValidationEntry* find(const std::string& id) const;
};

struct ValidationOptions {
    double x_probe_lo = 1e-8;   // relative to x0
    double x_probe_hi = 1e8;    // relative to x0
    std::size_t samples = 256;
};

/// Checks the standing model assumptions on sample grids: positivity of tau,
/// boundedness of B, N and B*N, finite entry time from 0, no finite-time
/// blow-up, reachability of neighbourhoods below the start point, and decay
/// of the compact-set jump mass at infinity. Sampled checks are flagged.
ValidationReport validate(const CoefficientModel& m, const ValidationOptions& opt = {});

}  // namespace gf
