#pragma once

#include <optional>
#include <vector>

#include "gf/coeffs.hpp"
#include "gf/rng.hpp"

namespace gf {

/// One deterministic flow stretch of a simulated path.
struct FlowSegment {
    double t_begin = 0.0;
    double mass_begin = 0.0;
    double duration = 0.0;
};

struct JumpEvent {
    double time = 0.0;
    double mass_pre = 0.0;   // position just before the split
    double mass_post = 0.0;  // surviving fragment
};

enum class TerminalCause { HitTarget, ExitedAbove, ExitedBelow, HorizonCapped };

/// Piecewise-deterministic path: alternating flow segments and downward jumps.
/// Invariants: segments tile [0, terminal_time]; within a segment mass follows
/// the flow; jumps are strictly downward.
struct Path {
    double start_mass = 0.0;
    std::vector<FlowSegment> segments;
    std::vector<JumpEvent> jumps;
    TerminalCause cause = TerminalCause::HorizonCapped;
    double terminal_time = 0.0;
    double terminal_mass = 0.0;

    bool truncated() const { return cause == TerminalCause::HorizonCapped; }
    /// Mass at time t in [0, terminal_time].
    double mass_at(const CoefficientModel& m, double t) const;
};

struct StoppingRule {
    enum class Kind { HitTarget, ExitInterval, FixedHorizon };
    Kind kind = Kind::FixedHorizon;
    double target = 0.0;
    double lower = 0.0, upper = 0.0;
    double horizon = 0.0;

    static StoppingRule hit_target(double y) { return {Kind::HitTarget, y, 0, 0, 0}; }
    static StoppingRule exit_interval(double a, double b) {
        return {Kind::ExitInterval, 0, a, b, 0};
    }
    static StoppingRule fixed_horizon(double t) { return {Kind::FixedHorizon, 0, 0, 0, t}; }
};

/// Time until the next split for a path currently at mass x, or nullopt when
/// the exponential clock outlasts the flow up to the mass ceiling.
std::optional<double> sample_holding_time(const CoefficientModel& m, double x, RngStream& rng);

/// Same law via thinning against the constant bound sup(B N); independent
/// implementation kept as a cross-check of the hazard inversion.
std::optional<double> sample_holding_time_thinning(const CoefficientModel& m, double x,
                                                   RngStream& rng);

/// Post-split mass for a parent at x_pre, drawn from k(x_pre, .) / N(x_pre).
double sample_jump_target(const CoefficientModel& m, double x_pre, RngStream& rng);

/// Simulate until the stopping rule fires or `horizon_cap` is reached.
/// Hitting is event-exact: an upward crossing of a target level ends the path
/// with terminal mass equal to the level, not a discretised neighbour. A path
/// started exactly at a HitTarget level does not stop at time zero (return
/// time semantics).
Path simulate(const CoefficientModel& m, double x0, const StoppingRule& rule, double horizon_cap,
              RngStream& rng);

/// Multiplicative Feynman-Kac weight exp(int_0^t g(X_s) ds - q t) along a
/// path, for t <= terminal_time. With q = 0 this is the mass-growth factor.
double fk_weight(const CoefficientModel& m, const Path& p, double q, double t);

/// log of the growth integral int_0^t g(X_s) ds (no q discount), same walk.
double fk_log_growth(const CoefficientModel& m, const Path& p, double t);

/// Summary of one excursion from x to the hitting time of level y.
struct ExcursionStat {
    bool hit = false;
    bool truncated = false;   // capped by the horizon before hitting
    double hitting_time = 0.0;
    double growth_integral = 0.0;  // int_0^H g(X_s) ds, only meaningful when hit
    std::size_t jumps = 0;
};

ExcursionStat run_excursion(const CoefficientModel& m, double x, double y, double horizon_cap,
                            RngStream& rng);

/// Discounted excursion weight e^{-q H} exp(int_0^H g): zero when the horizon
/// caps the path first.
struct ExcursionSample {
    bool hit = false;
    bool truncated = false;
    double hitting_time = 0.0;
    double weight = 0.0;
};

ExcursionSample excursion(const CoefficientModel& m, double x, double y, double q,
                          double horizon_cap, RngStream& rng);

}  // namespace gf
