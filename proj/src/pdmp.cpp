#include "gf/pdmp.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace gf {

namespace {

/// Next split event from mass x: either (holding time, pre-split mass) or
/// nothing when the clock outlasts the flow to the ceiling. Working with the
/// pre-split LEVEL rather than the time keeps comparisons against stopping
/// levels exact.
struct HoldingEvent {
    double dt;
    double mass_pre;
};

std::optional<HoldingEvent> sample_holding_event(const CoefficientModel& m, double x,
                                                 RngStream& rng) {
    const double e = rng.exponential();
    if (m.constant_rates()) {
        const double bn = m.jump_rate(x);  // same everywhere
        if (bn <= 0.0) return std::nullopt;
        const double dt = e / bn;
        double z;
        try {
            z = flow(m, x, dt);
        } catch (const FlowOverflow&) {
            return std::nullopt;
        }
        return HoldingEvent{dt, z};
    }
    // cumulative hazard along the flow: Lambda(x -> z) = int_x^z B N / tau
    const auto& haz = m.hazard_table();
    double start = std::max(x, haz.lo());
    double head = 0.0;
    if (x < haz.lo()) {
        // hazard accumulated on the head stretch below the table floor
        const auto& B = m.B();
        const auto& kernel = m.kernel();
        const auto& tau = m.tau();
        head = integrate_singular(
            [&](double w) { return B(w) * kernel.normalizer(w) / tau(w); }, x, haz.lo(), 1e-10);
        if (e < head) {
            // invert on the head stretch by bisection in mass
            double lo = x, hi = haz.lo();
            for (int i = 0; i < 200 && hi - lo > 1e-15 * haz.lo(); ++i) {
                const double mid = 0.5 * (lo + hi);
                const double c = integrate_singular(
                    [&](double w) { return B(w) * kernel.normalizer(w) / tau(w); }, x, mid, 1e-10);
                (c < e ? lo : hi) = mid;
            }
            const double z = 0.5 * (lo + hi);
            return HoldingEvent{travel_time(m, x, z), z};
        }
    }
    const auto z = haz.invert_from(start, e - head);
    if (!z) return std::nullopt;
    return HoldingEvent{travel_time(m, x, *z), *z};
}

}  // namespace

std::optional<double> sample_holding_time(const CoefficientModel& m, double x, RngStream& rng) {
    const auto ev = sample_holding_event(m, x, rng);
    if (!ev) return std::nullopt;
    return ev->dt;
}

std::optional<double> sample_holding_time_thinning(const CoefficientModel& m, double x,
                                                   RngStream& rng) {
    const double bound = m.jump_rate_sup();
    if (bound <= 0.0) return std::nullopt;
    double t = 0.0;
    for (;;) {
        t += rng.exponential() / bound;
        double z;
        try {
            z = flow(m, x, t);
        } catch (const FlowOverflow&) {
            return std::nullopt;
        }
        if (rng.uniform() * bound <= m.jump_rate(z)) return t;
    }
}

double sample_jump_target(const CoefficientModel& m, double x_pre, RngStream& rng) {
    if (!(x_pre > 0)) throw ModelError("sample_jump_target: parent mass must be positive");
    return m.kernel().sample_target(x_pre, rng);
}

Path simulate(const CoefficientModel& m, double x0, const StoppingRule& rule, double horizon_cap,
              RngStream& rng) {
    using Kind = StoppingRule::Kind;
    if (rule.kind == Kind::ExitInterval && !(rule.lower < x0 && x0 < rule.upper))
        throw ModelError("simulate: start mass must lie inside the exit interval");
    if (!(horizon_cap > 0)) throw ModelError("simulate: horizon cap must be positive");

    Path p;
    p.start_mass = x0;
    double t = 0.0, x = x0;

    for (;;) {
        const auto ev = sample_holding_event(m, x, rng);

        // level at which the rule would fire via the upward flow
        double rule_level = kInf;
        if (rule.kind == Kind::HitTarget && x < rule.target) rule_level = rule.target;
        if (rule.kind == Kind::ExitInterval) rule_level = rule.upper;

        // decide rule-vs-jump on exact levels, rule-vs-cap on times
        const bool rule_first = rule_level < kInf && (!ev || rule_level < ev->mass_pre);
        const double t_rule = rule_first ? travel_time(m, x, rule_level) : kInf;
        const double t_fixed = rule.kind == Kind::FixedHorizon ? rule.horizon - t : kInf;
        const double t_cap = horizon_cap - t;
        const double t_jump = ev ? ev->dt : kInf;
        const double dt = std::min({t_rule, t_fixed, t_cap, t_jump});

        if (!std::isfinite(dt))
            throw FlowOverflow("simulate: path flows to the ceiling with no stopping event");

        p.segments.push_back({t, x, dt});
        t += dt;

        if (t_rule <= dt) {  // exact hit through the flow
            p.cause = rule.kind == Kind::HitTarget ? TerminalCause::HitTarget
                                                   : TerminalCause::ExitedAbove;
            p.terminal_time = t;
            p.terminal_mass = rule_level;
            return p;
        }
        if (t_fixed <= dt) {
            p.cause = TerminalCause::HorizonCapped;
            p.terminal_time = rule.horizon;
            p.terminal_mass = flow(m, x, t_fixed);
            return p;
        }
        if (t_cap <= dt) {
            p.cause = TerminalCause::HorizonCapped;
            p.terminal_time = horizon_cap;
            p.terminal_mass = flow(m, x, t_cap);
            return p;
        }

        // split
        const double y = sample_jump_target(m, ev->mass_pre, rng);
        assert(y < ev->mass_pre);
        p.jumps.push_back({t, ev->mass_pre, y});
        x = y;

        if (rule.kind == Kind::ExitInterval && x <= rule.lower) {
            p.cause = TerminalCause::ExitedBelow;
            p.terminal_time = t;
            p.terminal_mass = x;
            return p;
        }
        if (rule.kind == Kind::HitTarget && x == rule.target) {  // exact landing
            p.cause = TerminalCause::HitTarget;
            p.terminal_time = t;
            p.terminal_mass = x;
            return p;
        }
    }
}

double Path::mass_at(const CoefficientModel& m, double t) const {
    if (t <= 0.0) return start_mass;
    if (t >= terminal_time) return terminal_mass;
    // segments are ordered; find the one containing t
    std::size_t lo = 0, hi = segments.size();
    while (lo + 1 < hi) {
        const std::size_t mid = (lo + hi) / 2;
        (segments[mid].t_begin <= t ? lo : hi) = mid;
    }
    const auto& s = segments[lo];
    return flow(m, s.mass_begin, t - s.t_begin);
}

namespace {

/// int g(X_s) ds over one flow stretch from mass a for duration d.
double growth_over_segment(const CoefficientModel& m, double a, double d) {
    if (d <= 0.0) return 0.0;
    if (m.constant_rates()) return m.growth_weight(a) * d;
    const double b = flow(m, a, d);
    const auto& tab = m.weight_table();
    if (a >= tab.lo()) return tab.between(a, b);
    const auto& B = m.B();
    const auto& kernel = m.kernel();
    const auto& tau = m.tau();
    const double split = std::min(b, tab.lo());
    double s = integrate_singular(
        [&](double w) { return B(w) * (kernel.normalizer(w) - 1.0) / tau(w); }, a, split, 1e-10);
    if (b > tab.lo()) s += tab.between(tab.lo(), b);
    return s;
}

}  // namespace

double fk_log_growth(const CoefficientModel& m, const Path& p, double t) {
    if (!(t >= 0.0) || t > p.terminal_time * (1.0 + 1e-12))
        throw ModelError("fk weight: time outside the simulated range");
    double acc = 0.0;
    for (const auto& s : p.segments) {
        if (s.t_begin >= t) break;
        const double d = std::min(s.duration, t - s.t_begin);
        acc += growth_over_segment(m, s.mass_begin, d);
    }
    return acc;
}

double fk_weight(const CoefficientModel& m, const Path& p, double q, double t) {
    return std::exp(fk_log_growth(m, p, t) - q * t);
}

ExcursionStat run_excursion(const CoefficientModel& m, double x, double y, double horizon_cap,
                            RngStream& rng) {
    const Path p = simulate(m, x, StoppingRule::hit_target(y), horizon_cap, rng);
    ExcursionStat s;
    s.jumps = p.jumps.size();
    if (p.cause == TerminalCause::HitTarget) {
        s.hit = true;
        s.hitting_time = p.terminal_time;
        s.growth_integral = fk_log_growth(m, p, p.terminal_time);
    } else {
        s.truncated = true;
        s.hitting_time = p.terminal_time;
    }
    return s;
}

ExcursionSample excursion(const CoefficientModel& m, double x, double y, double q,
                          double horizon_cap, RngStream& rng) {
    const ExcursionStat s = run_excursion(m, x, y, horizon_cap, rng);
    ExcursionSample out;
    out.hit = s.hit;
    out.truncated = s.truncated;
    out.hitting_time = s.hitting_time;
    out.weight = s.hit ? std::exp(s.growth_integral - q * s.hitting_time) : 0.0;
    return out;
}

}  // namespace gf
