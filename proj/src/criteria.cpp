#include "gf/criteria.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <sstream>

namespace gf {

namespace {

constexpr double kMarginalBand = 1e-6;

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

/// tau(x) / (x B(x)) at large x: sampled at two probe decades plus a family
/// shortcut for divergence.
struct TailRatio {
    double value = 0.0;
    bool divergent = false;
    bool stabilized = false;
};

TailRatio transport_ratio_tail(const CoefficientModel& m) {
    TailRatio t;
    const double pinf = m.tau().exponent_at_inf();
    const double binf = m.B().limit_at_inf();
    if (pinf > 1.0 || binf <= 0.0) {
        t.divergent = true;
        t.value = kInf;
        return t;
    }
    const double ref = std::max(m.x0(), 1.0);
    auto ratio = [&](double x) { return m.tau()(x) / (x * m.B()(x)); };
    const double r1 = ratio(ref * 1e6), r2 = ratio(ref * 1e8);
    t.value = r2;
    t.stabilized = (r1 < 1e-12 && r2 < 1e-12) || std::fabs(r2 - r1) <= 0.02 * std::fabs(r1);
    return t;
}

struct TailValue {
    double value = 0.0;
    bool stabilized = false;
};

/// Growth weight g at infinity, declared family limit cross-checked against
/// probe decades.
TailValue growth_weight_tail(const CoefficientModel& m) {
    TailValue t;
    const double ref = std::max(m.x0(), 1.0);
    const double n_inf = m.kernel().normalizer(ref * 1e8);
    const double declared = m.B().limit_at_inf() * (n_inf - 1.0);
    const double s1 = m.growth_weight(ref * 1e6), s2 = m.growth_weight(ref * 1e8);
    t.value = std::max(declared, s2);
    const double scale = std::max({std::fabs(s1), std::fabs(s2), 1e-12});
    t.stabilized = std::fabs(s2 - s1) <= 0.02 * scale &&
                   std::fabs(s2 - declared) <= 0.02 * scale + 1e-12;
    return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// LyapunovFunction

LyapunovFunction::LyapunovFunction(const LyapunovSpec& spec) : spec_(spec) {
    if (!(spec.a > 0) || !(spec.b > 0) || !(spec.x_low > 0) || !(spec.x_high > spec.x_low))
        throw ModelError("Lyapunov spec: need a, b > 0 and 0 < x_low < x_high");
    // cubic Hermite for W(u) = log V(e^u) matching the power tails
    u1_ = std::log(spec.x_low);
    u2_ = std::log(spec.x_high);
    const double w1 = -spec.b * u1_, d1 = -spec.b;
    const double w2 = spec.a * u2_, d2 = spec.a;
    const double h = u2_ - u1_;
    // W(u) = c0 + c1 s + c2 s^2 + c3 s^3, s = (u - u1) / h
    c0_ = w1;
    c1_ = d1 * h;
    c2_ = 3.0 * (w2 - w1) - (2.0 * d1 + d2) * h;
    c3_ = -2.0 * (w2 - w1) + (d1 + d2) * h;
}

double LyapunovFunction::operator()(double x) const {
    if (!(x > 0)) throw ModelError("Lyapunov function: x must be positive");
    if (x <= spec_.x_low) return std::pow(x, -spec_.b);
    if (x >= spec_.x_high) return std::pow(x, spec_.a);
    const double s = (std::log(x) - u1_) / (u2_ - u1_);
    return std::exp(c0_ + s * (c1_ + s * (c2_ + s * c3_)));
}

bool LyapunovFunction::convex_on(std::size_t samples) const {
    // probe slightly beyond the bridge so the joins are covered
    const double lo = spec_.x_low * 0.9, hi = spec_.x_high * 1.1;
    const double dx = (hi - lo) / static_cast<double>(samples + 1);
    for (std::size_t i = 1; i <= samples; ++i) {
        const double x = lo + dx * static_cast<double>(i);
        const double second = (*this)(x - dx) - 2.0 * (*this)(x) + (*this)(x + dx);
        if (second < -1e-9 * std::max(1.0, (*this)(x))) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Report plumbing

CheckStatus CriteriaReport::overall() const {
    CheckStatus s = CheckStatus::Pass;
    for (const auto& e : entries) {
        if (e.status == CheckStatus::Fail) return CheckStatus::Fail;
        if (e.status == CheckStatus::Inconclusive) s = CheckStatus::Inconclusive;
    }
    return s;
}

const CriteriaEntry* CriteriaReport::find(const std::string& id) const {
    for (const auto& e : entries)
        if (e.id == id) return &e;
    return nullptr;
}

// ---------------------------------------------------------------------------
// check_thm11

Thm11Result check_thm11(const CoefficientModel& m, double lambda, double lambda_ci_half) {
    Thm11Result r;
    const TailValue tail = growth_weight_tail(m);
    r.limsup_estimate = tail.value;
    r.stabilized = tail.stabilized;

    CriteriaEntry e;
    e.id = "tail-growth-weight";
    e.condition = "limsup_{x->inf} B(x)(N(x)-1) < lambda";
    e.sampled = true;
    e.margin = lambda - lambda_ci_half - tail.value;
    e.marginal = std::fabs(e.margin) <= kMarginalBand * std::max(1.0, std::fabs(lambda));
    if (!tail.stabilized) {
        e.status = CheckStatus::Inconclusive;
        e.note = "growth weight not stabilised on the probe tail";
    } else if (tail.value < lambda - lambda_ci_half) {
        e.status = CheckStatus::Pass;
        e.note = "tail estimate " + fmt(tail.value) + " vs lambda " + fmt(lambda);
    } else if (tail.value >= lambda + lambda_ci_half) {
        e.status = CheckStatus::Fail;
        e.note = "tail estimate " + fmt(tail.value) + " reaches lambda " + fmt(lambda);
    } else {
        e.status = CheckStatus::Inconclusive;
        e.note = "tail estimate inside the lambda confidence band";
    }
    r.entry = std::move(e);
    return r;
}

// ---------------------------------------------------------------------------
// check_thm12

namespace {

/// Smallest probe point from which ratio(x) <= bound holds onward, requiring
/// the tail limit itself to satisfy the bound.
struct SwitchPoint {
    bool found = false;
    double x = 0.0;
    double tail_margin = 0.0;
};

SwitchPoint find_switch_above(const CoefficientModel& m, double bound) {
    SwitchPoint s;
    const TailRatio tail = transport_ratio_tail(m);
    s.tail_margin = bound - tail.value;
    if (tail.divergent || !(s.tail_margin >= -kMarginalBand)) return s;
    const double ref = std::max(m.x0(), 1.0);
    const auto probes = geometric_points(ref * 1e-3, ref * 1e8, 512);
    auto ok = [&](double x) { return m.tau()(x) / (x * m.B()(x)) <= bound + 1e-12; };
    std::size_t first_bad_after = 0;  // index after the last violation
    for (std::size_t i = 0; i < probes.size(); ++i)
        if (!ok(probes[i])) first_bad_after = i + 1;
    if (first_bad_after >= probes.size()) return s;  // violated up to the probe top
    s.found = true;
    s.x = probes[first_bad_after];
    return s;
}

/// Largest probe point below which ratio(x) >= bound holds down to 0.
std::optional<double> find_switch_below(const CoefficientModel& m, double bound) {
    const double ref = std::max(m.x0(), 1.0);
    const auto probes = geometric_points(ref * 1e-9, ref * 1e8, 512);
    // near 0 the ratio must blow up for the condition to hold at all
    if (m.tau().exponent_at_zero() >= 1.0) return std::nullopt;
    std::optional<double> last_good;
    for (double x : probes) {
        if (m.tau()(x) / (x * m.B()(x)) >= bound - 1e-12)
            last_good = x;
        else
            break;
    }
    return last_good;
}

}  // namespace

Thm12Result check_thm12(const CoefficientModel& m, std::optional<double> a_pin,
                        std::optional<double> b_pin) {
    Thm12Result r;
    CriteriaReport& rep = r.report;

    if (!m.kernel().self_similar_form()) {
        CriteriaEntry e;
        e.id = "kernel-form";
        e.condition = "self-similar kernel (moment conditions)";
        e.status = CheckStatus::Inconclusive;
        e.note = "moment criteria need the self-similar form";
        rep.entries.push_back(std::move(e));
        return r;
    }
    const KernelProfile& k0 = m.kernel().profile();
    const double m0 = k0.mass();

    {  // growth weight attains its infimum at infinity
        CriteriaEntry e;
        e.id = "growth-weight-limit";
        e.condition = "lim_{x->inf} g(x) = inf_x g(x)";
        e.sampled = true;
        const TailValue tail = growth_weight_tail(m);
        const double ref = std::max(m.x0(), 1.0);
        double gmin = kInf;
        for (double x : geometric_points(ref * 1e-8, ref * 1e8, 512))
            gmin = std::min(gmin, m.growth_weight(x));
        e.margin = gmin - tail.value;  // negative: an interior dip undercuts the tail
        e.marginal = std::fabs(e.margin) <= kMarginalBand * std::max(1.0, std::fabs(tail.value));
        if (!tail.stabilized)
            e.status = CheckStatus::Inconclusive;
        else
            e.status = e.margin >= -kMarginalBand * std::max(1.0, std::fabs(tail.value))
                           ? CheckStatus::Pass
                           : CheckStatus::Fail;
        e.note = "tail " + fmt(tail.value) + ", sampled inf " + fmt(gmin);
        rep.entries.push_back(std::move(e));
    }

    // candidate exponents
    std::vector<double> cand_a;
    if (a_pin)
        cand_a.push_back(*a_pin);
    else {
        cand_a = geometric_points(1e-2, 8.0, 48);
        cand_a.push_back(0.5);
        cand_a.push_back(1.0);
        cand_a.push_back(2.0);
        std::sort(cand_a.begin(), cand_a.end());
    }
    double best_score = -kInf;
    double best_a = 0.0, best_gap = 0.0;
    SwitchPoint best_switch;
    for (double a : cand_a) {
        const MomentValue ma = k0.moment(a);
        if (!ma.finite) continue;
        const double gap = m0 - ma.value;
        if (!(gap > 0)) continue;
        const SwitchPoint sw = find_switch_above(m, gap / a);
        if (!sw.found) continue;
        const double bound = gap / a;
        const double score = std::min(gap / m0, sw.tail_margin / std::max(bound, 1e-300));
        if (score > best_score) {
            best_score = score;
            best_a = a;
            best_gap = gap;
            best_switch = sw;
        }
    }

    {  // positive moment drop: M_a < M_0
        CriteriaEntry e;
        e.id = "moment-drop";
        e.condition = "exists a > 0 with M_a < M_0";
        if (best_a > 0) {
            e.status = CheckStatus::Pass;
            e.margin = best_gap;
            e.note = "a = " + fmt(best_a) + ", M_a = " + fmt(m0 - best_gap) +
                     ", M_0 = " + fmt(m0);
        } else if (a_pin) {
            const MomentValue ma = k0.moment(*a_pin);
            e.margin = ma.finite ? m0 - ma.value : -kInf;
            e.status = e.margin > 0 ? CheckStatus::Pass : CheckStatus::Fail;
            e.note = "pinned a = " + fmt(*a_pin) +
                     (e.margin > 0 ? " drops the moment but the tail condition failed"
                                   : " does not drop the moment");
        } else {
            e.status = CheckStatus::Fail;
            e.note = "no exponent in the search grid works";
        }
        e.marginal = std::fabs(e.margin) <= kMarginalBand;
        rep.entries.push_back(std::move(e));
    }

    const double b = b_pin ? *b_pin : 0.5;
    {  // negative moment finite: M_{-b} < inf
        CriteriaEntry e;
        e.id = "negative-moment";
        e.condition = "M_{-b} < infinity";
        const MomentValue mb = k0.moment(-b);
        e.status = mb.finite ? CheckStatus::Pass : CheckStatus::Fail;
        e.margin = mb.finite ? 1.0 : -1.0;
        e.note = "b = " + fmt(b) + ", M_{-b} = " + (mb.finite ? fmt(mb.value) : "divergent");
        rep.entries.push_back(std::move(e));
    }

    {  // tail transport condition: tau / (x B) <= (M_0 - M_a) / a beyond x_inf
        CriteriaEntry e;
        e.id = "tail-transport";
        e.condition = "tau(x) / (x B(x)) <= (M_0 - M_a)/a for x >= x_inf";
        e.sampled = true;
        if (best_a > 0) {
            e.status = CheckStatus::Pass;
            e.margin = best_switch.tail_margin;
            e.marginal = std::fabs(e.margin) <= kMarginalBand;
            e.note = "x_inf = " + fmt(best_switch.x) + ", bound " + fmt(best_gap / best_a);
            r.x_inf = best_switch.x;
        } else if (a_pin) {
            const MomentValue ma = k0.moment(*a_pin);
            const double bound = ma.finite ? (m0 - ma.value) / *a_pin : -kInf;
            const SwitchPoint sw = bound > 0 ? find_switch_above(m, bound) : SwitchPoint{};
            e.margin = sw.tail_margin;
            e.marginal = std::fabs(e.margin) <= kMarginalBand;
            e.status = sw.found ? CheckStatus::Pass : CheckStatus::Fail;
            if (sw.found) r.x_inf = sw.x;
            e.note = "pinned a = " + fmt(*a_pin) + ", bound " + fmt(bound) +
                     (sw.found ? ", x_inf = " + fmt(sw.x) : ", no switch point");
        } else {
            e.status = CheckStatus::Fail;
            e.note = "no admissible exponent";
        }
        rep.entries.push_back(std::move(e));
    }

    r.a = best_a > 0 ? best_a : a_pin.value_or(0.0);
    r.b = b;
    r.applicable = rep.overall() == CheckStatus::Pass;
    for (const auto& e : rep.entries) r.marginal = r.marginal || e.marginal;
    return r;
}

// ---------------------------------------------------------------------------
// Drift evaluation

namespace {

/// Closed self-similar drift ratio G V / V at x for V = x^r locally.
double drift_ratio_closed(const CoefficientModel& m, double r, double x) {
    const MomentValue mr = m.kernel().profile().moment(r);
    const double m0 = m.kernel().profile().mass();
    if (!mr.finite) return kInf;
    return r * m.tau()(x) / x + m.B()(x) * (mr.value - m0);
}

/// Quadrature drift ratio: the kernel exchange integrated against the matched
/// pure power, divided by V(x) = x^r.
double drift_ratio_quadrature(const CoefficientModel& m, double r, double x) {
    const auto& kernel = m.kernel();
    const double vx = std::pow(x, r);
    const double exch = integrate_singular(
        [&](double y) { return (std::pow(y, r) - vx) * kernel.density(x, y); }, 0.0, x, 1e-9);
    return (r * m.tau()(x) / x) + m.B()(x) * exch / vx;
}

template <typename Ratio>
CriteriaEntry drift_entry(const CoefficientModel& m, const LyapunovSpec& spec,
                          std::span<const double> probes, const char* id, Ratio ratio) {
    CriteriaEntry e;
    e.id = id;
    e.condition = "G V(x) <= 0 outside [x_low, x_high]";
    e.sampled = true;
    double worst = kInf;  // min over probes of -GV/V
    double worst_x = 0.0;
    for (double x : probes) {
        if (x > spec.x_low && x < spec.x_high) continue;
        const double r = x <= spec.x_low ? -spec.b : spec.a;
        const double d = ratio(m, r, x);
        if (-d < worst) {
            worst = -d;
            worst_x = x;
        }
    }
    e.margin = worst;
    e.marginal = std::fabs(worst) <= kMarginalBand;
    e.status = worst >= -kMarginalBand ? CheckStatus::Pass : CheckStatus::Fail;
    e.note = "tightest probe x = " + fmt(worst_x) + ", -GV/V = " + fmt(worst);
    return e;
}

}  // namespace

CriteriaEntry lyapunov_drift(const CoefficientModel& m, const LyapunovSpec& spec,
                             std::span<const double> probes) {
    if (!m.kernel().self_similar_form())
        throw ModelError("lyapunov_drift: closed form needs a self-similar kernel");
    return drift_entry(m, spec, probes, "lyapunov-drift", drift_ratio_closed);
}

CriteriaEntry lyapunov_drift_quadrature(const CoefficientModel& m, const LyapunovSpec& spec,
                                        std::span<const double> probes) {
    return drift_entry(m, spec, probes, "lyapunov-drift-quadrature", drift_ratio_quadrature);
}

std::optional<LyapunovSpec> derive_lyapunov_spec(const CoefficientModel& m, double a, double b) {
    if (!m.kernel().self_similar_form()) return std::nullopt;
    const KernelProfile& k0 = m.kernel().profile();
    const double m0 = k0.mass();
    const MomentValue ma = k0.moment(a);
    const MomentValue mb = k0.moment(-b);
    if (!ma.finite || !mb.finite) return std::nullopt;
    const double gap_above = m0 - ma.value;
    if (!(gap_above > 0)) return std::nullopt;
    const SwitchPoint above = find_switch_above(m, gap_above / a);
    if (!above.found) return std::nullopt;
    const double bound_below = (mb.value - m0) / b;
    std::optional<double> below;
    if (bound_below <= 0) {
        // drift below is nonpositive everywhere the ratio is nonnegative
        below = above.x * 0.5;
    } else {
        below = find_switch_below(m, bound_below);
    }
    if (!below) return std::nullopt;
    LyapunovSpec spec;
    spec.a = a;
    spec.b = b;
    spec.x_low = std::min(*below, above.x * 0.5);
    spec.x_high = std::max(above.x, spec.x_low * 2.0);
    return spec;
}

// ---------------------------------------------------------------------------
// constant_case

ConstantCaseResult constant_case(const CoefficientModel& m, const LyapunovSpec& spec,
                                 std::span<const double> probes) {
    if (!m.constant_rates())
        throw ModelError("constant_case: needs constant B and a self-similar kernel");
    ConstantCaseResult r;
    const double B = m.B()(m.x0() > 0 ? m.x0() : 1.0);
    const double n0 = m.kernel().profile().mass();
    r.lambda_exact = B * (n0 - 1.0);

    {
        CriteriaEntry e;
        e.id = "exact-exponent";
        e.condition = "lambda = B (N - 1) for constant rates";
        e.status = CheckStatus::Pass;
        e.margin = r.lambda_exact;
        e.note = "lambda = " + fmt(r.lambda_exact);
        r.report.entries.push_back(std::move(e));
    }
    {
        // the uniform tail criterion compares limsup g with lambda; here the
        // growth weight is the constant lambda itself, so it never applies
        CriteriaEntry e;
        e.id = "tail-growth-weight";
        e.condition = "limsup_{x->inf} g(x) < lambda";
        e.status = CheckStatus::Fail;
        e.margin = 0.0;
        e.marginal = true;
        e.note = "g is constant and equals lambda; uniform criterion inapplicable";
        r.report.entries.push_back(std::move(e));
        r.thm11_applicable = false;
    }

    const KernelProfile& k0 = m.kernel().profile();
    {
        CriteriaEntry e;
        e.id = "moment-drop";
        e.condition = "M_a < M_0";
        const MomentValue ma = k0.moment(spec.a);
        e.margin = ma.finite ? n0 - ma.value : -kInf;
        e.status = e.margin > 0 ? CheckStatus::Pass : CheckStatus::Fail;
        e.marginal = std::fabs(e.margin) <= kMarginalBand;
        e.note = "a = " + fmt(spec.a);
        r.report.entries.push_back(std::move(e));
    }
    {
        CriteriaEntry e;
        e.id = "negative-moment";
        e.condition = "M_{-b} < infinity";
        const MomentValue mb = k0.moment(-spec.b);
        e.status = mb.finite ? CheckStatus::Pass : CheckStatus::Fail;
        e.margin = mb.finite ? 1.0 : -1.0;
        e.note = "b = " + fmt(spec.b) + ", M_{-b} = " + (mb.finite ? fmt(mb.value) : "divergent");
        r.report.entries.push_back(std::move(e));
    }
    {
        // transport tail: tau(x)/x <= (B/a)(M_0 - M_a) from x_inf on
        CriteriaEntry e;
        e.id = "tail-transport";
        e.condition = "tau(x)/x <= (B/a)(M_0 - M_a) for x >= x_inf";
        e.sampled = true;
        const MomentValue ma = k0.moment(spec.a);
        const double bound = ma.finite ? (n0 - ma.value) / spec.a : -kInf;
        const SwitchPoint sw = bound > 0 ? find_switch_above(m, bound) : SwitchPoint{};
        e.margin = sw.tail_margin;
        e.marginal = std::fabs(e.margin) <= kMarginalBand;
        e.status = sw.found ? CheckStatus::Pass
                            : (e.marginal ? CheckStatus::Inconclusive : CheckStatus::Fail);
        e.note = sw.found ? "x_inf = " + fmt(sw.x)
                          : "tail margin " + fmt(sw.tail_margin) +
                                (e.marginal ? " (marginal: bound met only in the limit)" : "");
        r.report.entries.push_back(std::move(e));
    }

    // Foster-Lyapunov inequality G V <= -alpha V + alpha' on the window
    double alpha = kInf;
    double alpha_prime = 0.0;
    const LyapunovFunction V(spec);
    for (double x : probes) {
        const bool inside = x > spec.x_low && x < spec.x_high;
        const double rexp = x <= spec.x_low ? -spec.b : spec.a;
        if (inside) {
            // bound the drift inside the window by the worse of the two powers
            const double d1 = drift_ratio_closed(m, -spec.b, x) * std::pow(x, -spec.b);
            const double d2 = drift_ratio_closed(m, spec.a, x) * std::pow(x, spec.a);
            alpha_prime = std::max(alpha_prime, std::max(d1, d2));
        } else {
            alpha = std::min(alpha, -drift_ratio_closed(m, rexp, x));
        }
    }
    r.alpha = alpha;
    // shift by alpha so the inequality holds inside the window as well
    for (double x : probes) {
        if (!(x > spec.x_low && x < spec.x_high)) continue;
        const double d1 = drift_ratio_closed(m, -spec.b, x) * std::pow(x, -spec.b);
        const double d2 = drift_ratio_closed(m, spec.a, x) * std::pow(x, spec.a);
        alpha_prime = std::max(alpha_prime, std::max(d1, d2) + alpha * V(x));
    }
    r.alpha_prime = alpha_prime;
    {
        CriteriaEntry e;
        e.id = "drift-inequality";
        e.condition = "G V <= -alpha V + alpha' on the window";
        e.sampled = true;
        e.margin = alpha;
        e.status = alpha > 0 ? CheckStatus::Pass : CheckStatus::Fail;
        e.note = "alpha = " + fmt(alpha) + ", alpha' = " + fmt(alpha_prime);
        r.report.entries.push_back(std::move(e));
    }
    return r;
}

}  // namespace gf
