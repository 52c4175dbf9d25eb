#include "gf/malthus.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <sstream>

namespace gf {

namespace {
constexpr double kCertSigma = 3.0;  // certification level for CI-aware bisection
}

// ---------------------------------------------------------------------------
// ExcursionSet

ExcursionSet::ExcursionSet(const CoefficientModel& m, double start, double target, double horizon,
                           McOptions opt)
    : model_(&m), start_(start), target_(target), horizon_(horizon), opt_(opt) {
    if (!(horizon > 0)) throw ModelError("excursion set: horizon must be positive");
}

void ExcursionSet::ensure(std::size_t n) {
    if (n <= stats_.size()) return;
    const std::size_t old = stats_.size();
    stats_.resize(n);
    const CoefficientModel& m = *model_;
    parallel_for(n - old, opt_.workers, [&](std::size_t k) {
        const std::size_t i = old + k;
        RngStream rng(opt_.seed, make_stream(opt_.stream_context, i));
        stats_[i] = run_excursion(m, start_, target_, horizon_, rng);
    });
}

std::size_t ExcursionSet::truncated_count() const {
    std::size_t t = 0;
    for (const auto& s : stats_) t += s.truncated ? 1 : 0;
    return t;
}

LaplaceEstimate ExcursionSet::laplace(double q) const {
    LaplaceEstimate e;
    e.n_paths = stats_.size();
    std::vector<double> logw(stats_.size(), -kInf);  // misses contribute weight 0
    for (std::size_t i = 0; i < stats_.size(); ++i) {
        const auto& s = stats_[i];
        if (s.truncated) ++e.truncated;
        if (s.hit) {
            ++e.hits;
            logw[i] = s.growth_integral - q * s.hitting_time;
        }
    }
    const MeanStderr ms = exp_mean_stderr(logw);
    e.value = ms.mean;
    e.se = ms.se;
    const double g_sup = model_->growth_weight_sup();
    if (q > g_sup) e.bias_bound = std::exp(-(q - g_sup) * horizon_);
    e.truncation_dominated = !e.bias_bound && 2 * e.truncated > e.n_paths && e.n_paths > 0;
    return e;
}

MeanStderr ExcursionSet::derivative(double q) const {
    // dL/dq = E[-H e^{W - qH}; hit]; all summands share the sign
    std::vector<double> logd(stats_.size(), -kInf);
    for (std::size_t i = 0; i < stats_.size(); ++i) {
        const auto& s = stats_[i];
        if (s.hit) logd[i] = std::log(s.hitting_time) + s.growth_integral - q * s.hitting_time;
    }
    MeanStderr ms = exp_mean_stderr(logd);
    ms.mean = -ms.mean;
    return ms;
}

// ---------------------------------------------------------------------------
// Point estimators

LaplaceEstimate estimate_L(const CoefficientModel& m, double x, double y, double q,
                           std::size_t n_paths, double horizon, const McOptions& opt) {
    ExcursionSet set(m, x, y, horizon, opt);
    set.ensure(n_paths);
    return set.laplace(q);
}

DerivativeEstimate estimate_L_derivative(const CoefficientModel& m, double x, double q,
                                         std::size_t n_paths, double horizon,
                                         const McOptions& opt) {
    ExcursionSet set(m, x, x, horizon, opt);
    set.ensure(n_paths);
    const MeanStderr ms = set.derivative(q);
    return {ms.mean, ms.se, n_paths};
}

// ---------------------------------------------------------------------------
// solve_malthus

namespace {

enum class Side { Above, Below };  // Above: L(q) < 1, i.e. q > lambda

struct Classification {
    Side side;
    bool certified;
    bool exact_root;
    LaplaceEstimate est;
};

Classification classify(ExcursionSet& set, double q, std::size_t budget) {
    for (;;) {
        const LaplaceEstimate e = set.laplace(q);
        if (std::isinf(e.value)) return {Side::Below, true, false, e};
        // every path hit and every weight ties at exactly 1: q is the root of
        // a degenerate (constant growth weight) transform, to the last bit
        if (e.se == 0.0 && e.value == 1.0 && e.hits == e.n_paths && e.n_paths > 0)
            return {Side::Below, true, true, e};
        const double lo = e.value - kCertSigma * e.se;
        const double hi = e.value + kCertSigma * e.se;
        if (hi < 1.0) return {Side::Above, true, false, e};
        if (lo > 1.0) return {Side::Below, true, false, e};
        if (set.size() >= budget)
            return {e.value < 1.0 ? Side::Above : Side::Below, false, false, e};
        set.ensure(std::min(budget, std::max<std::size_t>(2 * set.size(), 1024)));
    }
}

ProbePoint to_probe(double q, const Classification& c) {
    return {q, c.est.value, c.est.se, c.est.n_paths, c.certified};
}

}  // namespace

MalthusResult solve_malthus(const CoefficientModel& m, double tol, std::size_t budget,
                            double horizon, const McOptions& opt) {
    if (!(tol > 0)) throw ModelError("solve_malthus: tolerance must be positive");
    if (budget < 16) throw ModelError("solve_malthus: budget too small");

    MalthusResult r;
    r.tol = tol;
    r.g_sup = m.growth_weight_sup();
    r.g_inf = m.growth_weight_inf();

    McOptions o = opt;
    o.stream_context = opt.stream_context + stream_ctx::solve;
    ExcursionSet set(m, m.x0(), m.x0(), horizon, o);
    set.ensure(std::min<std::size_t>(budget, 1024));

    const double spread = std::max(1.0, r.g_sup - r.g_inf);
    double q_hi = r.g_sup + 1.0;
    double q_lo = -kInf;

    bool all_certified = true;
    auto record = [&](double q, const Classification& c) {
        r.probes.push_back(to_probe(q, c));
        all_certified = all_certified && c.certified;
    };

    {  // the cap q_hi must classify Above; otherwise widen once
        Classification c = classify(set, q_hi, budget);
        record(q_hi, c);
        if (c.side == Side::Below) {
            q_hi = r.g_sup + 2.0 + spread;
            c = classify(set, q_hi, budget);
            record(q_hi, c);
            if (c.side == Side::Below) {
                r.status = MalthusResult::Status::NoBracket;
                r.message = "transform stays above 1 beyond the growth-weight bound";
                r.paths_used = set.size();
                r.truncated = set.truncated_count();
                return r;
            }
        }
    }

    // scan downward for a certified L > 1 point
    std::optional<double> root_exact;
    const double q_floor = r.g_inf - 1.0 - 3.0 * spread;
    for (double q = q_hi - spread; q_lo == -kInf; q -= spread) {
        if (q < q_floor) break;
        const Classification c = classify(set, q, budget);
        record(q, c);
        if (c.exact_root) {
            root_exact = q;
            break;
        }
        if (c.side == Side::Below)
            q_lo = q;
        else
            q_hi = std::min(q_hi, q);
    }
    if (!root_exact && q_lo == -kInf) {
        r.status = MalthusResult::Status::NoBracket;
        r.paths_used = set.size();
        r.truncated = set.truncated_count();
        const std::size_t trunc = r.truncated;
        std::ostringstream msg;
        msg << "no q with L(q) > 1 found down to " << q_floor;
        if (trunc == set.size()) msg << "; every excursion was horizon-capped (no returns)";
        r.message = msg.str();
        return r;
    }

    // certified bracket bookkeeping
    double cert_lo = -kInf, cert_hi = kInf;
    for (const auto& p : r.probes) {
        if (!p.certified) continue;
        if (p.value > 1.0) cert_lo = std::max(cert_lo, p.q);
        if (p.value < 1.0) cert_hi = std::min(cert_hi, p.q);
    }

    while (!root_exact && q_hi - q_lo > tol) {
        const double mid = 0.5 * (q_lo + q_hi);
        const Classification c = classify(set, mid, budget);
        record(mid, c);
        if (c.exact_root) {
            root_exact = mid;
            break;
        }
        if (c.side == Side::Above) {
            q_hi = mid;
            if (c.certified) cert_hi = std::min(cert_hi, mid);
        } else {
            q_lo = mid;
            if (c.certified) cert_lo = std::max(cert_lo, mid);
        }
    }

    if (root_exact) {
        r.lambda = *root_exact;
        r.status = MalthusResult::Status::Ok;
        r.ci_lo = r.ci_hi = r.lambda;
        // one probe below the root so the renewal-rate certificate can fire
        const double dq = std::max(tol, 1e-9);
        const Classification c = classify(set, r.lambda - dq, budget);
        record(r.lambda - dq, c);
    } else {
        r.lambda = 0.5 * (q_lo + q_hi);
        const bool cert_ok = std::isfinite(cert_lo) && std::isfinite(cert_hi) &&
                             cert_hi - cert_lo <= tol * (1.0 + 1e-9);
        if (cert_ok) {
            r.status = MalthusResult::Status::Ok;
            r.ci_lo = cert_lo;
            r.ci_hi = cert_hi;
        } else {
            r.status = MalthusResult::Status::BudgetExhausted;
            r.ci_lo = std::isfinite(cert_lo) ? cert_lo : q_lo;
            r.ci_hi = std::isfinite(cert_hi) ? cert_hi : q_hi;
            r.message = "certified bracket wider than tolerance; point-estimate refinement used";
        }
    }

    {  // reporting curve around lambda
        const double half = std::max(0.5, 0.25 * spread);
        const std::size_t npts = 21;
        for (std::size_t i = 0; i < npts; ++i) {
            const double q =
                r.lambda - half + 2.0 * half * static_cast<double>(i) / (npts - 1);
            const LaplaceEstimate e = set.laplace(q);
            r.curve.push_back({q, e.value, e.se, e.n_paths, false});
        }
    }

    const MeanStderr d = set.derivative(r.lambda);
    r.deriv_at_lambda = d.mean;
    r.deriv_se = d.se;

    for (const auto& p : r.probes)
        if (p.q < r.lambda && p.certified && p.value > 1.0 && std::isfinite(p.value))
            r.rate_certified = true;

    r.paths_used = set.size();
    r.truncated = set.truncated_count();
    return r;
}

// ---------------------------------------------------------------------------
// Harmonic profile and asymptotic profile

HInterp::HInterp(std::span<const double> xs, std::span<const double> values) {
    std::vector<double> lx(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(xs[i] > 0)) throw ModelError("h interpolant: nodes must be positive");
        lx[i] = std::log(xs[i]);
    }
    p_ = Pchip(std::move(lx), std::vector<double>(values.begin(), values.end()));
}

double HInterp::operator()(double x) const {
    if (p_.empty()) return 1.0;
    return std::max(p_(std::log(std::max(x, 1e-300))), 1e-300);
}

HInterp HEstimate::interpolant() const { return HInterp(x, value); }

HEstimate estimate_h(const CoefficientModel& m, std::span<const double> nodes, double q,
                     std::size_t per_node, double horizon, const McOptions& opt) {
    HEstimate est;
    est.q = q;
    est.x.assign(nodes.begin(), nodes.end());
    est.value.resize(nodes.size());
    est.se.resize(nodes.size());
    est.truncated_share.resize(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        McOptions o = opt;
        o.stream_context = opt.stream_context + stream_ctx::h_node + static_cast<std::uint32_t>(i);
        const LaplaceEstimate e = estimate_L(m, nodes[i], m.x0(), q, per_node, horizon, o);
        est.value[i] = e.value;
        est.se[i] = e.se;
        est.truncated_share[i] =
            e.n_paths ? static_cast<double>(e.truncated) / static_cast<double>(e.n_paths) : 0.0;
    }
    return est;
}

ProfileEstimate estimate_profile(const CoefficientModel& m, const Grid& grid, double lambda,
                                 std::size_t per_node, double horizon, const McOptions& opt) {
    ProfileEstimate p;
    p.x = grid.nodes;
    const HEstimate h = estimate_h(m, grid.nodes, lambda, per_node, horizon, opt);
    p.h = h.value;
    p.h_se = h.se;
    p.ret_deriv.resize(grid.size());
    p.ret_deriv_se.resize(grid.size());
    p.nu.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        McOptions o = opt;
        o.stream_context =
            opt.stream_context + stream_ctx::deriv_node + static_cast<std::uint32_t>(i);
        ExcursionSet set(m, grid.nodes[i], grid.nodes[i], horizon, o);
        set.ensure(per_node);
        const MeanStderr d = set.derivative(lambda);
        p.ret_deriv[i] = std::fabs(d.mean);
        p.ret_deriv_se[i] = d.se;
        const double denom = p.h[i] * m.tau()(grid.nodes[i]) * p.ret_deriv[i];
        p.nu[i] = denom > 0 ? 1.0 / denom : 0.0;
    }
    std::vector<double> cell(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) cell[i] = p.nu[i] * grid.widths[i];
    p.integral = pairwise_sum(cell);
    p.normalization_defect = std::fabs(p.integral - 1.0);
    p.nu_normalized = p.nu;
    if (p.integral > 0)
        for (double& v : p.nu_normalized) v /= p.integral;
    return p;
}

// ---------------------------------------------------------------------------
// Martingale diagnostics

MartingaleReport martingale_test(const CoefficientModel& m, double lambda, const HInterp& h,
                                 std::span<const double> times, std::size_t n_paths,
                                 std::optional<double> q_super, const HInterp& h_super,
                                 const McOptions& opt) {
    if (times.empty() || n_paths == 0) throw ModelError("martingale test: empty inputs");
    MartingaleReport rep;
    rep.lambda = lambda;
    rep.q_super = q_super;
    rep.n_paths = n_paths;
    double t_max = 0.0;
    for (double t : times) t_max = std::max(t_max, t);

    const double h0 = h(m.x0());
    const double h0_super = q_super ? h_super(m.x0()) : 1.0;

    // per-path, per-time weights; paths are independent across i by stream
    std::vector<std::vector<double>> mart(times.size(), std::vector<double>(n_paths));
    std::vector<std::vector<double>> super(q_super ? times.size() : 0,
                                           std::vector<double>(n_paths));
    parallel_for(n_paths, opt.workers, [&](std::size_t i) {
        RngStream rng(opt.seed, make_stream(opt.stream_context + stream_ctx::martingale, i));
        const Path p = simulate(m, m.x0(), StoppingRule::fixed_horizon(t_max), t_max * 2, rng);
        for (std::size_t j = 0; j < times.size(); ++j) {
            const double t = times[j];
            const double xt = p.mass_at(m, t);
            const double w = fk_log_growth(m, p, t);
            mart[j][i] = std::exp(w - lambda * t) * h(xt) / h0;
            if (q_super) super[j][i] = std::exp(w - *q_super * t) * h_super(xt) / h0_super;
        }
    });
    for (std::size_t j = 0; j < times.size(); ++j) {
        const MeanStderr ms = mean_stderr(mart[j]);
        rep.martingale.push_back({times[j], ms.mean, ms.se});
        if (q_super) {
            const MeanStderr ss = mean_stderr(super[j]);
            rep.supermartingale.push_back({times[j], ss.mean, ss.se});
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Tilted occupation measure

namespace {

/// Time the flow spends in [a, b] along a stretch from `lo` to `hi`.
double segment_cell_time(const CoefficientModel& m, double lo, double hi, double a, double b) {
    const double u = std::max(lo, a), v = std::min(hi, b);
    if (!(v > u)) return 0.0;
    return travel_time(m, u, v);
}

}  // namespace

OccupationHistogram tilted_occupation(const CoefficientModel& m, double lambda, const Grid& grid,
                                      std::size_t n_excursions, double horizon,
                                      const McOptions& opt) {
    OccupationHistogram out;
    out.n_excursions = n_excursions;
    out.density.assign(grid.size(), 0.0);

    std::vector<double> weights(n_excursions, 0.0);
    std::vector<std::vector<double>> cell_time(n_excursions);
    parallel_for(n_excursions, opt.workers, [&](std::size_t i) {
        RngStream rng(opt.seed, make_stream(opt.stream_context + stream_ctx::occupation, i));
        const Path p = simulate(m, m.x0(), StoppingRule::hit_target(m.x0()), horizon, rng);
        if (p.cause != TerminalCause::HitTarget) return;  // weight stays 0
        const double logw = fk_log_growth(m, p, p.terminal_time) - lambda * p.terminal_time;
        weights[i] = std::exp(logw);
        auto& ct = cell_time[i];
        ct.assign(grid.size(), 0.0);
        for (std::size_t s = 0; s < p.segments.size(); ++s) {
            const double lo = p.segments[s].mass_begin;
            const double hi = s < p.jumps.size() ? p.jumps[s].mass_pre : p.terminal_mass;
            // cells overlapping [lo, hi]
            for (std::size_t c = 0; c < grid.size(); ++c) {
                if (grid.bounds[c + 1] <= lo) continue;
                if (grid.bounds[c] >= hi) break;
                ct[c] += segment_cell_time(m, lo, hi, grid.bounds[c], grid.bounds[c + 1]);
            }
        }
    });

    std::size_t hits = 0;
    double wsum = 0.0, w2sum = 0.0;
    for (std::size_t i = 0; i < n_excursions; ++i) {
        if (weights[i] > 0) {
            ++hits;
            wsum += weights[i];
            w2sum += weights[i] * weights[i];
        }
    }
    out.hits = hits;
    out.ess = w2sum > 0 ? wsum * wsum / w2sum : 0.0;
    out.low_ess_warning = out.ess < 0.1 * static_cast<double>(std::max<std::size_t>(hits, 1));

    std::vector<double> acc(n_excursions);
    double total = 0.0;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        for (std::size_t i = 0; i < n_excursions; ++i)
            acc[i] = weights[i] > 0 && !cell_time[i].empty() ? weights[i] * cell_time[i][c] : 0.0;
        out.density[c] = pairwise_sum(acc);
        total += out.density[c];
    }
    if (total > 0)
        for (std::size_t c = 0; c < grid.size(); ++c) out.density[c] /= total * grid.widths[c];
    return out;
}

}  // namespace gf
