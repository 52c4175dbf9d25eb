#include "gf/coeffs.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <sstream>

namespace gf {

// ---------------------------------------------------------------------------
// GrowthRate

GrowthRate GrowthRate::constant(double c) {
    if (!(c > 0)) throw ModelError("growth rate: constant must be positive");
    GrowthRate g;
    g.family_ = Family::Constant;
    g.a_ = c;
    return g;
}

GrowthRate GrowthRate::affine(double intercept, double slope) {
    if (!(intercept >= 0) || !(slope >= 0) || intercept + slope == 0)
        throw ModelError("growth rate: affine needs nonnegative coefficients, not both zero");
    if (slope == 0) return constant(intercept);
    GrowthRate g;
    g.family_ = Family::Affine;
    g.a_ = intercept;
    g.b_ = slope;
    return g;
}

GrowthRate GrowthRate::power(double scale, double exponent) {
    if (!(scale > 0)) throw ModelError("growth rate: power scale must be positive");
    if (exponent == 0) return constant(scale);
    GrowthRate g;
    g.family_ = Family::Power;
    g.a_ = scale;
    g.b_ = exponent;
    return g;
}

GrowthRate GrowthRate::tabulated(std::vector<double> xs, std::vector<double> vals,
                                 double exponent_at_zero, double exponent_at_inf) {
    for (double v : vals)
        if (!(v > 0)) throw ModelError("growth rate: tabulated values must be positive");
    GrowthRate g;
    g.family_ = Family::Tabulated;
    g.tab_ = std::make_shared<Pchip>(std::move(xs), std::move(vals));
    g.p0_ = exponent_at_zero;
    g.pinf_ = exponent_at_inf;
    return g;
}

double GrowthRate::operator()(double x) const {
    switch (family_) {
        case Family::Constant: return a_;
        case Family::Affine: return a_ + b_ * x;
        case Family::Power: return a_ * std::pow(x, b_);
        case Family::Tabulated: return (*tab_)(x);
        case Family::Sum: {
            double s = 0;
            for (const auto& t : *terms_) s += t(x);
            return s;
        }
    }
    return 0;
}

double GrowthRate::exponent_at_zero() const {
    switch (family_) {
        case Family::Constant: return 0;
        case Family::Affine: return a_ > 0 ? 0 : 1;
        case Family::Power: return b_;
        case Family::Tabulated: return p0_;
        case Family::Sum: {
            double p = kInf;  // smallest exponent dominates at 0
            for (const auto& t : *terms_) p = std::min(p, t.exponent_at_zero());
            return p;
        }
    }
    return 0;
}

double GrowthRate::exponent_at_inf() const {
    switch (family_) {
        case Family::Constant: return 0;
        case Family::Affine: return b_ > 0 ? 1 : 0;
        case Family::Power: return b_;
        case Family::Tabulated: return pinf_;
        case Family::Sum: {
            double p = -kInf;  // largest exponent dominates at infinity
            for (const auto& t : *terms_) p = std::max(p, t.exponent_at_inf());
            return p;
        }
    }
    return 0;
}

bool GrowthRate::has_closed_flow() const {
    return family_ == Family::Constant || family_ == Family::Affine || family_ == Family::Power;
}

double GrowthRate::closed_travel_time(double x, double y) const {
    assert(has_closed_flow() && 0 <= x && x <= y);
    if (x == y) return 0.0;
    switch (family_) {
        case Family::Constant: return (y - x) / a_;
        case Family::Affine: return std::log((a_ + b_ * y) / (a_ + b_ * x)) / b_;
        case Family::Power: {
            if (b_ == 1.0) {
                if (x == 0) return kInf;
                return std::log(y / x) / a_;
            }
            const double e = 1.0 - b_;
            if (x == 0 && e < 0) return kInf;
            return (std::pow(y, e) - std::pow(x, e)) / (a_ * e);
        }
        default: return kInf;
    }
}

double GrowthRate::closed_flow(double x, double t) const {
    assert(has_closed_flow() && t >= 0);
    switch (family_) {
        case Family::Constant: return x + a_ * t;
        case Family::Affine: {
            const double c = x + a_ / b_;
            return c * std::exp(b_ * t) - a_ / b_;
        }
        case Family::Power: {
            if (b_ == 1.0) return x * std::exp(a_ * t);
            const double e = 1.0 - b_;
            const double base = std::pow(x, e) + a_ * e * t;
            if (base <= 0) return kInf;  // finite-time blow-up (e < 0)
            return std::pow(base, 1.0 / e);
        }
        default: return kInf;
    }
}

GrowthRate GrowthRate::scaled(double s) const {
    if (!(s > 0)) throw ModelError("growth rate: scale factor must be positive");
    GrowthRate g = *this;
    switch (family_) {
        case Family::Constant:
        case Family::Power: g.a_ *= s; break;
        case Family::Affine:
            g.a_ *= s;
            g.b_ *= s;
            break;
        case Family::Tabulated: {
            std::vector<double> vals = tab_->values();
            for (double& v : vals) v *= s;
            g.tab_ = std::make_shared<Pchip>(tab_->knots(), std::move(vals));
            break;
        }
        case Family::Sum: {
            auto terms = std::make_shared<std::vector<GrowthRate>>();
            for (const auto& t : *terms_) terms->push_back(t.scaled(s));
            g.terms_ = terms;
            break;
        }
    }
    return g;
}

GrowthRate operator+(const GrowthRate& a, const GrowthRate& b) {
    using F = GrowthRate::Family;
    auto lin = [](const GrowthRate& g, double& c0, double& c1) {
        if (g.family_ == F::Constant) {
            c0 = g.a_;
            c1 = 0;
            return true;
        }
        if (g.family_ == F::Affine) {
            c0 = g.a_;
            c1 = g.b_;
            return true;
        }
        return false;
    };
    double a0, a1, b0, b1;
    if (lin(a, a0, a1) && lin(b, b0, b1)) {
        const double c0 = a0 + b0, c1 = a1 + b1;
        return c1 == 0 ? GrowthRate::constant(c0) : GrowthRate::affine(c0, c1);
    }
    GrowthRate g;
    g.family_ = F::Sum;
    auto terms = std::make_shared<std::vector<GrowthRate>>();
    auto flatten = [&terms](const GrowthRate& x) {
        if (x.family_ == F::Sum)
            terms->insert(terms->end(), x.terms_->begin(), x.terms_->end());
        else
            terms->push_back(x);
    };
    flatten(a);
    flatten(b);
    g.terms_ = terms;
    return g;
}

std::string GrowthRate::describe() const {
    std::ostringstream os;
    switch (family_) {
        case Family::Constant: os << "tau = " << a_; break;
        case Family::Affine: os << "tau = " << a_ << " + " << b_ << " x"; break;
        case Family::Power: os << "tau = " << a_ << " x^" << b_; break;
        case Family::Tabulated: os << "tau tabulated (" << tab_->knots().size() << " knots)"; break;
        case Family::Sum: os << "tau = sum of " << terms_->size() << " terms"; break;
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// RateFunction

RateFunction RateFunction::constant(double c) {
    if (!(c >= 0)) throw ModelError("fragmentation rate: constant must be nonnegative");
    RateFunction r;
    r.family_ = Family::Constant;
    r.a_ = c;
    return r;
}

RateFunction RateFunction::decay(double base, double amplitude, double scale) {
    if (!(base >= 0) || !(scale > 0) || base + amplitude < 0 || base + std::min(amplitude, 0.0) < 0)
        throw ModelError("fragmentation rate: decay family needs nonnegative values");
    RateFunction r;
    r.family_ = Family::Decay;
    r.a_ = base;
    r.b_ = amplitude;
    r.s_ = scale;
    return r;
}

RateFunction RateFunction::tabulated(std::vector<double> xs, std::vector<double> vals) {
    for (double v : vals)
        if (!(v >= 0)) throw ModelError("fragmentation rate: tabulated values must be nonnegative");
    RateFunction r;
    r.family_ = Family::Tabulated;
    r.tab_ = std::make_shared<Pchip>(std::move(xs), std::move(vals));
    return r;
}

double RateFunction::operator()(double x) const {
    switch (family_) {
        case Family::Constant: return a_;
        case Family::Decay: return a_ + b_ / (1.0 + x / s_);
        case Family::Tabulated: return std::max(0.0, (*tab_)(x));
    }
    return 0;
}

double RateFunction::sup_bound() const {
    switch (family_) {
        case Family::Constant: return a_;
        case Family::Decay: return std::max(a_, a_ + b_);
        case Family::Tabulated: {
            double m = 0;
            for (double v : tab_->values()) m = std::max(m, v);
            return m;
        }
    }
    return 0;
}

double RateFunction::inf_bound() const {
    switch (family_) {
        case Family::Constant: return a_;
        case Family::Decay: return std::min(a_, a_ + b_);
        case Family::Tabulated: {
            double m = kInf;
            for (double v : tab_->values()) m = std::min(m, v);
            return m;
        }
    }
    return 0;
}

double RateFunction::limit_at_inf() const {
    switch (family_) {
        case Family::Constant: return a_;
        case Family::Decay: return a_;
        case Family::Tabulated: return tab_->values().back();
    }
    return 0;
}

std::string RateFunction::describe() const {
    std::ostringstream os;
    switch (family_) {
        case Family::Constant: os << "B = " << a_; break;
        case Family::Decay: os << "B = " << a_ << " + " << b_ << "/(1 + x/" << s_ << ")"; break;
        case Family::Tabulated: os << "B tabulated (" << tab_->knots().size() << " knots)"; break;
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// KernelProfile

KernelProfile KernelProfile::power(double scale, double exponent) {
    if (!(scale > 0)) throw ModelError("kernel profile: scale must be positive");
    if (!(exponent > -1.0))
        throw ModelError("kernel profile: exponent must exceed -1 for integrability");
    KernelProfile k;
    k.family_ = Family::Power;
    k.c_ = scale;
    k.alpha_ = exponent;
    k.mass_ = scale / (exponent + 1.0);
    return k;
}

KernelProfile KernelProfile::tabulated(std::vector<double> zs, std::vector<double> vals) {
    if (zs.empty() || !(zs.front() > 0) || !(zs.back() <= 1.0))
        throw ModelError("kernel profile: knots must lie in (0, 1]");
    for (double v : vals)
        if (!(v >= 0)) throw ModelError("kernel profile: density values must be nonnegative");
    KernelProfile k;
    k.family_ = Family::Tabulated;
    k.dens_ = std::make_shared<Pchip>(zs, vals);

    // cumulative on a fine refinement, then quantiles on fixed levels
    const std::size_t fine = 4096;
    std::vector<double> zf(fine + 1), cf(fine + 1, 0.0);
    const double z0 = zs.front(), z1 = zs.back();
    for (std::size_t i = 0; i <= fine; ++i)
        zf[i] = z0 + (z1 - z0) * static_cast<double>(i) / fine;
    const auto& dens = *k.dens_;
    for (std::size_t i = 1; i <= fine; ++i) {
        const double a = zf[i - 1], b = zf[i];
        cf[i] = cf[i - 1] + 0.5 * (dens(a) + dens(b)) * (b - a);
    }
    k.mass_ = cf.back();
    if (!(k.mass_ > 0)) throw ModelError("kernel profile: zero total mass");
    k.cdf_ = std::make_shared<Pchip>(zf, cf);

    // strictly increasing sub-sequence for the quantile table
    std::vector<double> qu, qz;
    qu.push_back(0.0);
    qz.push_back(z0);
    for (std::size_t i = 1; i <= fine; ++i) {
        const double u = cf[i] / k.mass_;
        if (u > qu.back() + 1e-12) {
            qu.push_back(u);
            qz.push_back(zf[i]);
        }
    }
    if (qu.back() < 1.0) {
        qu.push_back(1.0);
        qz.push_back(z1);
    }
    k.quantile_ = std::make_shared<Pchip>(std::move(qu), std::move(qz));
    return k;
}

double KernelProfile::density(double z) const {
    if (z <= 0.0 || z > 1.0) return 0.0;
    if (family_ == Family::Power) return c_ * std::pow(z, alpha_);
    if (z < dens_->knots().front()) return 0.0;
    return std::max(0.0, (*dens_)(z));
}

double KernelProfile::mass() const { return mass_; }

MomentValue KernelProfile::moment(double r) const {
    if (family_ == Family::Power) {
        const double e = r + alpha_ + 1.0;
        if (e <= 0.0) return {kInf, false};
        return {c_ / e, true};
    }
    const double z0 = dens_->knots().front();
    const auto& dens = *dens_;
    const double v = integrate([&](double z) { return std::pow(z, r) * dens(z); }, z0,
                               dens_->knots().back(), 1e-10);
    return {v, true};
}

double KernelProfile::cdf(double z) const {
    if (z <= 0.0) return 0.0;
    if (z >= 1.0) return mass_;
    if (family_ == Family::Power) return c_ * std::pow(z, alpha_ + 1.0) / (alpha_ + 1.0);
    return std::clamp((*cdf_)(z), 0.0, mass_);
}

double KernelProfile::sample_ratio(RngStream& rng) const {
    const double u = rng.uniform();
    if (family_ == Family::Power) return std::pow(u, 1.0 / (alpha_ + 1.0));
    return std::clamp((*quantile_)(u), dens_->knots().front(), 1.0);
}

double KernelProfile::support_lo() const {
    return family_ == Family::Power ? 0.0 : dens_->knots().front();
}

std::string KernelProfile::describe() const {
    std::ostringstream os;
    if (family_ == Family::Power)
        os << "k0(z) = " << c_ << " z^" << alpha_;
    else
        os << "k0 tabulated on [" << dens_->knots().front() << ", " << dens_->knots().back() << "]";
    return os.str();
}

// ---------------------------------------------------------------------------
// FragmentationKernel

FragmentationKernel FragmentationKernel::self_similar(KernelProfile k0) {
    FragmentationKernel k;
    k.self_similar_ = true;
    k.k0_ = std::move(k0);
    return k;
}

FragmentationKernel FragmentationKernel::general(std::function<double(double, double)> density,
                                                 double x_lo, double x_hi, std::size_t knots,
                                                 std::size_t quantiles) {
    if (!(x_lo > 0) || !(x_hi > x_lo) || knots < 2 || quantiles < 16)
        throw ModelError("kernel: bad general-kernel table parameters");
    FragmentationKernel k;
    k.self_similar_ = false;
    k.dens_ = std::move(density);
    k.knots_x_ = geometric_points(x_lo, x_hi, knots);
    k.ulevels_.resize(quantiles);
    for (std::size_t i = 0; i < quantiles; ++i)
        k.ulevels_[i] = static_cast<double>(i) / static_cast<double>(quantiles - 1);

    std::vector<double> logx(knots);
    k.knot_norm_.resize(knots);
    k.knot_quantiles_.assign(knots, std::vector<double>(quantiles));
    const std::size_t fine = 2048;
    for (std::size_t j = 0; j < knots; ++j) {
        const double x = k.knots_x_[j];
        logx[j] = std::log(x);
        // cumulative of k(x, u x) x du over ratio u in (0, 1]
        std::vector<double> uf(fine + 1), cf(fine + 1, 0.0);
        for (std::size_t i = 0; i <= fine; ++i) uf[i] = static_cast<double>(i) / fine;
        auto f = [&](double u) { return u <= 0.0 ? 0.0 : k.dens_(x, u * x) * x; };
        for (std::size_t i = 1; i <= fine; ++i)
            cf[i] = cf[i - 1] + 0.5 * (f(uf[i - 1]) + f(uf[i])) * (uf[i] - uf[i - 1]);
        const double total = cf.back();
        if (!(total > 0)) throw ModelError("kernel: zero mass at table knot");
        k.knot_norm_[j] = total;
        // invert the cumulative at the fixed levels
        std::size_t pos = 0;
        for (std::size_t q = 0; q < quantiles; ++q) {
            const double target = k.ulevels_[q] * total;
            while (pos < fine && cf[pos + 1] < target) ++pos;
            if (pos >= fine) {
                k.knot_quantiles_[j][q] = 1.0;
                continue;
            }
            const double c0 = cf[pos], c1 = cf[pos + 1];
            const double t = (c1 > c0) ? (target - c0) / (c1 - c0) : 0.0;
            k.knot_quantiles_[j][q] = uf[pos] + t * (uf[pos + 1] - uf[pos]);
        }
        k.knot_quantiles_[j][0] = 0.0;
        k.knot_quantiles_[j][quantiles - 1] = 1.0;
    }
    k.norm_interp_ = std::make_shared<Pchip>(std::move(logx), std::vector<double>(k.knot_norm_));
    return k;
}

const KernelProfile& FragmentationKernel::profile() const {
    if (!self_similar_) throw ModelError("kernel: profile() requires the self-similar form");
    return k0_;
}

double FragmentationKernel::density(double x, double y) const {
    if (!(x > 0) || y <= 0.0 || y >= x) return 0.0;
    if (self_similar_) return k0_.density(y / x) / x;
    return std::max(0.0, dens_(x, y));
}

double FragmentationKernel::normalizer(double x) const {
    if (self_similar_) return k0_.mass();
    const double lx = std::log(std::clamp(x, knots_x_.front(), knots_x_.back()));
    return (*norm_interp_)(lx);
}

double FragmentationKernel::mass_below(double x, double a) const {
    if (a <= 0.0) return 0.0;
    if (self_similar_) return k0_.cdf(std::min(1.0, a / x));
    return integrate([&](double y) { return density(x, y); }, 0.0, std::min(a, x), 1e-8);
}

std::size_t FragmentationKernel::knot_below(double x) const {
    auto it = std::upper_bound(knots_x_.begin(), knots_x_.end(), x);
    if (it == knots_x_.begin()) return 0;
    return std::min(static_cast<std::size_t>(it - knots_x_.begin()) - 1, knots_x_.size() - 2);
}

double FragmentationKernel::sample_target(double x, RngStream& rng) const {
    if (self_similar_) return x * k0_.sample_ratio(rng);
    // ratio quantile, interpolated between the bracketing knots in log x
    const double u = rng.uniform();
    const double xc = std::clamp(x, knots_x_.front(), knots_x_.back());
    const std::size_t j = knot_below(xc);
    const double t = std::clamp((std::log(xc) - std::log(knots_x_[j])) /
                                    (std::log(knots_x_[j + 1]) - std::log(knots_x_[j])),
                                0.0, 1.0);
    auto ratio_at = [&](std::size_t knot) {
        const auto& q = knot_quantiles_[knot];
        const double pos = u * static_cast<double>(q.size() - 1);
        const std::size_t i = std::min(static_cast<std::size_t>(pos), q.size() - 2);
        const double frac = pos - static_cast<double>(i);
        return q[i] + frac * (q[i + 1] - q[i]);
    };
    const double r = (1.0 - t) * ratio_at(j) + t * ratio_at(j + 1);
    return std::clamp(r, 1e-300, 1.0 - 1e-16) * x;
}

double FragmentationKernel::sup_normalizer() const {
    if (self_similar_) return k0_.mass();
    double m = 0;
    for (double v : knot_norm_) m = std::max(m, v);
    return m;
}

std::string FragmentationKernel::describe() const {
    if (self_similar_) return "self-similar, " + k0_.describe();
    std::ostringstream os;
    os << "general kernel, tables on [" << knots_x_.front() << ", " << knots_x_.back() << "]";
    return os.str();
}

// ---------------------------------------------------------------------------
// CumulativeIntegral

CumulativeIntegral::CumulativeIntegral(std::function<double(double)> f, double z_lo, double z_hi,
                                       std::size_t knots, double rel_tol)
    : f_(std::move(f)), z_lo_(z_lo), z_hi_(z_hi), rel_tol_(rel_tol) {
    if (!(z_lo > 0) || !(z_hi > z_lo) || knots < 2)
        throw ModelError("cumulative table: need 0 < lo < hi");
    knots_ = geometric_points(z_lo, z_hi, knots);
    cum_.assign(knots, 0.0);
    for (std::size_t i = 1; i < knots; ++i)
        cum_[i] = cum_[i - 1] + integrate(f_, knots_[i - 1], knots_[i], rel_tol_);
}

double CumulativeIntegral::cum_at(double z) const {
    z = std::clamp(z, z_lo_, z_hi_);
    auto it = std::upper_bound(knots_.begin(), knots_.end(), z);
    const std::size_t i =
        (it == knots_.begin()) ? 0 : std::min(static_cast<std::size_t>(it - knots_.begin()) - 1,
                                              knots_.size() - 1);
    return cum_[i] + integrate(f_, knots_[i], z, rel_tol_);
}

double CumulativeIntegral::between(double a, double b) const {
    assert(a <= b);
    if (a == b) return 0.0;
    return cum_at(b) - cum_at(a);
}

std::optional<double> CumulativeIntegral::invert_from(double x, double target) const {
    assert(target >= 0);
    const double c0 = cum_at(x);
    const double want = c0 + target;
    if (want > cum_.back()) return std::nullopt;
    auto it = std::lower_bound(cum_.begin(), cum_.end(), want);
    if (it == cum_.begin()) return knots_.front();
    const std::size_t i = static_cast<std::size_t>(it - cum_.begin()) - 1;
    // solve within [knots_[i], knots_[i+1]]
    const double base = cum_[i];
    const double lo = std::max(knots_[i], std::min(x, knots_[i + 1]));
    auto h = [&](double z) { return base + integrate(f_, knots_[i], z, rel_tol_) - want; };
    double zlo = lo, zhi = knots_[i + 1];
    if (h(zhi) < 0) return zhi;  // numerical edge: target sits at the knot
    if (h(zlo) >= 0) return zlo;
    return find_root(h, zlo, zhi, 1e-14 * zhi);
}

// ---------------------------------------------------------------------------
// CoefficientModel

CoefficientModel::CoefficientModel(GrowthRate tau, RateFunction B, FragmentationKernel kernel,
                                   double x0, QuadratureSettings quad, double mass_ceiling)
    : tau_(std::move(tau)),
      B_(std::move(B)),
      kernel_(std::move(kernel)),
      x0_(x0),
      quad_(quad),
      ceiling_(mass_ceiling) {
    if (!(x0 >= 0)) throw ModelError("model: reference mass x0 must be nonnegative");
    if (!(mass_ceiling > 0)) throw ModelError("model: mass ceiling must be positive");
    const_rates_ = B_.is_constant() && kernel_.self_similar_form();
    const double n_sup = kernel_.sup_normalizer();
    g_sup_ = B_.sup_bound() * std::max(0.0, n_sup - 1.0);
    jump_sup_ = B_.sup_bound() * n_sup;
    if (const_rates_) {
        g_inf_ = g_sup_ = B_.sup_bound() * (kernel_.profile().mass() - 1.0);
        jump_sup_ = B_.sup_bound() * kernel_.profile().mass();
    } else {
        // sampled lower envelope; honest families keep this tight
        g_inf_ = kInf;
        for (double x : geometric_points(std::max(1e-8, x0_ > 0 ? x0_ * 1e-6 : 1e-8),
                                         std::max(1.0, x0_) * 1e6, 512))
            g_inf_ = std::min(g_inf_, growth_weight(x));
    }
}

double CoefficientModel::growth_weight(double x) const {
    return B_(x) * (kernel_.normalizer(x) - 1.0);
}

double CoefficientModel::jump_rate(double x) const { return B_(x) * kernel_.normalizer(x); }

const CumulativeIntegral& CoefficientModel::inv_tau_table() const {
    if (!inv_tau_) {
        const GrowthRate tau = tau_;
        inv_tau_ = std::make_shared<CumulativeIntegral>(
            [tau](double w) { return 1.0 / tau(w); }, table_lo(), ceiling_, 2048, quad_.rel_tol);
    }
    return *inv_tau_;
}

const CumulativeIntegral& CoefficientModel::hazard_table() const {
    if (!hazard_) {
        const GrowthRate tau = tau_;
        const RateFunction B = B_;
        const FragmentationKernel k = kernel_;
        hazard_ = std::make_shared<CumulativeIntegral>(
            [tau, B, k](double w) { return B(w) * k.normalizer(w) / tau(w); }, table_lo(),
            ceiling_, 2048, quad_.rel_tol);
    }
    return *hazard_;
}

const CumulativeIntegral& CoefficientModel::weight_table() const {
    if (!weight_) {
        const GrowthRate tau = tau_;
        const RateFunction B = B_;
        const FragmentationKernel k = kernel_;
        weight_ = std::make_shared<CumulativeIntegral>(
            [tau, B, k](double w) { return B(w) * (k.normalizer(w) - 1.0) / tau(w); }, table_lo(),
            ceiling_, 2048, quad_.rel_tol);
    }
    return *weight_;
}

// ---------------------------------------------------------------------------
// Flow primitives

namespace {

// table floor for generic models: far below any mass the process visits
double generic_floor(const CoefficientModel& m) {
    const double ref = m.x0() > 0 ? m.x0() : 1.0;
    return ref * 1e-12;
}

}  // namespace

double CoefficientModel::table_lo() const { return generic_floor(*this); }

double travel_time(const CoefficientModel& m, double x, double y) {
    if (!(x >= 0) || !(y >= x)) throw ModelError("travel_time: need 0 <= x <= y");
    if (x == y) return 0.0;
    if (y > m.mass_ceiling()) throw FlowOverflow("travel_time: target beyond mass ceiling");
    if (m.tau().has_closed_flow()) {
        const double t = m.tau().closed_travel_time(x, y);
        if (t == kInf)
            throw TravelTimeDiverges("travel_time: flow cannot leave mass 0 in finite time");
        return t;
    }
    const double p0 = m.tau().exponent_at_zero();
    const auto& tab = m.inv_tau_table();
    if (x == 0) {
        if (p0 >= 1.0)
            throw TravelTimeDiverges("travel_time: flow cannot leave mass 0 in finite time");
        const GrowthRate& tau = m.tau();
        const double head =
            integrate_singular([&tau](double w) { return 1.0 / tau(w); }, 0.0, tab.lo(), 1e-10);
        return head + tab.between(tab.lo(), y);
    }
    if (x < tab.lo()) {
        const GrowthRate& tau = m.tau();
        return integrate_singular([&tau](double w) { return 1.0 / tau(w); }, x,
                                  std::min(y, tab.lo()), 1e-10) +
               (y > tab.lo() ? tab.between(tab.lo(), y) : 0.0);
    }
    return tab.between(x, y);
}

double flow(const CoefficientModel& m, double x, double t) {
    if (!(x >= 0) || !(t >= 0)) throw ModelError("flow: need x >= 0 and t >= 0");
    if (t == 0) return x;
    if (m.tau().has_closed_flow()) {
        const double y = m.tau().closed_flow(x, t);
        if (!(y <= m.mass_ceiling()))
            throw FlowOverflow("flow: exceeded mass ceiling " + std::to_string(m.mass_ceiling()));
        return y;
    }
    const auto& tab = m.inv_tau_table();
    double t_rem = t, start = x;
    if (x < tab.lo()) {
        const double head = travel_time(m, x, tab.lo());
        if (t <= head) {
            // invert within the head segment by bisection on travel_time
            double lo = x, hi = tab.lo();
            for (int i = 0; i < 200 && hi - lo > 1e-15 * tab.lo(); ++i) {
                const double mid = 0.5 * (lo + hi);
                (travel_time(m, x, mid) < t ? lo : hi) = mid;
            }
            return 0.5 * (lo + hi);
        }
        t_rem = t - head;
        start = tab.lo();
    }
    const auto y = tab.invert_from(start, t_rem);
    if (!y) throw FlowOverflow("flow: exceeded mass ceiling " + std::to_string(m.mass_ceiling()));
    return *y;
}

MomentValue moment(const CoefficientModel& m, double r) { return m.kernel().profile().moment(r); }

MomentTable MomentTable::build(const KernelProfile& k0, std::span<const double> rs) {
    MomentTable t;
    t.rs_.assign(rs.begin(), rs.end());
    std::sort(t.rs_.begin(), t.rs_.end());
    t.vals_.reserve(t.rs_.size());
    for (double r : t.rs_) t.vals_.push_back(k0.moment(r));
    // moments of a sub-probability on (0,1] decrease strictly in the exponent
    for (std::size_t i = 1; i < t.rs_.size(); ++i) {
        if (!t.vals_[i - 1].finite) continue;
        if (!(t.vals_[i].value < t.vals_[i - 1].value || t.rs_[i] == t.rs_[i - 1]))
            throw ModelError("moment table: moments must decrease in the exponent");
    }
    return t;
}

MomentValue MomentTable::at(double r) const {
    for (std::size_t i = 0; i < rs_.size(); ++i)
        if (rs_[i] == r) return vals_[i];
    throw ModelError("moment table: exponent was not tabulated");
}

// ---------------------------------------------------------------------------
// Validation

bool ValidationReport::all_passed() const {
    for (const auto& e : entries)
        if (e.status == CheckStatus::Fail) return false;
    return true;
}

const ValidationEntry* ValidationReport::find(const std::string& id) const {
    for (const auto& e : entries)
        if (e.id == id) return &e;
    return nullptr;
}

ValidationReport validate(const CoefficientModel& m, const ValidationOptions& opt) {
    ValidationReport rep;
    const double ref = m.x0() > 0 ? m.x0() : 1.0;
    const auto xs = geometric_points(ref * opt.x_probe_lo, ref * opt.x_probe_hi, opt.samples);

    {  // tau positive on the probe grid
        ValidationEntry e{"tau-positive", CheckStatus::Pass, kInf, true, ""};
        for (double x : xs) {
            const double v = m.tau()(x);
            e.margin = std::min(e.margin, v);
            if (!(v > 0)) {
                e.status = CheckStatus::Fail;
                e.note = "tau <= 0 near x = " + std::to_string(x);
                break;
            }
        }
        rep.entries.push_back(std::move(e));
    }

    {  // B, N and the jump rate bounded
        ValidationEntry e{"rates-bounded", CheckStatus::Pass, 0.0, false, ""};
        const double bs = m.B().sup_bound();
        const double ns = m.kernel().sup_normalizer();
        e.margin = bs * ns;
        e.note = "sup B = " + std::to_string(bs) + ", sup N = " + std::to_string(ns);
        if (!std::isfinite(bs * ns)) e.status = CheckStatus::Fail;
        rep.entries.push_back(std::move(e));
    }

    {  // N >= 1 (a split produces at least one fragment on average)
        ValidationEntry e{"kernel-mass", CheckStatus::Pass, kInf, true, ""};
        for (double x : xs) {
            const double n = m.kernel().normalizer(x);
            e.margin = std::min(e.margin, n - 1.0);
            if (n < 1.0 - 1e-9) {
                e.status = CheckStatus::Fail;
                e.note = "N(x) < 1 near x = " + std::to_string(x);
                break;
            }
        }
        rep.entries.push_back(std::move(e));
    }

    {  // finite entry time from mass 0 (integral of 1/tau at the origin)
        ValidationEntry e{"entry-from-zero", CheckStatus::Pass, 0.0, false, ""};
        const double p0 = m.tau().exponent_at_zero();
        if (p0 >= 1.0) {
            e.status = CheckStatus::Fail;
            e.note = "tau ~ x^" + std::to_string(p0) + " at 0: entry time diverges";
        } else {
            try {
                e.margin = travel_time(m, 0.0, ref);
                e.note = "entry time to x0 = " + std::to_string(e.margin);
            } catch (const ModelError&) {
                e.status = CheckStatus::Fail;
            }
        }
        rep.entries.push_back(std::move(e));
    }

    {  // no finite-time blow-up (integral of 1/tau at infinity diverges)
        ValidationEntry e{"no-blow-up", CheckStatus::Pass, 0.0, false, ""};
        const double pinf = m.tau().exponent_at_inf();
        if (pinf > 1.0) {
            e.status = CheckStatus::Fail;
            e.note = "tau ~ x^" + std::to_string(pinf) + " at infinity: flow explodes";
        } else if (pinf == 1.0) {
            e.note = "tau linear at infinity: exponential flow, no blow-up";
        }
        e.margin = 1.0 - pinf;
        rep.entries.push_back(std::move(e));
    }

    {  // neighbourhoods below the start are reachable by one jump
        ValidationEntry e{"downward-reach", CheckStatus::Pass, 0.0, true, ""};
        const double beta = ref * 2.0;
        const double lo_cap = m.kernel().self_similar_form()
                                  ? m.kernel().profile().support_lo() * beta
                                  : 0.0;
        const double alpha = std::max(lo_cap, ref * 0.25);
        const double mass = m.kernel().mass_below(beta, ref) - m.kernel().mass_below(beta, alpha);
        e.margin = mass;
        e.note = "one-jump mass into (" + std::to_string(alpha) + ", " + std::to_string(ref) +
                 ") from " + std::to_string(beta);
        if (!(mass > 0)) e.status = m.B().sup_bound() == 0 ? CheckStatus::Inconclusive
                                                           : CheckStatus::Fail;
        rep.entries.push_back(std::move(e));
    }

    {  // jump mass into any compact set vanishes at infinity
        ValidationEntry e{"compact-jump-decay", CheckStatus::Pass, 0.0, true, ""};
        const double a = ref * 0.1, b = ref * 10.0;  // representative compact set
        double prev = kInf;
        bool monotone_tail = true;
        double last = 0.0;
        for (double x : geometric_points(b * 10, ref * opt.x_probe_hi, 16)) {
            const double v = m.B()(x) * (m.kernel().mass_below(x, b) - m.kernel().mass_below(x, a));
            if (v > prev * (1.0 + 1e-9)) monotone_tail = false;
            prev = v;
            last = v;
        }
        e.margin = -last;
        e.note = "B(x) * k(x, compact) at the probe ceiling = " + std::to_string(last);
        if (last > 1e-6 * std::max(1.0, m.jump_rate_sup()))
            e.status = monotone_tail ? CheckStatus::Inconclusive : CheckStatus::Fail;
        rep.entries.push_back(std::move(e));
    }

    return rep;
}

}  // namespace gf
