#include "gf/numeric.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/roots.hpp>

#include <cassert>
#include <mutex>
#include <numeric>

namespace gf {

namespace {

double pairwise_block(const double* v, std::size_t n) {
    if (n <= 16) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += v[i];
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_block(v, half) + pairwise_block(v + half, n - half);
}

}  // namespace

double pairwise_sum(std::span<const double> v) {
    return pairwise_block(v.data(), v.size());
}

MeanStderr mean_stderr(std::span<const double> v) {
    MeanStderr r;
    r.n = v.size();
    if (r.n == 0) return r;
    r.mean = pairwise_sum(v) / static_cast<double>(r.n);
    if (r.n == 1) return r;
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double d = v[i] - r.mean;
        sq[i] = d * d;
    }
    const double var = pairwise_sum(sq) / static_cast<double>(r.n - 1);
    r.se = std::sqrt(var / static_cast<double>(r.n));
    return r;
}

MeanStderr exp_mean_stderr(std::span<const double> log_values) {
    MeanStderr r;
    r.n = log_values.size();
    if (r.n == 0) return r;
    double amax = -kInf;
    for (double a : log_values) amax = std::max(amax, a);
    if (amax == -kInf) {  // all weights are exactly zero
        return r;
    }
    std::vector<double> scaled(log_values.size());
    for (std::size_t i = 0; i < log_values.size(); ++i)
        scaled[i] = std::exp(log_values[i] - amax);
    MeanStderr s = mean_stderr(scaled);
    const double f = std::exp(amax);  // may overflow to inf; propagate honestly
    r.mean = f * s.mean;
    r.se = s.se == 0.0 ? 0.0 : f * s.se;  // avoid inf * 0 when all weights tie
    return r;
}

double integrate(const std::function<double(double)>& f, double a, double b, double rel_tol) {
    if (a == b) return 0.0;
    double err = 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 15, rel_tol,
                                                                         &err);
}

double integrate_singular(const std::function<double(double)>& f, double a, double b, double tol) {
    if (a == b) return 0.0;
    thread_local boost::math::quadrature::tanh_sinh<double> integrator;
    return integrator.integrate(f, a, b, tol);
}

double find_root(const std::function<double(double)>& f, double lo, double hi, double tol,
                 int max_iter) {
    double flo = f(lo), fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0) == (fhi > 0))
        throw std::invalid_argument("find_root: bracket does not change sign");
    std::uintmax_t iters = static_cast<std::uintmax_t>(max_iter);
    auto stop = [tol](double l, double r) { return std::fabs(r - l) <= tol; };
    auto [l, r] = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, stop, iters);
    return 0.5 * (l + r);
}

Pchip::Pchip(std::vector<double> xs, std::vector<double> ys) : x_(std::move(xs)), y_(std::move(ys)) {
    if (x_.size() != y_.size() || x_.size() < 2)
        throw std::invalid_argument("Pchip: need >= 2 knots with matching values");
    for (std::size_t i = 1; i < x_.size(); ++i)
        if (!(x_[i] > x_[i - 1])) throw std::invalid_argument("Pchip: knots must increase");

    const std::size_t n = x_.size();
    std::vector<double> h(n - 1), d(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        h[i] = x_[i + 1] - x_[i];
        d[i] = (y_[i + 1] - y_[i]) / h[i];
    }
    m_.assign(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (d[i - 1] == 0.0 || d[i] == 0.0 || (d[i - 1] > 0) != (d[i] > 0)) {
            m_[i] = 0.0;  // local extremum: flat slope keeps shape
        } else {
            const double w1 = 2.0 * h[i] + h[i - 1];
            const double w2 = h[i] + 2.0 * h[i - 1];
            m_[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
        }
    }
    // one-sided three-point endpoint slopes, clamped to preserve shape
    auto endpoint = [](double h0, double h1, double d0, double d1) {
        double m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if (m * d0 <= 0.0) return 0.0;
        if ((d0 > 0) != (d1 > 0) && std::fabs(m) > 3.0 * std::fabs(d0)) return 3.0 * d0;
        return m;
    };
    if (n == 2) {
        m_[0] = m_[1] = d[0];
    } else {
        m_[0] = endpoint(h[0], h[1], d[0], d[1]);
        m_[n - 1] = endpoint(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
    }
}

std::size_t Pchip::interval(double x) const {
    auto it = std::upper_bound(x_.begin(), x_.end(), x);
    if (it == x_.begin()) return 0;
    std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
    return std::min(i, x_.size() - 2);
}

double Pchip::operator()(double x) const {
    if (x <= x_.front()) return y_.front();
    if (x >= x_.back()) return y_.back();
    const std::size_t i = interval(x);
    const double h = x_[i + 1] - x_[i];
    const double t = (x - x_[i]) / h;
    const double t2 = t * t, t3 = t2 * t;
    const double h00 = 2 * t3 - 3 * t2 + 1;
    const double h10 = t3 - 2 * t2 + t;
    const double h01 = -2 * t3 + 3 * t2;
    const double h11 = t3 - t2;
    return h00 * y_[i] + h10 * h * m_[i] + h01 * y_[i + 1] + h11 * h * m_[i + 1];
}

double Pchip::derivative(double x) const {
    if (x <= x_.front() || x >= x_.back()) return 0.0;
    const std::size_t i = interval(x);
    const double h = x_[i + 1] - x_[i];
    const double t = (x - x_[i]) / h;
    const double t2 = t * t;
    const double dh00 = (6 * t2 - 6 * t) / h;
    const double dh10 = 3 * t2 - 4 * t + 1;
    const double dh01 = (-6 * t2 + 6 * t) / h;
    const double dh11 = 3 * t2 - 2 * t;
    return dh00 * y_[i] + dh10 * m_[i] + dh01 * y_[i + 1] + dh11 * m_[i + 1];
}

void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& body) {
    if (n == 0) return;
    if (workers <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    const unsigned w = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    std::vector<std::thread> pool;
    pool.reserve(w);
    std::exception_ptr first_error;
    std::mutex err_mx;
    const std::size_t chunk = (n + w - 1) / w;
    for (unsigned k = 0; k < w; ++k) {
        const std::size_t lo = k * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                std::lock_guard<std::mutex> g(err_mx);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::vector<double> geometric_points(double lo, double hi, std::size_t n) {
    if (!(lo > 0) || !(hi > lo) || n < 2)
        throw std::invalid_argument("geometric_points: need 0 < lo < hi and n >= 2");
    std::vector<double> p(n);
    const double step = std::log(hi / lo) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) p[i] = lo * std::exp(step * static_cast<double>(i));
    p.front() = lo;
    p.back() = hi;
    return p;
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    assert(x.size() == y.size());
    LineFit f;
    const std::size_t n = x.size();
    if (n < 2) return f;
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0) return f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = (syy == 0) ? 1.0 : (sxy * sxy) / (sxx * syy);
    return f;
}

}  // namespace gf
