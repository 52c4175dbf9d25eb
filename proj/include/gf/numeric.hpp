#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gf {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Deterministic pairwise summation. Used for every Monte Carlo reduction so
/// that results do not depend on worker count or accumulation order.
double pairwise_sum(std::span<const double> v);

struct MeanStderr {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

/// Sample mean and standard error via pairwise sums.
MeanStderr mean_stderr(std::span<const double> v);

/// Mean of exp(a_i) computed in a scaled way so that very large exponents
/// (small q in the Laplace transform) do not overflow intermediate sums.
/// Returns {mean, se}; mean may be +inf if even the scaled value overflows.
MeanStderr exp_mean_stderr(std::span<const double> log_values);

// ---------------------------------------------------------------------------
// Quadrature (thin wrappers around Boost.Math)

/// Adaptive Gauss-Kronrod on [a, b]; integrand must be finite on the open
/// interval.
double integrate(const std::function<double(double)>& f, double a, double b,
                 double rel_tol = 1e-10);

/// tanh-sinh quadrature; tolerates integrable endpoint singularities
/// (e.g. z^{-p} with p < 1 at the lower end).
double integrate_singular(const std::function<double(double)>& f, double a, double b,
                          double tol = 1e-10);

// ---------------------------------------------------------------------------
// Root finding

/// TOMS748 on a sign-changing bracket [lo, hi].
double find_root(const std::function<double(double)>& f, double lo, double hi,
                 double tol = 1e-12, int max_iter = 200);

// ---------------------------------------------------------------------------
// Monotone cubic interpolation (Fritsch-Carlson / PCHIP)

/// Shape-preserving C1 interpolant. Monotone data yields a monotone
/// interpolant; general data is interpolated without overshoot between knots.
/// Evaluation outside the knot range clamps to the end values.
class Pchip {
public:
    Pchip() = default;
    Pchip(std::vector<double> xs, std::vector<double> ys);

    double operator()(double x) const;
    double derivative(double x) const;

    const std::vector<double>& knots() const { return x_; }
    const std::vector<double>& values() const { return y_; }
    bool empty() const { return x_.empty(); }

private:
    std::size_t interval(double x) const;
    std::vector<double> x_, y_, m_;  // knots, values, knot slopes
};

// ---------------------------------------------------------------------------
// Parallel loop

/// Runs body(i) for i in [0, n) split into contiguous blocks over `workers`
/// threads. Each index must write only its own slots; combined with the
/// per-path RNG stream contract this makes results independent of the worker
/// count.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& body);

// ---------------------------------------------------------------------------
// Misc

inline bool nearly_equal(double a, double b, double rel = 1e-12, double abs = 1e-300) {
    return std::fabs(a - b) <= std::max(abs, rel * std::max(std::fabs(a), std::fabs(b)));
}

std::vector<double> geometric_points(double lo, double hi, std::size_t n);

/// Least-squares line fit; returns {slope, intercept, r2}.
struct LineFit {
    double slope = 0.0, intercept = 0.0, r2 = 0.0;
};
LineFit fit_line(std::span<const double> x, std::span<const double> y);

}  // namespace gf
