#include "gf/spectral.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cassert>
#include <cmath>

namespace gf {

namespace {

using Triplet = Eigen::Triplet<double>;

/// Kernel exchange entries for one source node. Midpoint rule over whole
/// cells strictly below, plus the partial cell between its lower bound and the
/// node itself (kept on the diagonal), plus everything below the grid floor
/// redirected to `redirect_col` (or dropped when negative).
void kernel_row(const CoefficientModel& m, const Grid& grid, std::size_t i, int redirect_col,
                std::vector<Triplet>& out) {
    const double x = grid.nodes[i];
    const double Bi = m.B()(x);
    if (Bi <= 0.0) return;
    const auto& k = m.kernel();
    for (std::size_t j = 0; j < i; ++j) {
        const double v = k.density(x, grid.nodes[j]);
        if (v > 0.0) out.emplace_back(static_cast<int>(i), static_cast<int>(j),
                                      Bi * v * grid.widths[j]);
    }
    // partial own-cell mass [bound_i, x): fragments that stay in cell i
    const double self_mass = k.mass_below(x, x) - k.mass_below(x, grid.bounds[i]);
    if (self_mass > 0.0)
        out.emplace_back(static_cast<int>(i), static_cast<int>(i), Bi * self_mass);
    if (redirect_col >= 0) {
        const double below = k.mass_below(x, grid.bounds.front());
        if (below > 0.0) out.emplace_back(static_cast<int>(i), redirect_col, Bi * below);
    }
    // loss term of the growth-fragmentation operator: -B f(x)
    out.emplace_back(static_cast<int>(i), static_cast<int>(i), -Bi);
}

/// Strong connectivity (Kosaraju) of the off-diagonal sparsity pattern.
bool strongly_connected(const Eigen::SparseMatrix<double>& a) {
    const int n = static_cast<int>(a.rows());
    if (n <= 1) return true;
    std::vector<std::vector<int>> fwd(n), bwd(n);
    for (int col = 0; col < a.outerSize(); ++col) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(a, col); it; ++it) {
            if (it.row() == it.col() || it.value() == 0.0) continue;
            fwd[it.row()].push_back(static_cast<int>(it.col()));
            bwd[it.col()].push_back(static_cast<int>(it.row()));
        }
    }
    auto reach_all = [n](const std::vector<std::vector<int>>& adj) {
        std::vector<char> seen(n, 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        int count = 1;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int w : adj[v])
                if (!seen[w]) {
                    seen[w] = 1;
                    ++count;
                    stack.push_back(w);
                }
        }
        return count == n;
    };
    return reach_all(fwd) && reach_all(bwd);
}

struct PowerResult {
    double rho;
    Eigen::VectorXd v;
    double resid;
    std::size_t iters;
};

/// Inverse power iteration for the leading eigenvalue of a Metzler matrix A,
/// through the nonnegative resolvent (q I - A)^{-1}. `transpose` selects the
/// left eigenvector.
PowerResult resolvent_power(const Eigen::SparseMatrix<double>& a, double q, bool transpose,
                            double tol, std::size_t max_iter) {
    const int n = static_cast<int>(a.rows());
    Eigen::SparseMatrix<double> shifted(n, n);
    {
        Eigen::SparseMatrix<double> id(n, n);
        id.setIdentity();
        shifted = q * id - a;
        if (transpose) shifted = Eigen::SparseMatrix<double>(shifted.transpose());
    }
    shifted.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.analyzePattern(shifted);
    lu.factorize(shifted);
    if (lu.info() != Eigen::Success)
        throw ModelError("spectral: resolvent factorisation failed");

    const Eigen::SparseMatrix<double> at =
        transpose ? Eigen::SparseMatrix<double>(a.transpose()) : a;

    Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
    v /= v.norm();
    double rho = 0.0, resid = kInf;
    std::size_t it = 0;
    for (; it < max_iter; ++it) {
        Eigen::VectorXd w = lu.solve(v);
        const double r = v.dot(w);
        w /= w.norm();
        rho = q - 1.0 / r;
        resid = (at * w - rho * w).norm() / w.norm();
        v = w;
        if (resid < tol * (1.0 + std::fabs(rho))) break;
    }
    // Perron vector sign: make it positive
    if (v.sum() < 0) v = -v;
    return {rho, v, resid, it + 1};
}

}  // namespace

GridOperator assemble(const CoefficientModel& m, const Grid& grid) {
    const std::size_t n = grid.size();
    if (n < 3) throw ModelError("assemble: grid too small");
    GridOperator op;
    op.grid = grid;
    op.g.resize(static_cast<int>(n));

    std::vector<Triplet> trips;
    trips.reserve(n * (n / 2 + 4));
    for (std::size_t i = 0; i < n; ++i) {
        const double x = grid.nodes[i];
        op.g[static_cast<int>(i)] = m.growth_weight(x);
        const double tau = m.tau()(x);
        if (i + 1 < n) {
            const double dx = grid.nodes[i + 1] - grid.nodes[i];
            trips.emplace_back(static_cast<int>(i), static_cast<int>(i + 1), tau / dx);
            trips.emplace_back(static_cast<int>(i), static_cast<int>(i), -tau / dx);
        } else {
            // absorbing ghost outflow at the top, previous spacing
            const double dx = grid.nodes[i] - grid.nodes[i - 1];
            op.top_outflow_coeff = tau / dx;
            trips.emplace_back(static_cast<int>(i), static_cast<int>(i), -tau / dx);
        }
        kernel_row(m, grid, i, 0, trips);
        const double Bi = m.B()(x);
        if (Bi > 0.0)
            op.max_bottom_redirect = std::max(
                op.max_bottom_redirect, Bi * m.kernel().mass_below(x, grid.bounds.front()));
    }
    op.matrix.resize(static_cast<int>(n), static_cast<int>(n));
    op.matrix.setFromTriplets(trips.begin(), trips.end());
    op.matrix.makeCompressed();

    double gmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) gmax = std::max(gmax, op.g[static_cast<int>(i)]);
    op.q_shift = 1.0 + gmax;

    // row-sum identity A 1 = g (non-top rows); defect measures quadrature error
    const Eigen::VectorXd rowsum = op.matrix * Eigen::VectorXd::Ones(static_cast<int>(n));
    for (std::size_t i = 0; i + 1 < n; ++i)
        op.max_row_defect =
            std::max(op.max_row_defect, std::fabs(rowsum[static_cast<int>(i)] -
                                                  op.g[static_cast<int>(i)]));
    return op;
}

EvolveResult evolve(const GridOperator& op, const Field& u0, double t, double dt) {
    const int n = static_cast<int>(op.grid.size());
    if (u0.size() != n) throw ModelError("evolve: field size does not match the grid");
    if (!(t >= 0) || !(dt > 0)) throw ModelError("evolve: need t >= 0 and dt > 0");
    EvolveResult res;
    res.u = u0;
    if (t == 0) return res;

    // implicit Euler stays an M-matrix solve (positivity) when dt q_shift < 1
    double step = std::min(dt, 0.5 / op.q_shift);
    const std::size_t steps = static_cast<std::size_t>(std::ceil(t / step - 1e-12));
    step = t / static_cast<double>(steps);

    Eigen::SparseMatrix<double> at = op.matrix.transpose();
    Eigen::SparseMatrix<double> id(n, n);
    id.setIdentity();
    Eigen::SparseMatrix<double> sys = id - step * at;
    sys.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.analyzePattern(sys);
    lu.factorize(sys);
    if (lu.info() != Eigen::Success) throw ModelError("evolve: factorisation failed");

    // densities pair with test functions through cell widths, so the
    // density-side adjoint is W^-1 A^T W: advance the cell masses p = W u
    Eigen::VectorXd p(n);
    for (int i = 0; i < n; ++i) p[i] = u0[i] * op.grid.widths[static_cast<std::size_t>(i)];
    for (std::size_t s = 0; s < steps; ++s) {
        p = lu.solve(p);
        res.mass_outflow += step * op.top_outflow_coeff * p[n - 1];
    }
    for (int i = 0; i < n; ++i) res.u[i] = p[i] / op.grid.widths[static_cast<std::size_t>(i)];
    res.steps = steps;
    return res;
}

EigenTriple leading_eigen(const GridOperator& op, double tol, std::size_t max_iter) {
    if (!strongly_connected(op.matrix))
        throw ModelError("leading_eigen: operator graph is not strongly connected");
    EigenTriple e;
    const PowerResult right = resolvent_power(op.matrix, op.q_shift, false, tol, max_iter);
    const PowerResult left = resolvent_power(op.matrix, op.q_shift, true, tol, max_iter);
    e.rho = right.rho;
    e.h = right.v;
    e.resid_h = right.resid;
    e.resid_nu = left.resid;
    e.iterations = right.iters + left.iters;

    // the plain-transpose Perron vector carries cell masses: densities pair
    // with test functions through cell widths, so the density-side adjoint is
    // W^-1 A^T W and the density eigenvector is the mass vector over widths
    const int n = static_cast<int>(op.grid.size());
    e.nu = left.v;
    for (int i = 0; i < n; ++i) e.nu[i] /= op.grid.widths[static_cast<std::size_t>(i)];

    // normalise: nu integrates to 1 (cell widths), then <nu, h> = 1
    double numass = 0.0;
    for (int i = 0; i < n; ++i) numass += e.nu[i] * op.grid.widths[static_cast<std::size_t>(i)];
    if (numass <= 0) throw ModelError("leading_eigen: left eigenvector lost positivity");
    e.nu /= numass;
    double pairing = 0.0;
    for (int i = 0; i < n; ++i)
        pairing += e.nu[i] * e.h[i] * op.grid.widths[static_cast<std::size_t>(i)];
    if (pairing <= 0) throw ModelError("leading_eigen: eigenvector pairing not positive");
    e.h /= pairing;
    return e;
}

KilledSpectral killed_spectral(const CoefficientModel& m, double a, double b, const Grid& grid) {
    if (!(grid.bounds.front() <= a && a < b && b <= grid.bounds.back()))
        throw ModelError("killed_spectral: interval must lie within the grid");
    KilledSpectral out;
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (a < grid.nodes[i] && grid.nodes[i] < b) out.nodes.push_back(i);
    const std::size_t nk = out.nodes.size();
    if (nk < 3) throw ModelError("killed_spectral: fewer than 3 interior nodes");

    std::vector<int> col_of(grid.size(), -1);
    for (std::size_t j = 0; j < nk; ++j) col_of[out.nodes[j]] = static_cast<int>(j);

    std::vector<Triplet> trips;
    double gmax = 0.0;
    for (std::size_t j = 0; j < nk; ++j) {
        const std::size_t i = out.nodes[j];
        const double x = grid.nodes[i];
        gmax = std::max(gmax, m.growth_weight(x));
        const double tau = m.tau()(x);
        // transport: outflow always on the diagonal; inflow only if the next
        // node is still interior (otherwise the path is absorbed at b)
        const double dx = (i + 1 < grid.size() ? grid.nodes[i + 1] : grid.bounds.back()) -
                          grid.nodes[i];
        trips.emplace_back(static_cast<int>(j), static_cast<int>(j), -tau / dx);
        if (i + 1 < grid.size() && col_of[i + 1] >= 0)
            trips.emplace_back(static_cast<int>(j), col_of[i + 1], tau / dx);
        // fragmentation: only targets inside (a, b) survive; everything else kills
        const double Bi = m.B()(x);
        if (Bi > 0.0) {
            const auto& k = m.kernel();
            for (std::size_t jj = 0; jj < nk && out.nodes[jj] < i; ++jj) {
                const double v = k.density(x, grid.nodes[out.nodes[jj]]);
                if (v > 0.0)
                    trips.emplace_back(static_cast<int>(j), static_cast<int>(jj),
                                       Bi * v * grid.widths[out.nodes[jj]]);
            }
            const double self_mass = k.mass_below(x, x) - k.mass_below(x, grid.bounds[i]);
            if (self_mass > 0.0)
                trips.emplace_back(static_cast<int>(j), static_cast<int>(j), Bi * self_mass);
            trips.emplace_back(static_cast<int>(j), static_cast<int>(j), -Bi);
        }
    }
    Eigen::SparseMatrix<double> ak(static_cast<int>(nk), static_cast<int>(nk));
    ak.setFromTriplets(trips.begin(), trips.end());
    ak.makeCompressed();
    if (!strongly_connected(ak))
        throw ModelError("killed_spectral: restricted operator is not strongly connected");
    const PowerResult r = resolvent_power(ak, 1.0 + gmax, false, 1e-11, 100000);
    out.rho = r.rho;
    out.h = r.v;
    return out;
}

RateFit convergence_rate(const std::vector<std::pair<double, Field>>& snapshots,
                         const Field& profile, const Grid& grid) {
    RateFit fit;
    if (snapshots.size() < 2) {
        fit.no_decay = true;
        return fit;
    }
    const std::size_t n = grid.size();
    auto normalised = [&](const Field& f) {
        Field v = f;
        double mass = 0.0;
        for (std::size_t i = 0; i < n; ++i) mass += f[static_cast<int>(i)] * grid.widths[i];
        if (mass > 0) v /= mass;
        return v;
    };
    const Field p = normalised(profile);
    std::vector<double> ts, logd;
    for (const auto& [t, u] : snapshots) {
        const Field v = normalised(u);
        double d = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            d += std::fabs(v[static_cast<int>(i)] - p[static_cast<int>(i)]) * grid.widths[i];
        if (d > 1e-300) {
            ts.push_back(t);
            logd.push_back(std::log(d));
        }
    }
    if (ts.size() < 2) {  // distance already at the floor: decayed completely
        fit.beta = kInf;
        fit.r2 = 1.0;
        return fit;
    }
    const LineFit lf = fit_line(ts, logd);
    fit.beta = -lf.slope;
    fit.r2 = lf.r2;
    fit.no_decay = !(fit.beta > 0);
    return fit;
}

}  // namespace gf
