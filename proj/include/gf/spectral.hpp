#pragma once

#include <Eigen/Sparse>
#include <vector>

#include "gf/coeffs.hpp"
#include "gf/grid.hpp"

namespace gf {

using Field = Eigen::VectorXd;  // per-cell density values on a Grid

/// Discretised generator A acting on test functions (node values): first-order
/// upwind transport plus cell-midpoint fragmentation exchange. The evolution
/// of densities uses the transpose. Off-diagonal entries are nonnegative by
/// construction; row sums equal the growth weight g up to quadrature error
/// (top row: minus the boundary outflow).
struct GridOperator {
    Grid grid;
    Eigen::SparseMatrix<double> matrix;  // row-major layout of A
    Eigen::VectorXd g;                   // growth weight at nodes
    double q_shift = 0.0;                // 1 + max g: resolvent shift
    double max_row_defect = 0.0;         // max |row sum - g| over non-top rows
    double top_outflow_coeff = 0.0;      // transport coefficient dropped at the top
    double max_bottom_redirect = 0.0;    // largest per-node rate of fragment mass
                                         // landing below the grid (folded into cell 0)
};

GridOperator assemble(const CoefficientModel& m, const Grid& grid);

struct EvolveResult {
    Field u;
    double mass_outflow = 0.0;  // accumulated boundary leak (density * width units)
    std::size_t steps = 0;
};

/// Implicit Euler for d/dt u = A^T u. The step is shortened if needed so the
/// implicit matrix stays an M-matrix; the result is then nonnegative for
/// nonnegative input.
EvolveResult evolve(const GridOperator& op, const Field& u0, double t, double dt);

struct EigenTriple {
    double rho = 0.0;          // leading eigenvalue of A
    Eigen::VectorXd h;         // right eigenvector (test-function side), positive
    Eigen::VectorXd nu;        // left eigenvector (density side), positive
    double resid_h = 0.0;      // ||A h - rho h|| / ||h||
    double resid_nu = 0.0;
    std::size_t iterations = 0;
};

/// Leading eigenpair via inverse power iteration on (q_shift I - A)^{-1}.
/// Normalisation: sum(nu_i h_i w_i) = 1 and sum(nu_i w_i) = 1.
/// Throws ModelError when the sparsity pattern is not strongly connected
/// (e.g. pure transport), since the Perron structure is lost.
EigenTriple leading_eigen(const GridOperator& op, double tol = 1e-11,
                          std::size_t max_iter = 100000);

struct KilledSpectral {
    double rho = 0.0;                 // leading eigenvalue of the killed generator
    Eigen::VectorXd h;                // positive on the interior nodes
    std::vector<std::size_t> nodes;   // indices of grid nodes inside (a, b)
};

/// Restriction of the generator to grid nodes inside (a, b) with absorption
/// outside: transport absorbs at b, jumps below a kill the path. Leading
/// eigenvalue is a certified lower proxy for the full one; nested intervals
/// give strictly increasing values.
KilledSpectral killed_spectral(const CoefficientModel& m, double a, double b, const Grid& grid);

struct RateFit {
    double beta = 0.0;  // fitted decay rate of the distance to the profile
    double r2 = 0.0;
    bool no_decay = false;
};

/// Fit of log L1-distance between e^{-rho t} u_t (renormalised) and the
/// stationary profile against t.
RateFit convergence_rate(const std::vector<std::pair<double, Field>>& snapshots,
                         const Field& profile, const Grid& grid);

}  // namespace gf
