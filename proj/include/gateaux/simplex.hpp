#pragma once

// Dense two-phase tableau simplex for small standard-form programs.

#include <Eigen/Dense>

#include <vector>

namespace gateaux {

/// maximize c'x subject to A x = b, x >= 0.
struct LinearProgram {
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    Eigen::VectorXd c;
};

struct SimplexResult {
    Eigen::VectorXd x;
    Eigen::VectorXd y;                // row duals, A' y >= c on the optimum
    std::vector<std::size_t> basis;   // sorted; indices >= cols(A) are leftover artificials
    double objective = 0.0;
    bool degenerate = false;
    std::size_t iterations = 0;
};

/// Bland's rule in both phases, so the method cannot cycle. The final basis is
/// re-solved with an LU factorization to remove tableau round-off. Throws
/// InfeasibleError or NumericError (unbounded / iteration cap).
SimplexResult simplex_maximize(const LinearProgram& lp, double tol = 1e-11);

}  // namespace gateaux
