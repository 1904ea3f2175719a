#pragma once

// Tabular discounted MDPs: occupancy-measure LP, perturbations toward observed
// transitions, finite-difference policy-value derivatives and one-step estimates.

#include "gateaux/dataset_io.hpp"
#include "gateaux/gateaux.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace gateaux {

struct TabularMDP {
    std::size_t nS = 0;
    std::size_t nA = 0;
    std::vector<std::vector<std::vector<double>>> P;  // P[s][a][s']
    std::vector<std::vector<double>> r;               // r[s][a]
    double gamma = 0.9;
    std::vector<double> mu0;
    std::vector<std::vector<double>> d;               // data occupancy d[s][a]

    /// Throws InvalidInput when a stochastic or shape invariant fails.
    void validate() const;

    /// Fields nS, nA, gamma, P, r, mu0 and optional d (uniform when absent).
    static TabularMDP from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

enum class Sense { LessEqual, Equal, GreaterEqual };

struct LinearConstraint {
    std::vector<std::vector<double>> coef;  // coef[s][a] multiplies mu(s, a)
    Sense sense = Sense::LessEqual;
    double rhs = 0.0;
};

/// Extra linear restrictions on the occupancy measure.
struct LinearConstraintSet {
    std::vector<LinearConstraint> rows;

    bool empty() const noexcept { return rows.empty(); }
    void validate(std::size_t nS, std::size_t nA) const;

    /// {"constraints":[{"coef":[[...]],"sense":"<=","rhs":0.3}, ...]}
    static LinearConstraintSet from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct LPSolution {
    std::vector<double> V;                     // duals of the flow constraints
    std::vector<std::vector<double>> mu;       // optimal occupancy mu[s][a]
    std::vector<double> constraint_duals;      // one per extra constraint
    std::vector<std::size_t> basis;            // sorted basic columns (mu then slacks)
    std::vector<std::size_t> policy;           // argmax_a mu(s, a)
    double objective = 0.0;
    bool degenerate = false;
    std::size_t iterations = 0;

    nlohmann::json to_json() const;
};

/// Solves max sum mu r subject to sum_a mu(s', a) - gamma sum P(s'|s,a) mu(s,a)
/// = (1 - gamma) mu0(s'), mu >= 0 and the extra constraints, with a dense
/// two-phase simplex under Bland's rule followed by an LU refinement of the
/// final basis. Throws InfeasibleError on an empty feasible set.
LPSolution solve_policy_lp(const TabularMDP& mdp, const LinearConstraintSet& constraints = {});

struct DualityCheck {
    double primal_violation = 0.0;  // max positive reduced cost / wrong-signed dual
    double dual_violation = 0.0;    // max flow/constraint residual or negative mu
    double gap = 0.0;               // |dual objective - primal objective|
    bool ok(double tol = 1e-9) const { return primal_violation <= tol && dual_violation <= tol && gap <= tol; }
};

DualityCheck check_duality(const TabularMDP& mdp, const LPSolution& sol, const LinearConstraintSet& constraints = {});

enum class PerturbTarget { Both, InitialState, Transitions };

/// Mixes the data joint d(s,a)P(s'|s,a) with a point mass at (s, a, s_next)
/// and mu0 with a point mass at s. eps in [0, 1).
TabularMDP perturb_mdp(const TabularMDP& mdp, const Triple& o, double eps, PerturbTarget target = PerturbTarget::Both);

struct FdResult {
    double value = 0.0;
    bool basis_stable = true;
    double perturbed_objective = 0.0;
};

/// (Psi(P_eps) - Psi(P)) / eps from two LP solves. `base` may carry the
/// unperturbed solution.
FdResult fd_derivative(const TabularMDP& mdp, const Triple& o, double eps, const LinearConstraintSet& constraints = {},
                       const LPSolution* base = nullptr, PerturbTarget target = PerturbTarget::Both);

struct ValueIterationResult {
    std::vector<double> V;
    std::vector<std::size_t> policy;
    std::size_t iterations = 0;
};

/// Iterates the Bellman optimality operator until the sup-norm residual is <= tol.
ValueIterationResult value_iteration(const TabularMDP& mdp, double tol);

/// Empirical occupancy and transitions from triples; rewards, gamma and mu0
/// come from `known`. Unseen (s, a) pairs throw SupportError.
TabularMDP estimate_mdp(const std::vector<Triple>& triples, const TabularMDP& known);

/// How the initial-state part of the derivative is averaged.
///  Occupancy: each triple's full derivative is used as is.
///  InitialState: the transition part is averaged over triples, the
///  initial-state part over mu0.
enum class Weighting { InitialState, Occupancy };

/// plugin = Psi of the estimated MDP; phi per triple from fd_derivative.
GateauxReport one_step_policy_value(const TabularMDP& known, const std::vector<Triple>& triples, double eps,
                                    const LinearConstraintSet& constraints = {},
                                    Weighting weighting = Weighting::InitialState, std::size_t threads = 1);

/// Same estimator on an already-estimated MDP with explicit triple weights
/// (weights sum to 1); used for exact expectation checks.
double weighted_adjustment(const TabularMDP& mdp, const std::vector<Triple>& triples,
                           const std::vector<double>& weights, double eps, const LinearConstraintSet& constraints = {},
                           Weighting weighting = Weighting::InitialState);

}  // namespace gateaux
