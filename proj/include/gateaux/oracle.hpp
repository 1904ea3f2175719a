#pragma once

// Analytic influence functions and brute-force derivatives used as ground truth.

#include "gateaux/functionals.hpp"
#include "gateaux/mdp.hpp"

#include <functional>
#include <memory>

namespace gateaux {

/// Forward-mode dual number: value + derivative * t.
struct Dual {
    double v = 0.0;
    double d = 0.0;

    friend Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
    friend Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
    friend Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
    friend Dual operator/(Dual a, Dual b) { return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)}; }
    Dual& operator+=(Dual b) { return *this = *this + b; }
};

struct Nuisances {
    enum class Source { TrueDgp, Induced };

    std::function<double(std::span<const double>)> mu;  // E[Y | A = arm, X = x]
    std::function<double(std::span<const double>)> e;   // P(A = arm | X = x), clipped into [floor, 1]
    Source source = Source::TrueDgp;
    int arm = 1;
};

/// Exact conditional mean and propensity of a discrete distribution.
Nuisances true_nuisances(std::shared_ptr<const DiscreteDistribution> dist, int arm = 1, double overlap_floor = 1e-4);
/// Nuisances induced by a view through induced_regression / induced_propensity.
Nuisances induced_nuisances(ViewPtr view, int arm = 1, double overlap_floor = 1e-4);

/// 1{A = arm} / e(X) (Y - mu(X)) + mu(X) - psi.
double aipw_score(const Nuisances& nuis, double psi, const Observation& o);

/// d/d eps Psi((1 - eps) P + eps delta_o) at eps = 0 for the mean potential
/// outcome (regime of length 1) or a static regime. Atoms of P use dual
/// numbers on an exhaustive sum over covariate histories; an atom outside the
/// support falls back to a long-double central difference at eps = 1e-7.
double exact_derivative_discrete(std::span<const int> regime, const DiscreteDistribution& dist, const Observation& o);

/// Black-box version for arbitrary functionals: central difference at eps = 1e-7.
double exact_derivative_discrete(const Functional& fnl, std::shared_ptr<const DiscreteDistribution> dist,
                                 const Observation& o);

/// Efficient influence function of a static regime value on a discrete
/// distribution, evaluated with the unperturbed conditionals:
/// Q_0 - Psi + sum_t W_t (V_{t+1} - Q_t).
double dtr_eif(const DiscreteDistribution& dist, std::span<const int> regime, const Observation& o);

struct MdpInfluence {
    double initial = 0.0;     // (1 - gamma) (V(s) - mu0'V)
    double transition = 0.0;  // mu(s, a) / d(s, a) * gamma (V(s') - (P V)(s, a))
    double total() const { return initial + transition; }
};

/// Closed-form derivative of the LP policy value toward (s, a, s'). Without
/// extra constraints (1 - gamma) mu0'V = Psi and the transition term is the
/// Bellman residual mu/d (r + gamma V(s') - V(s)) on the optimal support.
MdpInfluence mdp_influence_parts(const LPSolution& sol, const TabularMDP& mdp, const Triple& o);
double mdp_influence(const LPSolution& sol, const TabularMDP& mdp, const Triple& o);

}  // namespace gateaux
