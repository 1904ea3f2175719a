#pragma once

// Plug-in statistical functionals evaluated against any DistributionView.

#include "gateaux/measures.hpp"

#include <json.hpp>

#include <functional>
#include <span>
#include <vector>

namespace gateaux {

enum class IntegratorKind { Auto, MonteCarlo, Quadrature };

struct IntegratorSettings {
    /// Auto: quadrature for a single stage with a scalar covariate, Monte Carlo otherwise.
    IntegratorKind kind = IntegratorKind::Auto;
    std::size_t mc_samples = 2000;
    std::uint64_t seed = 0;
    /// Gauss-Legendre nodes per panel for smooth integrands (2..8).
    int gauss_nodes = 4;
    /// Integrate y p(y, a, x) over y numerically instead of using the moment query.
    bool raw_outcome_integral = false;
    double overlap_floor = 1e-4;
};

/// {"kind":"auto|mc|quadrature","mc_samples":..,"seed":..,"gauss_nodes":..,
/// "raw_outcome_integral":..,"overlap_floor":..}; every key optional, unknown keys throw.
IntegratorSettings integrator_from_json(const nlohmann::json& j);
nlohmann::json integrator_to_json(const IntegratorSettings& integ);

struct Evaluation {
    double value = 0.0;
    /// Number of integrand evaluations whose denominator hit the overlap floor.
    std::size_t clipped = 0;
};

struct InducedValue {
    double value = 0.0;
    bool clipped = false;
};

/// Psi = E_{p(x)}[ E[Y | A = arm, X] ]. Discrete views are summed exactly (a
/// zero-mass arm throws DegenerateError); continuous views are integrated.
Evaluation mean_potential_outcome(const DistributionView& dist, int arm, const IntegratorSettings& integ = {});

/// integral y p(y, a, x) dy / p(a, x) for a single-stage view, denominator floored.
InducedValue induced_regression(const DistributionView& dist, int arm, std::span<const double> x,
                                double overlap_floor = 1e-4);
/// p(a, x) / p(x), clipped into [floor, 1].
InducedValue induced_propensity(const DistributionView& dist, int arm, std::span<const double> x,
                                double overlap_floor = 1e-4);

/// g-formula value of the static regime `regime` (length T = number of stages).
Evaluation dtr_g_formula(const DistributionView& dist, std::span<const int> regime,
                         const IntegratorSettings& integ = {});

using Functional = std::function<Evaluation(const DistributionView&)>;

struct FunctionalSpec {
    enum class Kind { MeanPotentialOutcome, DtrValue };
    Kind kind = Kind::MeanPotentialOutcome;
    int arm = 1;
    std::vector<int> regime;
    IntegratorSettings integ;

    std::size_t horizon() const { return kind == Kind::DtrValue ? regime.size() : 1; }

    /// {"kind":"mpo","arm":1} or {"kind":"dtr","regime":[1,1],"T":2}; unknown keys throw.
    static FunctionalSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

Functional make_functional(const FunctionalSpec& spec);

}  // namespace gateaux
