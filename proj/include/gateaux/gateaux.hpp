#pragma once

// Finite-difference (empirical) Gateaux derivatives and one-step estimators.

#include "gateaux/functionals.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gateaux {

enum class SchemeKind { Forward, Central };

/// Forward: (Psi(P_eps) - Psi(P)) / eps. Central: (Psi(P_eps) - Psi(P_-eps)) / (2 eps),
/// where P_-eps continues the mixture to negative weights.
struct DiffScheme {
    SchemeKind kind = SchemeKind::Forward;
    double eps = 1e-3;

    static DiffScheme forward(double eps) { return {SchemeKind::Forward, eps}; }
    static DiffScheme central(double eps) { return {SchemeKind::Central, eps}; }
    std::string name() const { return kind == SchemeKind::Forward ? "forward" : "central"; }
    static SchemeKind parse(const std::string& name);
};

/// Below this the difference quotient is dominated by rounding.
inline constexpr double kMinEps = 1e-12;

/// Throws InvalidParameter unless kMinEps <= eps < 1.
void validate_eps(double eps);

struct PerturbationSettings {
    double lambda = 0.05;
    Kernel x_kernel{KernelFamily::Uniform};
    Kernel y_kernel{KernelFamily::Uniform};
};

/// Perturbation direction toward `o`: an exact atom for discrete bases, a
/// smoothed delta with bandwidth lambda otherwise.
Direction direction_toward(const DistributionView& base, const Observation& o, const PerturbationSettings& pert);

struct GateauxValue {
    double value = 0.0;
    /// Central scheme met a negative density and used the forward quotient.
    bool central_fallback = false;
    std::size_t clipped = 0;
};

/// `base_value` may carry a precomputed Psi(base) to save one evaluation.
GateauxValue empirical_gateaux(const Functional& fnl, const ViewPtr& base, const Observation& o,
                               const DiffScheme& scheme, const PerturbationSettings& pert = {},
                               std::optional<double> base_value = std::nullopt);

struct Failure {
    std::size_t index = 0;
    std::string message;
};

struct GateauxReport {
    static constexpr int kSchemaVersion = 1;

    std::vector<double> phi;  // NaN where the observation failed
    std::vector<Failure> failures;
    double plugin = 0.0;
    double one_step = 0.0;
    double eps = 0.0;
    double lambda = 0.0;
    std::string scheme;
    std::size_t clip_count = 0;
    std::size_t fallback_count = 0;
    std::vector<bool> basis_changed;  // MDP reports only

    /// Mean of phi over successful observations.
    double mean_phi() const;
    nlohmann::json to_json() const;
};

/// Share of observations that must succeed for one_step to return.
inline constexpr double kMinSuccessShare = 0.95;

/// plugin = Psi(base); one_step = plugin + mean phi over successes. Runs
/// observations on up to `threads` workers; results do not depend on it.
GateauxReport one_step(const Functional& fnl, const ViewPtr& base, const Dataset& data, const DiffScheme& scheme,
                       const PerturbationSettings& pert = {}, std::size_t threads = 1);

using SweepReference = std::function<double(const Observation& o, double eps, double lambda)>;

struct SweepResult {
    std::vector<double> eps_grid;
    std::vector<double> lambda_grid;
    std::vector<std::vector<double>> mae;  // [eps][lambda], NaN for failed cells

    /// Header `eps,lambda=<l1>,...`; one row per eps.
    std::string to_csv() const;
};

/// MAE[e][l] = mean_i |phi_{eps_e, lambda_l}(O_i) - reference(O_i)|.
SweepResult sweep(const Functional& fnl, const ViewPtr& base, const Dataset& data, const std::vector<double>& eps_grid,
                  const std::vector<double>& lambda_grid, const SweepReference& reference,
                  SchemeKind scheme = SchemeKind::Forward, Kernel x_kernel = {}, Kernel y_kernel = {},
                  std::size_t threads = 1);

}  // namespace gateaux
