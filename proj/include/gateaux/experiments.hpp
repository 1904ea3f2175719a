#pragma once

// Data-generating processes, the Monte Carlo uniform-kernel derivative
// evaluator and the sweep / comparison experiment drivers.

#include "gateaux/gateaux.hpp"
#include "gateaux/mdp.hpp"

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace gateaux {

// ---------------------------------------------------------------- DGPs

enum class PropensityMode { LogisticSin, RawSinClipped };

PropensityMode parse_propensity_mode(const std::string& s);
std::string propensity_mode_name(PropensityMode m);

struct PiecewiseSpec {
    PropensityMode mode = PropensityMode::LogisticSin;
    double noise_sd = 1.0;
};

/// E[Y | A = a, X = x] of the piecewise-linear design on [0, 1].
double piecewise_mean(int a, double x);
/// P(A = 1 | X = x): 1 / (1 + exp(-sin(20x))) or sin(20x) + 0.5 clipped to [0.05, 0.95].
double piecewise_propensity(double x, PropensityMode mode);
/// E[Y(arm)] by exact integration of the piecewise mean (2.125 for arm 1, 0 for arm 0).
double piecewise_truth(int arm = 1);

struct DgpResult {
    Dataset data;
    double truth = 0.0;
};

/// X ~ U[0, 1], A ~ Bern(e(X)), Y = mean + N(0, noise_sd^2).
DgpResult dgp_piecewise(std::size_t n, std::uint64_t seed, const PiecewiseSpec& spec = {});

/// Uniform distribution on (X, A, Y) in {0, 1}^3.
std::shared_ptr<const DiscreteDistribution> discrete_cube();
/// Balanced sample of the cube: every atom appears n / 8 times (n rounded up to a multiple of 8).
Dataset discrete_cube_data(std::size_t n);

/// Random distribution on X in {0, 1, 2}, A in {0, 1}, Y in {-1, 0.5, 2}; atom
/// probabilities are an even mix of a Dirichlet(1) draw and the uniform weights.
std::shared_ptr<const DiscreteDistribution> random_tabulated(std::uint64_t seed);

/// T-stage binary covariates and treatments with tabulated conditionals in
/// [0.2, 0.8] and a binary outcome in {0, 1}.
std::shared_ptr<const DiscreteDistribution> dtr_discrete(std::size_t T, std::uint64_t seed);

/// Random dense MDP: transition rows, mu0 and d mix a Dirichlet(1) draw with
/// the uniform vector, rewards are U[0, 1].
TabularMDP random_mdp(std::size_t nS, std::size_t nA, std::uint64_t seed, double gamma = 0.9);

/// Draws n triples from d(s, a) P(s' | s, a).
std::vector<Triple> sample_triples(const TabularMDP& mdp, std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------- rate schedule

struct RateSchedule {
    double eps = 0.0;
    double lambda = 0.0;
};

/// lambda = 0.05 (n / 500)^(-1 / (2 beta)); eps = n^-(max(r_mu, r_e) + delta) lambda^(d / 2).
RateSchedule rate_schedule(std::size_t n, std::size_t d, double beta = 3.0, double r_mu = 0.25, double r_e = 0.25,
                           double delta = 0.5);

// ---------------------------------------------------------------- Monte Carlo derivative

struct McPhi {
    double value = 0.0;
    double std_error = 0.0;
    double smoothed_regression = 0.0;  // mean of the perturbed-regression term
    double correction = 0.0;           // mean of the residual-correction term
    double plugin = 0.0;
    std::size_t clipped = 0;
};

/// Monte Carlo evaluation of the eps-difference quotient of the mean potential
/// outcome for a uniform smoothed delta at `o`:
///   (1 - eps) mean_k p(x_k) 1{a_o = arm} (y_o - mu(x_k)) / p_eps(arm, x_k)
///   + mean_k mu_eps(x_k) - Psi(base),   x_k ~ smoothed delta around x_o.
/// Draws come from a stream fixed by `seed`, so repeated calls share them.
McPhi mc_phi_uniform(const ViewPtr& base, const Observation& o, double eps, double lambda, std::size_t n_mc,
                     std::uint64_t seed, int arm = 1, const IntegratorSettings& integ = {});

// ---------------------------------------------------------------- experiments

struct SweepConfig {
    std::string dgp = "piecewise";  // piecewise | discrete-cube
    std::size_t n = 500;
    std::uint64_t seed = 1;
    double h = 0.05;
    Kernel kernel{KernelFamily::Uniform};
    Kernel x_kernel{KernelFamily::Uniform};
    Kernel y_kernel{KernelFamily::Uniform};
    PiecewiseSpec piecewise;
    int arm = 1;
    std::vector<double> eps_grid{1e-1, 1e-2, 1e-3, 1e-4, 1e-5};
    std::vector<double> lambda_grid{0.2, 0.1, 0.05};
    SchemeKind scheme = SchemeKind::Forward;
    IntegratorSettings integ;
    std::size_t threads = 1;

    static SweepConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct SweepOutput {
    SweepResult result;
    double plugin = 0.0;
    std::size_t n = 0;
};

/// MAE grid against the AIPW score with nuisances induced by the unperturbed
/// base (discrete bases: the exact derivative).
SweepOutput run_sweep_experiment(const SweepConfig& cfg);

struct CompareConfig {
    std::vector<std::size_t> n_list{250, 500, 1000, 2000};
    std::size_t n_seeds = 100;
    std::uint64_t seed = 1;
    /// Non-positive h / eps select the rate schedule. A non-positive lambda
    /// selects h / 2: at lambda = h with matching kernels the averaged smoothed
    /// deltas rebuild the KDE itself and the one-step correction cancels.
    double h = 0.0;
    double lambda = 0.0;
    double eps = 0.0;
    double beta = 3.0;
    double r_mu = 0.25;
    double r_e = 0.25;
    double delta = 0.5;
    Kernel kernel{KernelFamily::Uniform};
    PiecewiseSpec piecewise;
    double ipw_clip = 0.01;
    std::vector<std::string> estimators{"dm", "ipw", "one_step"};  // also: aipw_oracle, truth
    IntegratorSettings integ;
    std::size_t threads = 1;

    static CompareConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct CompareRow {
    std::string estimator;
    std::size_t n = 0;
    double mean_abs_error = 0.0;
    double rmse = 0.0;
    double mean_estimate = 0.0;
    std::size_t ok = 0;
    std::size_t failed = 0;
};

struct CompareOutput {
    std::vector<CompareRow> rows;
    /// errors[estimator][n index][seed], NaN for failures.
    std::vector<std::vector<std::vector<double>>> errors;
    double truth = 0.0;

    std::string to_csv() const;
    const CompareRow& row(const std::string& estimator, std::size_t n) const;
};

CompareOutput run_comparison_experiment(const CompareConfig& cfg);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace gateaux
