#include "gateaux/experiments.hpp"

#include "gateaux/dataset_io.hpp"
#include "gateaux/json_util.hpp"
#include "gateaux/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

namespace gateaux {

namespace {

/// Draw from Dirichlet(1, ..., 1) mixed half-and-half with the uniform vector.
std::vector<double> mixed_simplex(std::size_t k, Rng& rng)
{
    std::gamma_distribution<double> g(1.0, 1.0);
    std::vector<double> w(k);
    for (auto& v : w) v = g(rng);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& v : w) v = 0.5 * v / total + 0.5 / static_cast<double>(k);
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& v : w) v /= s;
    return w;
}

/// Renormalizes so the sum is 1 to within a few ulps.
void normalize(std::vector<double>& w)
{
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& v : w) v /= s;
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

// ---------------------------------------------------------------- piecewise DGP

PropensityMode parse_propensity_mode(const std::string& s)
{
    if (s == "logistic-sin") return PropensityMode::LogisticSin;
    if (s == "raw-sin") return PropensityMode::RawSinClipped;
    throw InvalidParameter("unknown propensity mode '" + s + "' (expected logistic-sin or raw-sin)");
}

std::string propensity_mode_name(PropensityMode m)
{
    return m == PropensityMode::LogisticSin ? "logistic-sin" : "raw-sin";
}

double piecewise_mean(int a, double x)
{
    const double A = a;
    if (x < 0.25) return -5.0 * A * x + 3.0 * (2.0 * A - 1.0);
    if (x <= 0.5) return 5.0 * A * x + 3.0;
    if (x <= 0.75) return -5.0 * A * x;
    return 5.0 * A * x;
}

double piecewise_propensity(double x, PropensityMode mode)
{
    if (mode == PropensityMode::LogisticSin) return 1.0 / (1.0 + std::exp(-std::sin(20.0 * x)));
    return std::clamp(std::sin(20.0 * x) + 0.5, 0.05, 0.95);
}

double piecewise_truth(int arm)
{
    // antiderivatives of the four linear pieces on [0, .25], [.25, .5], [.5, .75], [.75, 1]
    const double A = arm;
    auto lin = [](double slope, double icpt, double lo, double hi) {
        return 0.5 * slope * (hi * hi - lo * lo) + icpt * (hi - lo);
    };
    return lin(-5.0 * A, 3.0 * (2.0 * A - 1.0), 0.0, 0.25) + lin(5.0 * A, 3.0, 0.25, 0.5) + lin(-5.0 * A, 0.0, 0.5, 0.75) +
           lin(5.0 * A, 0.0, 0.75, 1.0);
}

DgpResult dgp_piecewise(std::size_t n, std::uint64_t seed, const PiecewiseSpec& spec)
{
    if (n == 0) throw InvalidParameter("n must be at least 1");
    if (!(spec.noise_sd >= 0.0)) throw InvalidParameter("noise_sd must be nonnegative");
    Rng rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    DgpResult out;
    out.truth = piecewise_truth(1);
    out.data.layout = {1, 1};
    out.data.rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = unif(rng);
        const int a = unif(rng) < piecewise_propensity(x, spec.mode) ? 1 : 0;
        const double eps = noise(rng);
        out.data.rows.push_back({{x}, {a}, piecewise_mean(a, x) + spec.noise_sd * eps});
    }
    return out;
}

// ---------------------------------------------------------------- discrete DGPs

std::shared_ptr<const DiscreteDistribution> discrete_cube()
{
    std::vector<Observation> support;
    for (int x = 0; x < 2; ++x)
        for (int a = 0; a < 2; ++a)
            for (int y = 0; y < 2; ++y) support.push_back({{double(x)}, {a}, double(y)});
    return std::make_shared<const DiscreteDistribution>(support, std::vector<double>(8, 0.125));
}

Dataset discrete_cube_data(std::size_t n)
{
    const std::size_t reps = std::max<std::size_t>(1, (n + 7) / 8);
    Dataset data;
    data.layout = {1, 1};
    const auto cube = discrete_cube();
    for (const auto& at : *cube->atoms())
        for (std::size_t r = 0; r < reps; ++r) data.rows.push_back(at.obs);
    return data;
}

std::shared_ptr<const DiscreteDistribution> random_tabulated(std::uint64_t seed)
{
    Rng rng(mix_seed(seed, 0x7AB));
    const double ys[3] = {-1.0, 0.5, 2.0};
    std::vector<Observation> support;
    for (int x = 0; x < 3; ++x)
        for (int a = 0; a < 2; ++a)
            for (double y : ys) support.push_back({{double(x)}, {a}, y});
    auto w = mixed_simplex(support.size(), rng);
    return std::make_shared<const DiscreteDistribution>(support, w);
}

std::shared_ptr<const DiscreteDistribution> dtr_discrete(std::size_t T, std::uint64_t seed)
{
    if (T == 0) throw InvalidParameter("horizon T must be at least 1");
    if (T > 8) throw InvalidParameter("discrete DTR design supports T <= 8");
    Rng rng(mix_seed(seed, 0xD7A));
    std::uniform_real_distribution<double> u(0.2, 0.8);
    // the history prefix is a node of a binary tree; each node owns one conditional
    const std::size_t cells = std::size_t{1} << (2 * T + 1);
    std::vector<double> cond(2 * cells);
    for (auto& v : cond) v = u(rng);
    std::vector<Observation> support;
    std::vector<double> probs;
    for (std::size_t code = 0; code < cells; ++code) {
        Observation o;
        double p = 1.0;
        std::size_t node = 1;
        for (std::size_t t = 0; t < T; ++t) {
            const int x = static_cast<int>((code >> (2 * t)) & 1U);
            const int a = static_cast<int>((code >> (2 * t + 1)) & 1U);
            p *= x ? cond[node] : 1.0 - cond[node];
            node = node * 2 + static_cast<std::size_t>(x);
            p *= a ? cond[node] : 1.0 - cond[node];
            node = node * 2 + static_cast<std::size_t>(a);
            o.x.push_back(x);
            o.a.push_back(a);
        }
        const int y = static_cast<int>((code >> (2 * T)) & 1U);
        p *= y ? cond[node] : 1.0 - cond[node];
        o.y = y;
        support.push_back(o);
        probs.push_back(p);
    }
    normalize(probs);
    return std::make_shared<const DiscreteDistribution>(support, probs);
}

TabularMDP random_mdp(std::size_t nS, std::size_t nA, std::uint64_t seed, double gamma)
{
    if (nS == 0 || nA == 0) throw InvalidParameter("MDP needs states and actions");
    Rng rng(mix_seed(seed, 0x3D9));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    TabularMDP m;
    m.nS = nS;
    m.nA = nA;
    m.gamma = gamma;
    m.P.assign(nS, std::vector<std::vector<double>>(nA));
    m.r.assign(nS, std::vector<double>(nA));
    for (std::size_t s = 0; s < nS; ++s)
        for (std::size_t a = 0; a < nA; ++a) {
            m.P[s][a] = mixed_simplex(nS, rng);
            m.r[s][a] = u(rng);
        }
    m.mu0 = mixed_simplex(nS, rng);
    const auto flat = mixed_simplex(nS * nA, rng);
    m.d.assign(nS, std::vector<double>(nA));
    for (std::size_t s = 0; s < nS; ++s)
        for (std::size_t a = 0; a < nA; ++a) m.d[s][a] = flat[s * nA + a];
    m.validate();
    return m;
}

std::vector<Triple> sample_triples(const TabularMDP& mdp, std::size_t n, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<double> flat;
    for (const auto& row : mdp.d) flat.insert(flat.end(), row.begin(), row.end());
    std::discrete_distribution<std::size_t> pick(flat.begin(), flat.end());
    std::vector<Triple> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = pick(rng);
        const std::size_t s = k / mdp.nA, a = k % mdp.nA;
        std::discrete_distribution<std::size_t> next(mdp.P[s][a].begin(), mdp.P[s][a].end());
        out.push_back({static_cast<int>(s), static_cast<int>(a), static_cast<int>(next(rng))});
    }
    return out;
}

// ---------------------------------------------------------------- rate schedule

RateSchedule rate_schedule(std::size_t n, std::size_t d, double beta, double r_mu, double r_e, double delta)
{
    if (n == 0 || d == 0) throw InvalidParameter("rate schedule needs n >= 1 and d >= 1");
    if (!(beta > 0.0 && r_mu > 0.0 && r_e > 0.0 && delta > 0.0)) throw InvalidParameter("rate exponents must be positive");
    const double nn = static_cast<double>(n);
    RateSchedule rs;
    rs.lambda = 0.05 * std::pow(nn / 500.0, -1.0 / (2.0 * beta));
    rs.eps = std::pow(nn, -(std::max(r_mu, r_e) + delta)) * std::pow(rs.lambda, static_cast<double>(d) / 2.0);
    return rs;
}

// ---------------------------------------------------------------- Monte Carlo derivative

McPhi mc_phi_uniform(const ViewPtr& base, const Observation& o, double eps, double lambda, std::size_t n_mc,
                     std::uint64_t seed, int arm, const IntegratorSettings& integ)
{
    if (n_mc == 0) throw InvalidParameter("n_mc must be at least 1");
    if (!(eps >= 0.0 && eps < 1.0)) throw InvalidParameter("eps must lie in [0, 1)");
    if (base->layout().stages != 1) throw LayoutError("mc_phi_uniform needs a single-stage distribution");
    const Kernel uniform{KernelFamily::Uniform};
    const SmoothedDelta delta = SmoothedDelta::at(o, lambda, uniform, uniform);
    const auto pert = perturb(base, delta, eps);
    const double floor = integ.overlap_floor;
    const double treated = o.a[0] == arm ? 1.0 : 0.0;

    McPhi out;
    out.plugin = mean_potential_outcome(*base, arm, integ).value;
    Rng rng(mix_seed(seed, 0x3C));
    const std::size_t d = o.x.size();
    std::vector<double> x(d);
    double sum = 0.0, sum_sq = 0.0, sum_reg = 0.0, sum_corr = 0.0;
    for (std::size_t k = 0; k < n_mc; ++k) {
        for (std::size_t j = 0; j < d; ++j) x[j] = o.x[j] + lambda * uniform.draw(rng);
        const PointQuery b = base->point_query(x, arm);
        const PointQuery q = pert->point_query(x, arm);
        double den = b.pax, den_eps = q.pax;
        if (den < floor) den = floor, ++out.clipped;
        if (den_eps < floor) den_eps = floor, ++out.clipped;
        const double mu = b.m / den;
        const double mu_eps = q.m / den_eps;
        const double corr = treated == 0.0 ? 0.0 : (1.0 - eps) * b.px * (o.y - mu) / den_eps;
        const double v = corr + mu_eps;
        sum += v;
        sum_sq += v * v;
        sum_reg += mu_eps;
        sum_corr += corr;
    }
    const double N = static_cast<double>(n_mc);
    const double mean = sum / N;
    out.value = mean - out.plugin;
    out.smoothed_regression = sum_reg / N;
    out.correction = sum_corr / N;
    out.std_error = n_mc > 1 ? std::sqrt(std::max(0.0, (sum_sq - N * mean * mean) / (N - 1.0)) / N) : nan();
    return out;
}

// ---------------------------------------------------------------- sweep experiment

namespace {

std::vector<double> positive_grid(const nlohmann::json& j, const char* key)
{
    auto v = j.at(key).get<std::vector<double>>();
    if (v.empty()) throw InvalidParameter(std::string(key) + " must be nonempty");
    return v;
}

}  // namespace

SweepConfig SweepConfig::from_json(const nlohmann::json& j)
{
    reject_unknown_keys(j,
                        {"dgp", "n", "seed", "h", "kernel", "x_kernel", "y_kernel", "propensity", "noise_sd", "arm",
                         "eps_grid", "lambda_grid", "scheme", "integrator", "threads"},
                        "sweep config");
    SweepConfig c;
    try {
        c.dgp = j.value("dgp", c.dgp);
        c.n = j.value("n", c.n);
        c.seed = j.value("seed", c.seed);
        c.h = j.value("h", c.h);
        if (j.contains("kernel")) c.kernel = Kernel::parse(j.at("kernel").get<std::string>());
        if (j.contains("x_kernel")) c.x_kernel = Kernel::parse(j.at("x_kernel").get<std::string>());
        if (j.contains("y_kernel")) c.y_kernel = Kernel::parse(j.at("y_kernel").get<std::string>());
        if (j.contains("propensity")) c.piecewise.mode = parse_propensity_mode(j.at("propensity").get<std::string>());
        c.piecewise.noise_sd = j.value("noise_sd", c.piecewise.noise_sd);
        c.arm = j.value("arm", c.arm);
        if (j.contains("eps_grid")) c.eps_grid = positive_grid(j, "eps_grid");
        if (j.contains("lambda_grid")) c.lambda_grid = positive_grid(j, "lambda_grid");
        if (j.contains("scheme")) c.scheme = DiffScheme::parse(j.at("scheme").get<std::string>());
        if (j.contains("integrator")) c.integ = integrator_from_json(j.at("integrator"));
        c.threads = j.value("threads", c.threads);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidParameter(std::string("malformed sweep config: ") + e.what());
    }
    if (c.dgp != "piecewise" && c.dgp != "discrete-cube") throw InvalidParameter("unknown dgp '" + c.dgp + "'");
    if (c.n < 2) throw InvalidParameter("n must be at least 2");
    if (!(c.h > 0.0)) throw InvalidParameter("h must be positive");
    if (!(c.piecewise.noise_sd >= 0.0)) throw InvalidParameter("noise_sd must be nonnegative");
    return c;
}

nlohmann::json SweepConfig::to_json() const
{
    return {{"dgp", dgp},
            {"n", n},
            {"seed", seed},
            {"h", h},
            {"kernel", kernel.name()},
            {"x_kernel", x_kernel.name()},
            {"y_kernel", y_kernel.name()},
            {"propensity", propensity_mode_name(piecewise.mode)},
            {"noise_sd", piecewise.noise_sd},
            {"arm", arm},
            {"eps_grid", eps_grid},
            {"lambda_grid", lambda_grid},
            {"scheme", scheme == SchemeKind::Forward ? "forward" : "central"},
            {"integrator", integrator_to_json(integ)},
            {"threads", threads}};
}

SweepOutput run_sweep_experiment(const SweepConfig& cfg)
{
    SweepOutput out;
    const Functional fnl = [arm = cfg.arm, integ = cfg.integ](const DistributionView& v) {
        return mean_potential_outcome(v, arm, integ);
    };
    if (cfg.dgp == "discrete-cube") {
        const auto dist = discrete_cube();
        Dataset data;
        data.layout = {1, 1};
        for (const auto& at : *dist->atoms()) data.rows.push_back(at.obs);
        const int regime[1] = {cfg.arm};
        std::vector<int> reg(regime, regime + 1);
        SweepReference ref = [dist, reg](const Observation& o, double, double) {
            return exact_derivative_discrete(reg, *dist, o);
        };
        out.result = sweep(fnl, dist, data, cfg.eps_grid, cfg.lambda_grid, ref, cfg.scheme, cfg.x_kernel, cfg.y_kernel,
                           cfg.threads);
        out.plugin = fnl(*dist).value;
        out.n = data.size();
        return out;
    }
    const DgpResult dgp = dgp_piecewise(cfg.n, cfg.seed, cfg.piecewise);
    const auto kde = fit_kde(dgp.data, cfg.h, cfg.kernel);
    out.plugin = fnl(*kde).value;
    out.n = dgp.data.size();
    const Nuisances nuis = induced_nuisances(kde, cfg.arm, cfg.integ.overlap_floor);
    // reference scores do not depend on the grid cell; compute them once
    std::vector<double> ref_values(dgp.data.size());
    for (std::size_t i = 0; i < ref_values.size(); ++i) ref_values[i] = aipw_score(nuis, out.plugin, dgp.data.rows[i]);
    const auto& rows = dgp.data.rows;
    SweepReference ref = [&](const Observation& o, double, double) {
        const auto idx = static_cast<std::size_t>(&o - rows.data());
        return ref_values.at(idx);
    };
    out.result = sweep(fnl, kde, dgp.data, cfg.eps_grid, cfg.lambda_grid, ref, cfg.scheme, cfg.x_kernel, cfg.y_kernel,
                       cfg.threads);
    return out;
}

// ---------------------------------------------------------------- comparison experiment

CompareConfig CompareConfig::from_json(const nlohmann::json& j)
{
    reject_unknown_keys(j,
                        {"n_list", "n_seeds", "seed", "h", "lambda", "eps", "beta", "r_mu", "r_e", "delta", "kernel",
                         "propensity", "noise_sd", "ipw_clip", "estimators", "integrator", "threads"},
                        "compare config");
    CompareConfig c;
    try {
        if (j.contains("n_list")) c.n_list = j.at("n_list").get<std::vector<std::size_t>>();
        c.n_seeds = j.value("n_seeds", c.n_seeds);
        c.seed = j.value("seed", c.seed);
        c.h = j.value("h", c.h);
        c.lambda = j.value("lambda", c.lambda);
        c.eps = j.value("eps", c.eps);
        c.beta = j.value("beta", c.beta);
        c.r_mu = j.value("r_mu", c.r_mu);
        c.r_e = j.value("r_e", c.r_e);
        c.delta = j.value("delta", c.delta);
        if (j.contains("kernel")) c.kernel = Kernel::parse(j.at("kernel").get<std::string>());
        if (j.contains("propensity")) c.piecewise.mode = parse_propensity_mode(j.at("propensity").get<std::string>());
        c.piecewise.noise_sd = j.value("noise_sd", c.piecewise.noise_sd);
        c.ipw_clip = j.value("ipw_clip", c.ipw_clip);
        if (j.contains("estimators")) c.estimators = j.at("estimators").get<std::vector<std::string>>();
        if (j.contains("integrator")) c.integ = integrator_from_json(j.at("integrator"));
        c.threads = j.value("threads", c.threads);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidParameter(std::string("malformed compare config: ") + e.what());
    }
    if (c.n_list.empty() || c.n_seeds == 0) throw InvalidParameter("n_list and n_seeds must be nonempty");
    for (std::size_t n : c.n_list)
        if (n < 2) throw InvalidParameter("every n must be at least 2");
    for (const auto& e : c.estimators)
        if (e != "dm" && e != "ipw" && e != "one_step" && e != "aipw_oracle" && e != "truth")
            throw InvalidParameter("unknown estimator '" + e + "'");
    if (c.estimators.empty()) throw InvalidParameter("estimators must be nonempty");
    if (!(c.ipw_clip > 0.0 && c.ipw_clip < 1.0)) throw InvalidParameter("ipw_clip must lie in (0, 1)");
    rate_schedule(1, 1, c.beta, c.r_mu, c.r_e, c.delta);
    return c;
}

nlohmann::json CompareConfig::to_json() const
{
    return {{"n_list", n_list},
            {"n_seeds", n_seeds},
            {"seed", seed},
            {"h", h},
            {"lambda", lambda},
            {"eps", eps},
            {"beta", beta},
            {"r_mu", r_mu},
            {"r_e", r_e},
            {"delta", delta},
            {"kernel", kernel.name()},
            {"propensity", propensity_mode_name(piecewise.mode)},
            {"noise_sd", piecewise.noise_sd},
            {"ipw_clip", ipw_clip},
            {"estimators", estimators},
            {"integrator", integrator_to_json(integ)},
            {"threads", threads}};
}

std::string CompareOutput::to_csv() const
{
    std::ostringstream out;
    out << "estimator,n,mean_abs_error,rmse,mean_estimate,ok,failed\n";
    for (const auto& r : rows)
        out << r.estimator << ',' << r.n << ',' << format_double(r.mean_abs_error) << ',' << format_double(r.rmse) << ','
            << format_double(r.mean_estimate) << ',' << r.ok << ',' << r.failed << '\n';
    return out.str();
}

const CompareRow& CompareOutput::row(const std::string& estimator, std::size_t n) const
{
    for (const auto& r : rows)
        if (r.estimator == estimator && r.n == n) return r;
    throw InvalidParameter("no comparison row for " + estimator + " at n=" + std::to_string(n));
}

CompareOutput run_comparison_experiment(const CompareConfig& cfg)
{
    const std::size_t E = cfg.estimators.size(), N = cfg.n_list.size(), S = cfg.n_seeds;
    CompareOutput out;
    out.truth = piecewise_truth(1);
    out.errors.assign(E, std::vector<std::vector<double>>(N, std::vector<double>(S, nan())));
    std::vector<std::vector<std::vector<double>>> estimates = out.errors;

    const Functional fnl = [integ = cfg.integ](const DistributionView& v) { return mean_potential_outcome(v, 1, integ); };
    parallel_for(N * S, cfg.threads, [&](std::size_t job) {
        const std::size_t ni = job / S, rep = job % S;
        const std::size_t n = cfg.n_list[ni];
        const RateSchedule rs = rate_schedule(n, 1, cfg.beta, cfg.r_mu, cfg.r_e, cfg.delta);
        const double h = cfg.h > 0.0 ? cfg.h : rs.lambda;
        const double lambda = cfg.lambda > 0.0 ? cfg.lambda : 0.5 * h;
        const double eps = cfg.eps > 0.0 ? cfg.eps : rs.eps;
        try {
            const DgpResult dgp = dgp_piecewise(n, mix_seed(mix_seed(cfg.seed, n), rep), cfg.piecewise);
            const auto kde = fit_kde(dgp.data, h, cfg.kernel);
            std::optional<double> plugin;
            auto get_plugin = [&] {
                if (!plugin) plugin = fnl(*kde).value;
                return *plugin;
            };
            for (std::size_t e = 0; e < E; ++e) {
                const std::string& name = cfg.estimators[e];
                double est = nan();
                try {
                    if (name == "dm") {
                        est = get_plugin();
                    } else if (name == "ipw") {
                        double s = 0.0;
                        for (const auto& r : dgp.data.rows) {
                            if (r.a[0] != 1) continue;
                            const double ehat = std::max(induced_propensity(*kde, 1, r.x, cfg.integ.overlap_floor).value, cfg.ipw_clip);
                            s += r.y / ehat;
                        }
                        est = s / static_cast<double>(n);
                    } else if (name == "one_step") {
                        const GateauxReport rep_ = one_step(fnl, kde, dgp.data, DiffScheme::forward(eps),
                                                            {lambda, Kernel{KernelFamily::Uniform}, Kernel{KernelFamily::Uniform}});
                        est = rep_.one_step;
                    } else if (name == "aipw_oracle") {
                        double s = 0.0;
                        for (const auto& r : dgp.data.rows) {
                            const double x = r.x[0];
                            const double mu = piecewise_mean(1, x);
                            const double ps = piecewise_propensity(x, cfg.piecewise.mode);
                            s += (r.a[0] == 1 ? (r.y - mu) / ps : 0.0) + mu;
                        }
                        est = s / static_cast<double>(n);
                    } else if (name == "truth") {
                        est = dgp.truth;
                    }
                } catch (const std::exception&) {
                    est = nan();
                }
                estimates[e][ni][rep] = est;
                out.errors[e][ni][rep] = est - dgp.truth;
            }
        } catch (const std::exception&) {
        }
    });

    for (std::size_t e = 0; e < E; ++e)
        for (std::size_t ni = 0; ni < N; ++ni) {
            CompareRow row;
            row.estimator = cfg.estimators[e];
            row.n = cfg.n_list[ni];
            double abs_sum = 0.0, sq_sum = 0.0, est_sum = 0.0;
            for (std::size_t rep = 0; rep < S; ++rep) {
                const double err = out.errors[e][ni][rep];
                if (!std::isfinite(err)) {
                    ++row.failed;
                    continue;
                }
                ++row.ok;
                abs_sum += std::abs(err);
                sq_sum += err * err;
                est_sum += estimates[e][ni][rep];
            }
            if (static_cast<double>(row.failed) > 0.05 * static_cast<double>(S))
                throw NumericError(row.estimator + " failed on " + std::to_string(row.failed) + " of " + std::to_string(S) +
                                   " seeds at n=" + std::to_string(row.n));
            const double k = static_cast<double>(row.ok);
            row.mean_abs_error = row.ok ? abs_sum / k : nan();
            row.rmse = row.ok ? std::sqrt(sq_sum / k) : nan();
            row.mean_estimate = row.ok ? est_sum / k : nan();
            out.rows.push_back(row);
        }
    return out;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size() || x.size() < 2) throw InvalidParameter("slope needs two or more matching points");
    double mx = 0.0, my = 0.0;
    const double k = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]) / k;
        my += std::log(y[i]) / k;
    }
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

}  // namespace gateaux
