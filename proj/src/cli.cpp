#include "gateaux/cli.hpp"

#include "gateaux/dataset_io.hpp"
#include "gateaux/experiments.hpp"
#include "gateaux/json_util.hpp"
#include "gateaux/oracle.hpp"
#include "gateaux/svg.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

namespace gateaux {

namespace {

using nlohmann::json;

constexpr int kSchemaVersion = 1;

/// Thrown for a requested abort with a specific exit code.
struct ExitRequest {
    int code;
};

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

class Logger {
public:
    explicit Logger(std::ostream& err) : err_(err)
    {
        if (const char* env = std::getenv("GATEAUX_LOG")) {
            const std::string v = env;
            if (v == "info") level_ = LogLevel::Info;
            else if (v == "debug") level_ = LogLevel::Debug;
        }
    }
    void info(const std::string& msg) const { emit(LogLevel::Info, "info", msg); }
    void debug(const std::string& msg) const { emit(LogLevel::Debug, "debug", msg); }
    void error(const std::string& msg) const { err_ << "error: " << msg << '\n'; }

private:
    void emit(LogLevel l, const char* tag, const std::string& msg) const
    {
        if (static_cast<int>(l) <= static_cast<int>(level_)) err_ << '[' << tag << "] " << msg << '\n';
    }
    std::ostream& err_;
    LogLevel level_ = LogLevel::Error;
};

/// Six significant digits for console output.
std::string g6(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string slurp(const std::string& path, bool config)
{
    std::ifstream in(path);
    if (!in) {
        const std::string msg = "cannot open '" + path + "'";
        if (config) throw InvalidParameter(msg);
        throw InvalidInput(msg);
    }
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

json parse_json_file(const std::string& path, bool config)
{
    const std::string text = slurp(path, config);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        const std::string msg = "'" + path + "' is not valid JSON: " + e.what();
        if (config) throw InvalidParameter(msg);
        throw InvalidInput(msg);
    }
}

void write_file(const std::string& path, const std::string& content)
{
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidInput("cannot write '" + path + "'");
    f << content;
    if (!f) throw InvalidInput("failed writing '" + path + "'");
}

/// Prefixes CSV output with a schema line.
std::string versioned_csv(const std::string& csv)
{
    return "# schema_version=" + std::to_string(kSchemaVersion) + "\n" + csv;
}

// ---------------------------------------------------------------- config plumbing

/// Options common to every subcommand plus a list of flag-to-key overrides.
/// Precedence: built-in defaults < --config file < explicit flags.
class Overrides {
public:
    explicit Overrides(CLI::App* sub) : sub_(sub)
    {
        sub_->add_option("--config", config_path_, "JSON config file; explicit flags take precedence over it");
        sub_->add_flag("--dump-config", dump_, "Print the effective configuration as JSON and exit");
    }

    template <class T>
    CLI::Option* add(const std::string& flag, const std::string& key, const std::string& help)
    {
        auto store = std::make_shared<T>();
        CLI::Option* opt = sub_->add_option(flag, *store, help);
        setters_.push_back([opt, store, key](json& j) {
            if (opt->count() > 0) j[key] = *store;
        });
        return opt;
    }

    CLI::Option* add_flag(const std::string& flag, const std::string& key, const std::string& help)
    {
        auto store = std::make_shared<bool>(false);
        CLI::Option* opt = sub_->add_flag(flag, *store, help);
        setters_.push_back([opt, key](json& j) {
            if (opt->count() > 0) j[key] = true;
        });
        return opt;
    }

    /// Defaults, then the config file's top-level keys, then the flags.
    json merge(const json& defaults) const
    {
        json eff = defaults;
        if (!config_path_.empty()) {
            const json file = parse_json_file(config_path_, true);
            if (!file.is_object()) throw InvalidParameter("config '" + config_path_ + "' must be a JSON object");
            for (const auto& item : file.items()) eff[item.key()] = item.value();
        }
        for (const auto& s : setters_) s(eff);
        return eff;
    }

    bool dump() const { return dump_; }

private:
    CLI::App* sub_;
    std::string config_path_;
    bool dump_ = false;
    std::vector<std::function<void(json&)>> setters_;
};

/// Splits off the output keys that are not part of a library config.
struct OutputPaths {
    std::string out;
    std::string svg;
};

OutputPaths take_outputs(json& eff)
{
    OutputPaths p;
    try {
        if (eff.contains("out")) p.out = eff.at("out").get<std::string>();
        if (eff.contains("svg")) p.svg = eff.at("svg").get<std::string>();
    } catch (const json::exception& e) {
        throw InvalidParameter(std::string("output paths must be strings: ") + e.what());
    }
    eff.erase("out");
    eff.erase("svg");
    return p;
}

template <class T>
T get_or(const json& j, const char* key, T fallback)
{
    try {
        return j.contains(key) ? j.at(key).get<T>() : fallback;
    } catch (const json::exception& e) {
        throw InvalidParameter(std::string("bad value for '") + key + "': " + e.what());
    }
}

Dataset points_to_dataset(const std::vector<std::vector<double>>& pts, const Layout& layout)
{
    Dataset d;
    d.layout = layout;
    for (const auto& p : pts) d.rows.push_back(Observation::from_point(p, layout));
    return d;
}

// ---------------------------------------------------------------- estimate

struct EstimateConfig {
    std::string data;
    std::string dgp = "piecewise";
    std::size_t n = 500;
    std::uint64_t seed = 1;
    std::size_t T = 2;
    PiecewiseSpec piecewise;
    std::string base = "auto";
    double h = 0.05;
    Kernel kernel{KernelFamily::Uniform};
    double lambda = 0.05;
    Kernel x_kernel{KernelFamily::Uniform};
    Kernel y_kernel{KernelFamily::Uniform};
    double eps = 1e-3;
    SchemeKind scheme = SchemeKind::Forward;
    FunctionalSpec functional;
    std::size_t threads = 1;

    static EstimateConfig from_json(const json& j)
    {
        reject_unknown_keys(j,
                            {"data", "dgp", "n", "seed", "T", "propensity", "noise_sd", "base", "h", "kernel", "lambda",
                             "x_kernel", "y_kernel", "eps", "scheme", "functional", "threads"},
                            "estimate config");
        EstimateConfig c;
        c.data = get_or(j, "data", c.data);
        c.dgp = get_or(j, "dgp", c.dgp);
        c.n = get_or(j, "n", c.n);
        c.seed = get_or(j, "seed", c.seed);
        c.T = get_or(j, "T", c.T);
        if (j.contains("propensity")) c.piecewise.mode = parse_propensity_mode(get_or<std::string>(j, "propensity", ""));
        c.piecewise.noise_sd = get_or(j, "noise_sd", c.piecewise.noise_sd);
        c.base = get_or(j, "base", c.base);
        c.h = get_or(j, "h", c.h);
        if (j.contains("kernel")) c.kernel = Kernel::parse(get_or<std::string>(j, "kernel", ""));
        c.lambda = get_or(j, "lambda", c.lambda);
        if (j.contains("x_kernel")) c.x_kernel = Kernel::parse(get_or<std::string>(j, "x_kernel", ""));
        if (j.contains("y_kernel")) c.y_kernel = Kernel::parse(get_or<std::string>(j, "y_kernel", ""));
        c.eps = get_or(j, "eps", c.eps);
        if (j.contains("scheme")) c.scheme = DiffScheme::parse(get_or<std::string>(j, "scheme", ""));
        if (j.contains("functional")) c.functional = FunctionalSpec::from_json(j.at("functional"));
        c.threads = get_or(j, "threads", c.threads);

        if (c.dgp != "piecewise" && c.dgp != "discrete-cube" && c.dgp != "dtr-discrete")
            throw InvalidParameter("unknown dgp '" + c.dgp + "' (expected piecewise, discrete-cube or dtr-discrete)");
        if (c.base != "auto" && c.base != "kde" && c.base != "empirical")
            throw InvalidParameter("unknown base '" + c.base + "' (expected auto, kde or empirical)");
        if (c.n < 2) throw InvalidParameter("n must be at least 2");
        if (!(c.h > 0.0)) throw InvalidParameter("h must be positive");
        if (!(c.lambda > 0.0)) throw InvalidParameter("lambda must be positive");
        validate_eps(c.eps);
        return c;
    }

    json to_json() const
    {
        return {{"data", data},
                {"dgp", dgp},
                {"n", n},
                {"seed", seed},
                {"T", T},
                {"propensity", propensity_mode_name(piecewise.mode)},
                {"noise_sd", piecewise.noise_sd},
                {"base", base},
                {"h", h},
                {"kernel", kernel.name()},
                {"lambda", lambda},
                {"x_kernel", x_kernel.name()},
                {"y_kernel", y_kernel.name()},
                {"eps", eps},
                {"scheme", scheme == SchemeKind::Forward ? "forward" : "central"},
                {"functional", functional.to_json()},
                {"threads", threads}};
    }
};

/// --functional / --arm / --regime / integrator flags edit the nested functional object.
struct FunctionalFlags {
    std::string kind;
    int arm = 1;
    std::vector<int> regime;
    std::string integrator;
    std::size_t mc_samples = 0;
    double overlap_floor = 0.0;
    CLI::Option *kind_opt = nullptr, *arm_opt = nullptr, *regime_opt = nullptr, *integ_opt = nullptr,
                *mc_opt = nullptr, *floor_opt = nullptr;

    void attach(CLI::App* sub, bool with_kind)
    {
        if (with_kind) {
            kind_opt = sub->add_option("--functional", kind, "Functional: mpo (mean potential outcome) or dtr");
            arm_opt = sub->add_option("--arm", arm, "Treatment arm of the mean potential outcome");
        }
        regime_opt = sub->add_option("--regime", regime, "Static regime for dtr, comma separated (e.g. 1,1)")
                         ->delimiter(',');
        integ_opt = sub->add_option("--integrator", integrator, "Integrator: auto, mc or quadrature");
        mc_opt = sub->add_option("--mc-samples", mc_samples, "Monte Carlo samples for continuous multi-stage integrals");
        floor_opt = sub->add_option("--overlap-floor", overlap_floor, "Lower clip for density denominators");
    }

    void apply(json& fn, std::size_t default_T) const
    {
        if (kind_opt && kind_opt->count()) {
            fn["kind"] = kind;
            if (kind == "mpo") {
                fn.erase("regime");
                fn.erase("T");
                if (!fn.contains("arm")) fn["arm"] = 1;
            } else {
                fn.erase("arm");
                if (!fn.contains("regime")) {
                    fn["regime"] = std::vector<int>(default_T, 1);
                    fn["T"] = default_T;
                }
            }
        }
        if (arm_opt && arm_opt->count()) fn["arm"] = arm;
        if (regime_opt && regime_opt->count()) {
            fn["regime"] = regime;
            fn["T"] = regime.size();
        }
        json& integ = fn["integrator"];
        if (!integ.is_object()) integ = json::object();
        if (integ_opt->count()) integ["kind"] = integrator;
        if (mc_opt->count()) integ["mc_samples"] = mc_samples;
        if (floor_opt->count()) integ["overlap_floor"] = overlap_floor;
    }
};

struct Prepared {
    Dataset data;
    ViewPtr base;
    bool discrete = false;
};

Prepared prepare_base(const std::string& data_path, const std::string& dgp, std::size_t n, std::uint64_t seed,
                      std::size_t T, const PiecewiseSpec& piecewise, const std::string& base_kind, double h,
                      Kernel kernel, const Logger& log)
{
    Prepared p;
    bool discrete_source = false;
    if (!data_path.empty()) {
        p.data = read_dataset_csv(data_path);
        log.info("read " + std::to_string(p.data.size()) + " rows from " + data_path);
    } else if (dgp == "piecewise") {
        p.data = dgp_piecewise(n, seed, piecewise).data;
    } else if (dgp == "discrete-cube") {
        p.data = discrete_cube_data(n);
        discrete_source = true;
    } else {
        const auto dist = dtr_discrete(T, seed);
        p.data = points_to_dataset(sample(*dist, n, seed), dist->layout());
        discrete_source = true;
    }
    const bool empirical = base_kind == "empirical" || (base_kind == "auto" && discrete_source);
    if (empirical) {
        p.base = std::make_shared<const DiscreteDistribution>(DiscreteDistribution::empirical(p.data));
        p.discrete = true;
        log.info("base: empirical distribution with " + std::to_string(p.data.size()) + " rows");
    } else {
        p.base = fit_kde(p.data, h, kernel);
        log.info("base: kernel density estimate, h=" + g6(h) + ", kernel=" + kernel.name());
    }
    return p;
}

int cmd_estimate(const json& eff, const OutputPaths& paths, std::ostream& out, const Logger& log)
{
    const EstimateConfig c = EstimateConfig::from_json(eff);
    const Prepared p = prepare_base(c.data, c.dgp, c.n, c.seed, c.T, c.piecewise, c.base, c.h, c.kernel, log);
    const Functional fnl = make_functional(c.functional);
    const GateauxReport rep = one_step(fnl, p.base, p.data, {c.scheme, c.eps}, {c.lambda, c.x_kernel, c.y_kernel}, c.threads);
    json j = rep.to_json();
    j["command"] = "estimate";
    j["config"] = c.to_json();
    if (!paths.out.empty()) write_file(paths.out, j.dump(2) + "\n");
    out << "plugin=" << g6(rep.plugin) << " one_step=" << g6(rep.one_step) << " n=" << rep.phi.size()
        << " eps=" << g6(rep.eps) << " lambda=" << g6(rep.lambda) << '\n';
    if (!rep.failures.empty()) log.info(std::to_string(rep.failures.size()) + " observations failed and were dropped");
    if (rep.clip_count) log.info(std::to_string(rep.clip_count) + " clipped denominators");
    return exit_code::ok;
}

// ---------------------------------------------------------------- dtr

struct DtrConfig {
    std::string data;
    std::size_t T = 2;
    std::size_t n = 1000;
    std::uint64_t seed = 1;
    std::string base = "empirical";
    double h = 0.05;
    Kernel kernel{KernelFamily::Uniform};
    double lambda = 0.05;
    double eps = 1e-6;
    SchemeKind scheme = SchemeKind::Forward;
    FunctionalSpec functional = all_ones(2);
    bool validate = false;
    std::size_t threads = 1;

    static FunctionalSpec all_ones(std::size_t T)
    {
        FunctionalSpec f;
        f.kind = FunctionalSpec::Kind::DtrValue;
        f.regime.assign(T, 1);
        return f;
    }

    static DtrConfig from_json(const json& j)
    {
        reject_unknown_keys(j,
                            {"data", "T", "n", "seed", "base", "h", "kernel", "lambda", "eps", "scheme", "functional",
                             "validate", "threads"},
                            "dtr config");
        DtrConfig c;
        c.data = get_or(j, "data", c.data);
        c.T = get_or(j, "T", c.T);
        c.n = get_or(j, "n", c.n);
        c.seed = get_or(j, "seed", c.seed);
        c.base = get_or(j, "base", c.base);
        c.h = get_or(j, "h", c.h);
        if (j.contains("kernel")) c.kernel = Kernel::parse(get_or<std::string>(j, "kernel", ""));
        c.lambda = get_or(j, "lambda", c.lambda);
        c.eps = get_or(j, "eps", c.eps);
        if (j.contains("scheme")) c.scheme = DiffScheme::parse(get_or<std::string>(j, "scheme", ""));
        c.functional = j.contains("functional") ? FunctionalSpec::from_json(j.at("functional")) : all_ones(c.T);
        c.validate = get_or(j, "validate", c.validate);
        c.threads = get_or(j, "threads", c.threads);

        if (c.functional.kind != FunctionalSpec::Kind::DtrValue) throw InvalidParameter("dtr needs a dtr functional");
        if (c.T == 0) throw InvalidParameter("T must be at least 1");
        if (c.base != "empirical" && c.base != "kde") throw InvalidParameter("base must be empirical or kde");
        if (c.n < 2) throw InvalidParameter("n must be at least 2");
        if (!(c.h > 0.0) || !(c.lambda > 0.0)) throw InvalidParameter("h and lambda must be positive");
        validate_eps(c.eps);
        return c;
    }

    json to_json() const
    {
        return {{"data", data},       {"T", T},
                {"n", n},             {"seed", seed},
                {"base", base},       {"h", h},
                {"kernel", kernel.name()}, {"lambda", lambda},
                {"eps", eps},         {"scheme", scheme == SchemeKind::Forward ? "forward" : "central"},
                {"functional", functional.to_json()}, {"validate", validate},
                {"threads", threads}};
    }
};

int cmd_dtr(const json& eff, const OutputPaths& paths, std::ostream& out, const Logger& log)
{
    const DtrConfig c = DtrConfig::from_json(eff);
    const Prepared p = prepare_base(c.data, "dtr-discrete", c.n, c.seed, c.T, {}, c.base, c.h, c.kernel, log);
    if (p.data.layout.stages != c.functional.regime.size())
        throw LayoutError("regime length " + std::to_string(c.functional.regime.size()) + " does not match the " +
                          std::to_string(p.data.layout.stages) + "-stage data");
    const Functional fnl = make_functional(c.functional);
    const GateauxReport rep = one_step(fnl, p.base, p.data, {c.scheme, c.eps}, {c.lambda}, c.threads);
    json j = rep.to_json();
    j["command"] = "dtr";
    j["config"] = c.to_json();

    double max_diff = 0.0;
    if (c.validate) {
        if (!p.discrete) throw InvalidParameter("--validate needs the empirical base");
        const auto& emp = static_cast<const DiscreteDistribution&>(*p.base);
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            if (std::isnan(rep.phi[i])) continue;
            const double eif = dtr_eif(emp, c.functional.regime, p.data.rows[i]);
            max_diff = std::max(max_diff, std::abs(rep.phi[i] - eif));
        }
        j["validation"] = {{"max_abs_diff_vs_eif", max_diff}};
    }
    if (!paths.out.empty()) write_file(paths.out, j.dump(2) + "\n");
    out << "plugin=" << g6(rep.plugin) << " one_step=" << g6(rep.one_step) << " n=" << rep.phi.size()
        << " eps=" << g6(rep.eps) << " T=" << c.functional.regime.size() << '\n';
    if (c.validate) out << "max |fd - eif| = " << g6(max_diff) << '\n';
    return exit_code::ok;
}

// ---------------------------------------------------------------- mdp

struct MdpConfig {
    std::string spec;
    std::string constraints;
    std::string triples;
    std::size_t nS = 5;
    std::size_t nA = 2;
    double gamma = 0.9;
    std::uint64_t seed = 1;
    std::size_t n_triples = 0;
    double eps = 1e-6;
    Weighting weighting = Weighting::InitialState;
    bool validate = false;
    bool strict_nondegenerate = false;
    std::size_t threads = 1;

    static MdpConfig from_json(const json& j)
    {
        reject_unknown_keys(j,
                            {"spec", "constraints", "triples", "nS", "nA", "gamma", "seed", "n_triples", "eps",
                             "weighting", "validate", "strict_nondegenerate", "threads"},
                            "mdp config");
        MdpConfig c;
        c.spec = get_or(j, "spec", c.spec);
        c.constraints = get_or(j, "constraints", c.constraints);
        c.triples = get_or(j, "triples", c.triples);
        c.nS = get_or(j, "nS", c.nS);
        c.nA = get_or(j, "nA", c.nA);
        c.gamma = get_or(j, "gamma", c.gamma);
        c.seed = get_or(j, "seed", c.seed);
        c.n_triples = get_or(j, "n_triples", c.n_triples);
        c.eps = get_or(j, "eps", c.eps);
        const std::string w = get_or<std::string>(j, "weighting", "initial-state");
        if (w == "initial-state") c.weighting = Weighting::InitialState;
        else if (w == "occupancy") c.weighting = Weighting::Occupancy;
        else throw InvalidParameter("unknown weighting '" + w + "' (expected initial-state or occupancy)");
        c.validate = get_or(j, "validate", c.validate);
        c.strict_nondegenerate = get_or(j, "strict_nondegenerate", c.strict_nondegenerate);
        c.threads = get_or(j, "threads", c.threads);
        if (c.nS == 0 || c.nA == 0) throw InvalidParameter("nS and nA must be positive");
        if (!(c.gamma >= 0.0 && c.gamma < 1.0)) throw InvalidParameter("gamma must lie in [0, 1)");
        validate_eps(c.eps);
        return c;
    }

    json to_json() const
    {
        return {{"spec", spec},
                {"constraints", constraints},
                {"triples", triples},
                {"nS", nS},
                {"nA", nA},
                {"gamma", gamma},
                {"seed", seed},
                {"n_triples", n_triples},
                {"eps", eps},
                {"weighting", weighting == Weighting::InitialState ? "initial-state" : "occupancy"},
                {"validate", validate},
                {"strict_nondegenerate", strict_nondegenerate},
                {"threads", threads}};
    }
};

int cmd_mdp(const json& eff, const OutputPaths& paths, std::ostream& out, const Logger& log)
{
    const MdpConfig c = MdpConfig::from_json(eff);
    TabularMDP mdp;
    if (!c.spec.empty()) {
        mdp = TabularMDP::from_json(parse_json_file(c.spec, false));
    } else {
        mdp = random_mdp(c.nS, c.nA, c.seed, c.gamma);
        log.info("random MDP with " + std::to_string(c.nS) + " states and " + std::to_string(c.nA) + " actions");
    }
    LinearConstraintSet cons;
    if (!c.constraints.empty()) cons = LinearConstraintSet::from_json(parse_json_file(c.constraints, false));
    cons.validate(mdp.nS, mdp.nA);

    const LPSolution sol = solve_policy_lp(mdp, cons);
    log.info("LP solved in " + std::to_string(sol.iterations) + " pivots");
    if (sol.degenerate) {
        if (c.strict_nondegenerate) {
            log.error("the optimal LP basis is degenerate");
            throw ExitRequest{exit_code::degenerate};
        }
        log.info("the optimal LP basis is degenerate; finite differences may change basis");
    }

    std::vector<Triple> triples;
    if (!c.triples.empty()) triples = read_triples_csv(c.triples);
    else if (c.n_triples > 0) triples = sample_triples(mdp, c.n_triples, mix_seed(c.seed, 0x7819));

    // derivative points: the distinct observed triples, or every supported transition
    std::vector<Triple> points;
    if (!triples.empty()) {
        std::set<std::tuple<int, int, int>> seen;
        for (const auto& t : triples)
            if (seen.insert({t.s, t.a, t.s_next}).second) points.push_back(t);
    } else {
        for (std::size_t s = 0; s < mdp.nS; ++s)
            for (std::size_t a = 0; a < mdp.nA; ++a)
                for (std::size_t sp = 0; sp < mdp.nS; ++sp)
                    if (mdp.P[s][a][sp] > 0.0 && mdp.d[s][a] > 0.0)
                        points.push_back({static_cast<int>(s), static_cast<int>(a), static_cast<int>(sp)});
    }
    std::vector<FdResult> fd(points.size());
    std::vector<double> closed(points.size());
    std::vector<std::string> errors(points.size());
    parallel_for(points.size(), c.threads, [&](std::size_t i) {
        try {
            fd[i] = fd_derivative(mdp, points[i], c.eps, cons, &sol);
            closed[i] = mdp_influence(sol, mdp, points[i]);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    for (std::size_t i = 0; i < points.size(); ++i)
        if (!errors[i].empty()) throw InvalidInput("triple " + std::to_string(i) + ": " + errors[i]);

    json derivs = json::array();
    double max_diff = 0.0;
    std::size_t changed = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double diff = std::abs(fd[i].value - closed[i]);
        if (fd[i].basis_stable) max_diff = std::max(max_diff, diff);
        changed += fd[i].basis_stable ? 0 : 1;
        derivs.push_back({{"s", points[i].s},
                          {"a", points[i].a},
                          {"s_next", points[i].s_next},
                          {"fd", fd[i].value},
                          {"closed_form", closed[i]},
                          {"abs_diff", diff},
                          {"basis_stable", fd[i].basis_stable}});
    }
    const DualityCheck dc = check_duality(mdp, sol, cons);

    json j;
    j["schema_version"] = kSchemaVersion;
    j["command"] = "mdp";
    j["config"] = c.to_json();
    j["lp"] = sol.to_json();
    j["duality"] = {{"primal_violation", dc.primal_violation}, {"dual_violation", dc.dual_violation}, {"gap", dc.gap}};
    j["derivatives"] = derivs;
    j["max_abs_diff"] = max_diff;
    j["basis_change_count"] = changed;

    std::optional<GateauxReport> rep;
    if (!triples.empty()) {
        rep = one_step_policy_value(mdp, triples, c.eps, cons, c.weighting, c.threads);
        j["one_step"] = rep->to_json();
    }
    double vi_gap = -1.0;
    if (c.validate && cons.empty()) {
        const ValueIterationResult vi = value_iteration(mdp, 1e-12);
        vi_gap = 0.0;
        for (std::size_t s = 0; s < mdp.nS; ++s) vi_gap = std::max(vi_gap, std::abs(vi.V[s] - sol.V[s]));
        j["value_iteration_gap"] = vi_gap;
    }
    if (!paths.out.empty()) write_file(paths.out, j.dump(2) + "\n");

    out << "objective=" << g6(sol.objective) << " derivatives=" << points.size() << " basis_changes=" << changed
        << " degenerate=" << (sol.degenerate ? "yes" : "no") << '\n';
    if (rep) out << "plugin=" << g6(rep->plugin) << " one_step=" << g6(rep->one_step) << " n=" << triples.size() << '\n';
    if (c.validate) {
        out << "max |fd - closed_form| = " << g6(max_diff) << '\n';
        out << "duality: primal=" << g6(dc.primal_violation) << " dual=" << g6(dc.dual_violation) << " gap=" << g6(dc.gap)
            << '\n';
        if (vi_gap >= 0.0) out << "max |V_lp - V_vi| = " << g6(vi_gap) << '\n';
    }
    return exit_code::ok;
}

// ---------------------------------------------------------------- sweep / compare

int cmd_sweep(const json& eff, const OutputPaths& paths, std::ostream& out, const Logger& log)
{
    const SweepConfig c = SweepConfig::from_json(eff);
    const SweepOutput res = run_sweep_experiment(c);
    log.info("sweep over " + std::to_string(c.eps_grid.size()) + "x" + std::to_string(c.lambda_grid.size()) +
             " cells, plugin=" + g6(res.plugin));
    const std::string csv = versioned_csv(res.result.to_csv());
    if (!paths.svg.empty()) write_file(paths.svg, sweep_heatmap_svg(res.result));
    if (paths.out.empty()) {
        out << csv;
    } else {
        write_file(paths.out, csv);
        out << "plugin=" << g6(res.plugin) << " n=" << res.n << " cells=" << c.eps_grid.size() * c.lambda_grid.size()
            << '\n';
    }
    return exit_code::ok;
}

int cmd_compare(const json& eff, const OutputPaths& paths, std::ostream& out, const Logger& log)
{
    const CompareConfig c = CompareConfig::from_json(eff);
    const CompareOutput res = run_comparison_experiment(c);
    log.info("comparison over " + std::to_string(c.n_list.size()) + " sample sizes and " + std::to_string(c.n_seeds) +
             " seeds");
    const std::string csv = versioned_csv(res.to_csv());
    if (!paths.svg.empty()) write_file(paths.svg, compare_chart_svg(res));
    if (paths.out.empty()) {
        out << csv;
    } else {
        write_file(paths.out, csv);
        for (const auto& r : res.rows)
            out << r.estimator << " n=" << r.n << " mean_abs_error=" << g6(r.mean_abs_error) << " rmse=" << g6(r.rmse)
                << '\n';
    }
    return exit_code::ok;
}

}  // namespace

// ---------------------------------------------------------------- entry point

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    const Logger log(err);
    CLI::App app{"Empirical Gateaux derivatives, one-step estimators and MDP LP sensitivity"};
    app.name("gateaux");
    app.require_subcommand(1);

    using Handler = std::function<int(const json&, const OutputPaths&, std::ostream&, const Logger&)>;
    struct Sub {
        CLI::App* app;
        std::unique_ptr<Overrides> ov;
        std::function<json()> defaults;
        std::function<void(json&)> post;
        Handler run;
    };
    std::vector<Sub> subs;

    auto common = [](Overrides& ov, bool svg) {
        ov.add<std::uint64_t>("--seed", "seed", "Random seed");
        ov.add<std::size_t>("--threads", "threads", "Worker thread cap; output does not depend on it");
        ov.add<std::string>("--out", "out", "Output file (JSON report or CSV table)");
        if (svg) ov.add<std::string>("--svg", "svg", "Also write an SVG figure to this path");
    };

    // estimate
    auto est_flags = std::make_shared<FunctionalFlags>();
    {
        CLI::App* s = app.add_subcommand("estimate", "One-step estimate from empirical Gateaux derivatives");
        auto ov = std::make_unique<Overrides>(s);
        common(*ov, false);
        ov->add<std::string>("--data", "data", "Dataset CSV (columns x.., a, y; see README)");
        ov->add<std::string>("--dgp", "dgp", "Simulated data when --data is absent: piecewise, discrete-cube, dtr-discrete");
        ov->add<std::size_t>("--n", "n", "Simulated sample size");
        ov->add<std::size_t>("--T", "T", "Horizon of the dtr-discrete design");
        ov->add<std::string>("--propensity", "propensity", "Piecewise propensity: logistic-sin or raw-sin");
        ov->add<double>("--noise-sd", "noise_sd", "Piecewise outcome noise standard deviation");
        ov->add<std::string>("--base", "base", "Base distribution: auto, kde or empirical");
        ov->add<double>("--bandwidth", "h", "KDE bandwidth");
        ov->add<std::string>("--kernel", "kernel", "KDE kernel: uniform or gaussian");
        ov->add<double>("--lambda", "lambda", "Smoothed-delta bandwidth");
        ov->add<std::string>("--x-kernel", "x_kernel", "Smoothed-delta covariate kernel");
        ov->add<std::string>("--y-kernel", "y_kernel", "Smoothed-delta outcome kernel");
        ov->add<double>("--eps", "eps", "Finite-difference step");
        ov->add<std::string>("--scheme", "scheme", "Difference scheme: forward or central");
        est_flags->attach(s, true);
        subs.push_back({s, std::move(ov), [] { return EstimateConfig{}.to_json(); },
                        [est_flags](json& j) {
                            const std::size_t T = j.contains("T") && j["T"].is_number_unsigned() ? j["T"].get<std::size_t>() : 2;
                            est_flags->apply(j["functional"], T);
                        },
                        cmd_estimate});
    }
    // sweep
    {
        CLI::App* s = app.add_subcommand("sweep", "MAE grid of the derivative over eps and lambda");
        auto ov = std::make_unique<Overrides>(s);
        common(*ov, true);
        ov->add<std::string>("--dgp", "dgp", "piecewise or discrete-cube");
        ov->add<std::size_t>("--n", "n", "Sample size");
        ov->add<double>("--bandwidth", "h", "KDE bandwidth");
        ov->add<std::string>("--kernel", "kernel", "KDE kernel");
        ov->add<std::string>("--x-kernel", "x_kernel", "Smoothed-delta covariate kernel");
        ov->add<std::string>("--y-kernel", "y_kernel", "Smoothed-delta outcome kernel");
        ov->add<std::string>("--propensity", "propensity", "logistic-sin or raw-sin");
        ov->add<double>("--noise-sd", "noise_sd", "Outcome noise standard deviation");
        ov->add<int>("--arm", "arm", "Treatment arm");
        ov->add<std::vector<double>>("--eps-grid", "eps_grid", "Comma-separated eps values")->delimiter(',');
        ov->add<std::vector<double>>("--lambda-grid", "lambda_grid", "Comma-separated lambda values")->delimiter(',');
        ov->add<std::string>("--scheme", "scheme", "forward or central");
        subs.push_back({s, std::move(ov), [] { return SweepConfig{}.to_json(); }, nullptr, cmd_sweep});
    }
    // mdp
    {
        CLI::App* s = app.add_subcommand("mdp", "Policy-value LP, finite-difference derivatives and one-step estimate");
        auto ov = std::make_unique<Overrides>(s);
        common(*ov, false);
        ov->add<std::string>("--spec", "spec", "MDP spec JSON (random MDP when absent)");
        ov->add<std::string>("--constraints", "constraints", "Occupancy constraint JSON");
        ov->add<std::string>("--triples", "triples", "Observed transitions CSV (s,a,s_next)");
        ov->add<std::size_t>("--nS", "nS", "States of the random MDP");
        ov->add<std::size_t>("--nA", "nA", "Actions of the random MDP");
        ov->add<double>("--gamma", "gamma", "Discount of the random MDP");
        ov->add<std::size_t>("--n-triples", "n_triples", "Simulate this many triples when --triples is absent");
        ov->add<double>("--eps", "eps", "Finite-difference step");
        ov->add<std::string>("--weighting", "weighting", "initial-state or occupancy");
        ov->add_flag("--validate", "validate", "Compare against the closed form, duality and value iteration");
        ov->add_flag("--strict-nondegenerate", "strict_nondegenerate", "Exit 6 when the optimal basis is degenerate");
        subs.push_back({s, std::move(ov), [] { return MdpConfig{}.to_json(); }, nullptr, cmd_mdp});
    }
    // dtr
    auto dtr_flags = std::make_shared<FunctionalFlags>();
    {
        CLI::App* s = app.add_subcommand("dtr", "Dynamic treatment regime value on multi-stage data");
        auto ov = std::make_unique<Overrides>(s);
        common(*ov, false);
        ov->add<std::string>("--data", "data", "Multi-stage dataset CSV");
        ov->add<std::size_t>("--T", "T", "Horizon of the simulated design");
        ov->add<std::size_t>("--n", "n", "Simulated sample size");
        ov->add<std::string>("--base", "base", "empirical or kde");
        ov->add<double>("--bandwidth", "h", "KDE bandwidth");
        ov->add<std::string>("--kernel", "kernel", "KDE kernel");
        ov->add<double>("--lambda", "lambda", "Smoothed-delta bandwidth");
        ov->add<double>("--eps", "eps", "Finite-difference step");
        ov->add<std::string>("--scheme", "scheme", "forward or central");
        ov->add_flag("--validate", "validate", "Compare each derivative with the exact influence function");
        dtr_flags->attach(s, false);
        subs.push_back({s, std::move(ov), [] { return DtrConfig{}.to_json(); },
                        [dtr_flags](json& j) {
                            std::size_t T = 2;
                            try {
                                T = j.at("T").get<std::size_t>();
                            } catch (const json::exception&) {
                            }
                            json& fn = j["functional"];
                            // a changed horizon resets the default regime unless one was given
                            if (!dtr_flags->regime_opt->count() &&
                                (!fn.contains("regime") || fn["regime"].size() != T)) {
                                fn["regime"] = std::vector<int>(T, 1);
                                fn["T"] = T;
                            }
                            dtr_flags->apply(fn, T);
                        },
                        cmd_dtr});
    }
    // compare
    {
        CLI::App* s = app.add_subcommand("compare", "Estimator error over sample sizes and seeds");
        auto ov = std::make_unique<Overrides>(s);
        common(*ov, true);
        ov->add<std::vector<std::size_t>>("--n-list", "n_list", "Comma-separated sample sizes")->delimiter(',');
        ov->add<std::size_t>("--n-seeds", "n_seeds", "Replications per sample size");
        ov->add<double>("--bandwidth", "h", "KDE bandwidth (<= 0: rate schedule)");
        ov->add<double>("--lambda", "lambda", "Smoothed-delta bandwidth (<= 0: half of h)");
        ov->add<double>("--eps", "eps", "Finite-difference step (<= 0: rate schedule)");
        ov->add<std::string>("--kernel", "kernel", "KDE kernel");
        ov->add<std::string>("--propensity", "propensity", "logistic-sin or raw-sin");
        ov->add<double>("--noise-sd", "noise_sd", "Outcome noise standard deviation");
        ov->add<double>("--ipw-clip", "ipw_clip", "Propensity floor of the IPW estimator");
        ov->add<std::vector<std::string>>("--estimators", "estimators", "dm, ipw, one_step, aipw_oracle, truth")
            ->delimiter(',');
        subs.push_back({s, std::move(ov), [] { return CompareConfig{}.to_json(); }, nullptr, cmd_compare});
    }

    std::vector<std::string> argv_store{"gateaux"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_code::ok : exit_code::config;
    }

    try {
        for (auto& sub : subs) {
            if (!sub.app->parsed()) continue;
            json eff = sub.ov->merge(sub.defaults());
            if (sub.post) sub.post(eff);
            OutputPaths paths = take_outputs(eff);
            if (sub.ov->dump()) {
                // validate before dumping so a dump always loads back
                json canonical;
                if (sub.app->get_name() == "estimate") canonical = EstimateConfig::from_json(eff).to_json();
                else if (sub.app->get_name() == "sweep") canonical = SweepConfig::from_json(eff).to_json();
                else if (sub.app->get_name() == "mdp") canonical = MdpConfig::from_json(eff).to_json();
                else if (sub.app->get_name() == "dtr") canonical = DtrConfig::from_json(eff).to_json();
                else canonical = CompareConfig::from_json(eff).to_json();
                if (!paths.out.empty()) canonical["out"] = paths.out;
                if (!paths.svg.empty()) canonical["svg"] = paths.svg;
                out << canonical.dump(2) << '\n';
                return exit_code::ok;
            }
            log.debug("effective config: " + eff.dump());
            return sub.run(eff, paths, out, log);
        }
        return exit_code::config;
    } catch (const ExitRequest& e) {
        return e.code;
    } catch (const InvalidParameter& e) {
        log.error(e.what());
        return exit_code::config;
    } catch (const InvalidInput& e) {
        log.error(e.what());
        return exit_code::data;
    } catch (const LayoutError& e) {
        log.error(e.what());
        return exit_code::data;
    } catch (const SupportError& e) {
        log.error(e.what());
        return exit_code::data;
    } catch (const InfeasibleError& e) {
        log.error(e.what());
        return exit_code::infeasible;
    } catch (const DegenerateError& e) {
        log.error(e.what());
        return exit_code::numeric;
    } catch (const NumericError& e) {
        log.error(e.what());
        return exit_code::numeric;
    } catch (const std::exception& e) {
        log.error(e.what());
        return exit_code::internal;
    }
}

}  // namespace gateaux
