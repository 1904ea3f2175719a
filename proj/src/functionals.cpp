#include "gateaux/functionals.hpp"

#include "gateaux/json_util.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace gateaux {

namespace {

struct GaussRule {
    std::vector<double> nodes;    // on [-1, 1]
    std::vector<double> weights;
};

/// Newton iteration on Legendre polynomials.
GaussRule gauss_legendre(int n)
{
    GaussRule rule;
    rule.nodes.resize(static_cast<std::size_t>(n));
    rule.weights.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        rule.nodes[static_cast<std::size_t>(i)] = x;
        rule.weights[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return rule;
}

const GaussRule& cached_rule(int n)
{
    static const std::vector<GaussRule> rules = [] {
        std::vector<GaussRule> r(9);
        for (int k = 1; k <= 8; ++k) r[static_cast<std::size_t>(k)] = gauss_legendre(k);
        return r;
    }();
    if (n < 1 || n > 8) throw InvalidParameter("gauss_nodes must lie in 1..8");
    return rules[static_cast<std::size_t>(n)];
}

/// Integrates f over the union of panels delimited by `breaks`. Piecewise
/// constant integrands use the midpoint of each panel (exact); otherwise each
/// panel is split into pieces no wider than `max_width` and Gauss-Legendre is used.
template <class F>
double integrate_panels(std::vector<double> breaks, bool piecewise_constant, double max_width, int nodes, F&& f)
{
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    double total = 0.0;
    if (piecewise_constant) {
        for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
            const double a = breaks[k], b = breaks[k + 1];
            total += (b - a) * f(0.5 * (a + b));
        }
        return total;
    }
    const GaussRule& rule = cached_rule(nodes);
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
        const double a = breaks[k], b = breaks[k + 1];
        const auto pieces = static_cast<std::size_t>(std::max(1.0, std::ceil((b - a) / max_width)));
        const double w = (b - a) / static_cast<double>(pieces);
        for (std::size_t p = 0; p < pieces; ++p) {
            const double lo = a + w * static_cast<double>(p);
            double s = 0.0;
            for (std::size_t i = 0; i < rule.nodes.size(); ++i) s += rule.weights[i] * f(lo + 0.5 * w * (rule.nodes[i] + 1.0));
            total += 0.5 * w * s;
        }
    }
    return total;
}

double floored(double den, double floor, std::size_t& clipped)
{
    if (den < floor) {
        ++clipped;
        return floor;
    }
    return den;
}

// ---- discrete: exact recursion over the history tree

double discrete_g(const std::vector<WeightedAtom>& atoms, const std::vector<std::size_t>& subset, std::size_t t,
                  double parent_mass, std::span<const int> regime, std::size_t d)
{
    const std::size_t T = regime.size();
    std::map<std::vector<double>, std::vector<std::size_t>> groups;
    for (std::size_t i : subset) {
        const auto& x = atoms[i].obs.x;
        groups[std::vector<double>(x.begin() + static_cast<std::ptrdiff_t>(t * d),
                                   x.begin() + static_cast<std::ptrdiff_t>((t + 1) * d))]
            .push_back(i);
    }
    double sum = 0.0;
    for (const auto& [xt, members] : groups) {
        double mg = 0.0;
        for (std::size_t i : members) mg += atoms[i].mass;
        if (mg == 0.0) continue;
        std::vector<std::size_t> on_regime;
        double ms = 0.0;
        for (std::size_t i : members)
            if (atoms[i].obs.a[t] == regime[t]) {
                on_regime.push_back(i);
                ms += atoms[i].mass;
            }
        if (ms == 0.0)
            throw DegenerateError("history prefix has zero probability under the regime at stage " + std::to_string(t));
        const double p_xt = t == 0 ? mg : mg / parent_mass;
        double inner = 0.0;
        if (t + 1 == T) {
            for (std::size_t i : on_regime) inner += atoms[i].mass * atoms[i].obs.y;
            inner /= ms;
        } else {
            inner = discrete_g(atoms, on_regime, t + 1, ms, regime, d);
        }
        sum += p_xt * inner;
    }
    return sum;
}

// ---- continuous integrand of the g-formula at one complete covariate history

struct Integrand {
    const DistributionView& view;
    std::span<const int> regime;
    const IntegratorSettings& integ;
    std::size_t& clipped;

    double outcome_integral(std::span<const double> x) const
    {
        std::vector<double> breaks;
        view.breakpoints(DistributionView::kOutcome, breaks);
        const double scale = view.smoothing_scale();
        return integrate_panels(std::move(breaks), view.piecewise_constant(), 0.5 * scale, integ.gauss_nodes,
                                [&](double y) { return y * view.outcome_density(y, x, regime); });
    }

    double operator()(std::span<const double> xbar) const
    {
        const std::size_t T = regime.size();
        const std::size_t d = xbar.size() / T;
        const double floor = integ.overlap_floor;
        if (T == 1 && !integ.raw_outcome_integral) {
            const PointQuery q = view.point_query(xbar, regime[0]);
            if (q.px == 0.0) return 0.0;
            return q.px * q.m / floored(q.pax, floor, clipped);
        }
        double val = view.marginal(xbar.first(d), {});
        if (val == 0.0) return 0.0;
        for (std::size_t t = 1; t < T && val != 0.0; ++t) {
            const double num = view.marginal(xbar.first((t + 1) * d), regime.first(t));
            const double den = view.marginal(xbar.first(t * d), regime.first(t));
            val *= num / floored(den, floor, clipped);
        }
        if (val == 0.0) return 0.0;
        const double m = integ.raw_outcome_integral ? outcome_integral(xbar) : view.outcome_moment(xbar, regime);
        return val * m / floored(view.marginal(xbar, regime), floor, clipped);
    }
};

Evaluation quadrature_g(const DistributionView& view, std::span<const int> regime, const IntegratorSettings& integ)
{
    Evaluation ev;
    Integrand f{view, regime, integ, ev.clipped};
    std::vector<double> breaks;
    view.breakpoints(0, breaks);
    ev.value = integrate_panels(std::move(breaks), view.piecewise_constant(), 0.5 * view.smoothing_scale(),
                                integ.gauss_nodes, [&](double x) { return f(std::span<const double>(&x, 1)); });
    return ev;
}

/// Stratified importance sampling: every stage has a mixture proposal (the
/// stage marginal of the view); each combination of components is sampled with
/// its own common-random-number stream and weighted by the product of weights.
Evaluation monte_carlo_g(const DistributionView& view, std::span<const int> regime, const IntegratorSettings& integ)
{
    if (integ.mc_samples == 0) throw InvalidParameter("mc_samples must be positive");
    const std::size_t T = regime.size();
    const std::size_t d = view.layout().covariate_dim;
    const std::size_t N = integ.mc_samples;

    std::vector<std::vector<MixtureComponent>> comps(T);
    for (std::size_t t = 0; t < T; ++t) view.stage_components(t, 1.0, t, comps[t]);

    std::vector<std::vector<std::vector<double>>> draws(T);
    std::vector<std::vector<std::vector<double>>> q(T);
    for (std::size_t t = 0; t < T; ++t) {
        draws[t].resize(comps[t].size());
        q[t].resize(comps[t].size());
        for (std::size_t c = 0; c < comps[t].size(); ++c) {
            if (comps[t][c].weight == 0.0) continue;
            Rng rng(mix_seed(integ.seed, comps[t][c].stream));
            auto& dr = draws[t][c];
            dr.resize(N * d);
            q[t][c].resize(N);
            for (std::size_t k = 0; k < N; ++k) {
                std::span<double> x(dr.data() + k * d, d);
                comps[t][c].draw(rng, x);
                q[t][c][k] = view.stage_density(t, x);
            }
        }
    }

    Evaluation ev;
    Integrand f{view, regime, integ, ev.clipped};
    std::vector<std::size_t> combo(T, 0);
    std::vector<double> xbar(T * d);
    double total = 0.0;
    while (true) {
        double w = 1.0;
        for (std::size_t t = 0; t < T; ++t) w *= comps[t][combo[t]].weight;
        if (w != 0.0) {
            double acc = 0.0;
            for (std::size_t k = 0; k < N; ++k) {
                double qk = 1.0;
                for (std::size_t t = 0; t < T; ++t) {
                    std::copy_n(draws[t][combo[t]].begin() + static_cast<std::ptrdiff_t>(k * d), d,
                                xbar.begin() + static_cast<std::ptrdiff_t>(t * d));
                    qk *= q[t][combo[t]][k];
                }
                if (!(qk > 0.0)) continue;
                acc += f(xbar) / qk;
            }
            total += w * acc / static_cast<double>(N);
        }
        std::size_t t = 0;
        while (t < T && ++combo[t] == comps[t].size()) combo[t++] = 0;
        if (t == T) break;
    }
    ev.value = total;
    return ev;
}

}  // namespace

Evaluation dtr_g_formula(const DistributionView& dist, std::span<const int> regime, const IntegratorSettings& integ)
{
    const Layout l = dist.layout();
    if (regime.empty()) throw InvalidParameter("regime horizon T must be at least 1");
    if (regime.size() != l.stages)
        throw LayoutError("regime has " + std::to_string(regime.size()) + " stages, distribution has " +
                          std::to_string(l.stages));
    if (!(integ.overlap_floor > 0.0)) throw InvalidParameter("overlap floor must be positive");

    if (const auto* atoms = dist.atoms()) {
        std::vector<std::size_t> all(atoms->size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        return {discrete_g(*atoms, all, 0, 1.0, regime, l.covariate_dim), 0};
    }

    const bool scalar = l.stages == 1 && l.covariate_dim == 1;
    IntegratorKind kind = integ.kind;
    if (kind == IntegratorKind::Auto) kind = scalar ? IntegratorKind::Quadrature : IntegratorKind::MonteCarlo;
    if (kind == IntegratorKind::Quadrature) {
        if (!scalar) throw InvalidParameter("quadrature needs a single stage with a scalar covariate");
        return quadrature_g(dist, regime, integ);
    }
    return monte_carlo_g(dist, regime, integ);
}

Evaluation mean_potential_outcome(const DistributionView& dist, int arm, const IntegratorSettings& integ)
{
    if (dist.layout().stages != 1) throw LayoutError("mean potential outcome needs a single-stage distribution");
    const int regime[1] = {arm};
    return dtr_g_formula(dist, regime, integ);
}

InducedValue induced_regression(const DistributionView& dist, int arm, std::span<const double> x, double overlap_floor)
{
    if (!(overlap_floor > 0.0)) throw InvalidParameter("overlap floor must be positive");
    const PointQuery q = dist.point_query(x, arm);
    if (q.pax < overlap_floor) return {q.m / overlap_floor, true};
    return {q.m / q.pax, false};
}

InducedValue induced_propensity(const DistributionView& dist, int arm, std::span<const double> x, double overlap_floor)
{
    if (!(overlap_floor > 0.0)) throw InvalidParameter("overlap floor must be positive");
    const PointQuery q = dist.point_query(x, arm);
    bool clipped = false;
    double den = q.px;
    if (den < overlap_floor) {
        den = overlap_floor;
        clipped = true;
    }
    double e = q.pax / den;
    if (e < overlap_floor) {
        e = overlap_floor;
        clipped = true;
    } else if (e > 1.0) {
        e = 1.0;
        clipped = true;
    }
    return {e, clipped};
}

// ---------------------------------------------------------------- spec

namespace {

IntegratorKind parse_integrator_kind(const std::string& s)
{
    if (s == "auto") return IntegratorKind::Auto;
    if (s == "mc" || s == "monte-carlo") return IntegratorKind::MonteCarlo;
    if (s == "quadrature") return IntegratorKind::Quadrature;
    throw InvalidParameter("unknown integrator '" + s + "' (expected auto, mc or quadrature)");
}

std::string integrator_name(IntegratorKind k)
{
    switch (k) {
    case IntegratorKind::Auto: return "auto";
    case IntegratorKind::MonteCarlo: return "mc";
    case IntegratorKind::Quadrature: return "quadrature";
    }
    return "auto";
}

}  // namespace

IntegratorSettings integrator_from_json(const nlohmann::json& ij)
{
    reject_unknown_keys(ij, {"kind", "mc_samples", "seed", "gauss_nodes", "raw_outcome_integral", "overlap_floor"},
                        "integrator settings");
    IntegratorSettings in;
    try {
        if (ij.contains("kind")) in.kind = parse_integrator_kind(ij.at("kind").get<std::string>());
        in.mc_samples = ij.value("mc_samples", in.mc_samples);
        in.seed = ij.value("seed", in.seed);
        in.gauss_nodes = ij.value("gauss_nodes", in.gauss_nodes);
        in.raw_outcome_integral = ij.value("raw_outcome_integral", in.raw_outcome_integral);
        in.overlap_floor = ij.value("overlap_floor", in.overlap_floor);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidParameter(std::string("malformed integrator settings: ") + e.what());
    }
    if (in.mc_samples == 0) throw InvalidParameter("mc_samples must be positive");
    if (!(in.overlap_floor > 0.0)) throw InvalidParameter("overlap_floor must be positive");
    cached_rule(in.gauss_nodes);
    return in;
}

nlohmann::json integrator_to_json(const IntegratorSettings& integ)
{
    return {{"kind", integrator_name(integ.kind)},
            {"mc_samples", integ.mc_samples},
            {"seed", integ.seed},
            {"gauss_nodes", integ.gauss_nodes},
            {"raw_outcome_integral", integ.raw_outcome_integral},
            {"overlap_floor", integ.overlap_floor}};
}

FunctionalSpec FunctionalSpec::from_json(const nlohmann::json& j)
{
    reject_unknown_keys(j, {"kind", "arm", "regime", "T", "integrator"}, "functional spec");
    FunctionalSpec spec;
    try {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "mpo") {
            spec.kind = Kind::MeanPotentialOutcome;
            if (j.contains("regime") || j.contains("T")) throw InvalidParameter("mpo spec takes 'arm', not a regime");
            spec.arm = j.value("arm", 1);
        } else if (kind == "dtr") {
            spec.kind = Kind::DtrValue;
            if (j.contains("arm")) throw InvalidParameter("dtr spec takes 'regime', not 'arm'");
            spec.regime = j.at("regime").get<std::vector<int>>();
            if (spec.regime.empty()) throw InvalidParameter("dtr horizon T must be at least 1");
            if (j.contains("T") && j.at("T").get<std::size_t>() != spec.regime.size())
                throw InvalidParameter("dtr 'T' does not match the regime length");
        } else {
            throw InvalidParameter("unknown functional kind '" + kind + "' (expected mpo or dtr)");
        }
        if (j.contains("integrator")) spec.integ = integrator_from_json(j.at("integrator"));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidParameter(std::string("malformed functional spec: ") + e.what());
    }
    return spec;
}

nlohmann::json FunctionalSpec::to_json() const
{
    nlohmann::json j;
    if (kind == Kind::MeanPotentialOutcome) {
        j["kind"] = "mpo";
        j["arm"] = arm;
    } else {
        j["kind"] = "dtr";
        j["regime"] = regime;
        j["T"] = regime.size();
    }
    j["integrator"] = integrator_to_json(integ);
    return j;
}

Functional make_functional(const FunctionalSpec& spec)
{
    if (spec.kind == FunctionalSpec::Kind::MeanPotentialOutcome)
        return [arm = spec.arm, integ = spec.integ](const DistributionView& v) {
            return mean_potential_outcome(v, arm, integ);
        };
    if (spec.regime.empty()) throw InvalidParameter("dtr horizon T must be at least 1");
    return [regime = spec.regime, integ = spec.integ](const DistributionView& v) {
        return dtr_g_formula(v, regime, integ);
    };
}

}  // namespace gateaux
