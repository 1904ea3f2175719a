#include "gateaux/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>

namespace gateaux {

namespace {

double value_of(long double x) { return static_cast<double>(x); }
double value_of(Dual x) { return x.v; }

/// Mass of atoms whose first `x_stages` covariate blocks equal those of `xb`
/// and whose first `a_count` treatments follow the regime.
template <class S>
S prefix_mass(const std::vector<Observation>& obs, const std::vector<S>& mass, const std::vector<double>& xb,
              std::size_t x_stages, std::size_t a_count, std::span<const int> regime, std::size_t d)
{
    S s{};
    for (std::size_t i = 0; i < obs.size(); ++i) {
        if (!std::equal(xb.begin(), xb.begin() + static_cast<std::ptrdiff_t>(x_stages * d), obs[i].x.begin())) continue;
        if (!std::equal(regime.begin(), regime.begin() + static_cast<std::ptrdiff_t>(a_count), obs[i].a.begin())) continue;
        s += mass[i];
    }
    return s;
}

/// g-formula as a sum over every distinct covariate history in the support.
template <class S>
S brute_g(const std::vector<Observation>& obs, const std::vector<S>& mass, std::span<const int> regime, std::size_t d)
{
    const std::size_t T = regime.size();
    std::set<std::vector<double>> histories;
    for (const auto& o : obs) histories.insert(o.x);
    S total{};
    for (const auto& xb : histories) {
        S val = prefix_mass(obs, mass, xb, 1, 0, regime, d);
        if (value_of(val) == 0.0) continue;
        for (std::size_t t = 0; t < T; ++t) {
            const S on = prefix_mass(obs, mass, xb, t + 1, t + 1, regime, d);
            if (value_of(on) == 0.0)
                throw DegenerateError("history prefix has zero probability under the regime at stage " + std::to_string(t));
            if (t + 1 < T) {
                const S num = prefix_mass(obs, mass, xb, t + 2, t + 1, regime, d);
                if (value_of(num) == 0.0) break;
                val = val * num / on;
            } else {
                S ysum{};
                for (std::size_t i = 0; i < obs.size(); ++i)
                    if (obs[i].x == xb && std::equal(regime.begin(), regime.end(), obs[i].a.begin()))
                        ysum += mass[i] * S{obs[i].y};
                total += val * ysum / on;
            }
        }
    }
    return total;
}

}  // namespace

// ---------------------------------------------------------------- nuisances

Nuisances true_nuisances(std::shared_ptr<const DiscreteDistribution> dist, int arm, double overlap_floor)
{
    Nuisances n;
    n.source = Nuisances::Source::TrueDgp;
    n.arm = arm;
    n.mu = [dist, arm](std::span<const double> x) {
        double num = 0.0, den = 0.0;
        for (const auto& at : *dist->atoms())
            if (at.obs.a[0] == arm && std::equal(x.begin(), x.end(), at.obs.x.begin())) {
                num += at.mass * at.obs.y;
                den += at.mass;
            }
        if (den == 0.0) throw DegenerateError("no mass on the arm at this covariate value");
        return num / den;
    };
    n.e = [dist, arm, overlap_floor](std::span<const double> x) {
        double on = 0.0, all = 0.0;
        for (const auto& at : *dist->atoms())
            if (std::equal(x.begin(), x.end(), at.obs.x.begin())) {
                all += at.mass;
                if (at.obs.a[0] == arm) on += at.mass;
            }
        if (all == 0.0) throw DegenerateError("covariate value outside the support");
        return std::clamp(on / all, overlap_floor, 1.0);
    };
    return n;
}

Nuisances induced_nuisances(ViewPtr view, int arm, double overlap_floor)
{
    Nuisances n;
    n.source = Nuisances::Source::Induced;
    n.arm = arm;
    n.mu = [view, arm, overlap_floor](std::span<const double> x) {
        return induced_regression(*view, arm, x, overlap_floor).value;
    };
    n.e = [view, arm, overlap_floor](std::span<const double> x) {
        return induced_propensity(*view, arm, x, overlap_floor).value;
    };
    return n;
}

double aipw_score(const Nuisances& nuis, double psi, const Observation& o)
{
    const std::span<const double> x = o.x;
    const double mu = nuis.mu(x);
    const double treated = o.a.at(0) == nuis.arm ? 1.0 : 0.0;
    const double correction = treated == 0.0 ? 0.0 : treated / nuis.e(x) * (o.y - mu);
    return correction + mu - psi;
}

// ---------------------------------------------------------------- discrete derivatives

double exact_derivative_discrete(std::span<const int> regime, const DiscreteDistribution& dist, const Observation& o)
{
    const Layout l = dist.layout();
    if (!(o.layout() == l)) throw LayoutError("observation layout does not match the distribution");
    if (regime.size() != l.stages) throw LayoutError("regime length does not match the number of stages");
    const auto& atoms = *dist.atoms();
    std::vector<Observation> obs;
    for (const auto& at : atoms) obs.push_back(at.obs);

    if (const auto hit = dist.find(o)) {
        std::vector<Dual> mass;
        for (std::size_t i = 0; i < atoms.size(); ++i) mass.push_back({atoms[i].mass, (i == *hit ? 1.0 : 0.0) - atoms[i].mass});
        return brute_g(obs, mass, regime, l.covariate_dim).d;
    }

    obs.push_back(o);
    const long double h = 1e-7L;
    auto at_eps = [&](long double eps) {
        std::vector<long double> mass;
        for (const auto& at : atoms) mass.push_back((1.0L - eps) * static_cast<long double>(at.mass));
        mass.push_back(eps);
        return brute_g(obs, mass, regime, l.covariate_dim);
    };
    return static_cast<double>((at_eps(h) - at_eps(-h)) / (2.0L * h));
}

double exact_derivative_discrete(const Functional& fnl, std::shared_ptr<const DiscreteDistribution> dist,
                                 const Observation& o)
{
    if (!(o.layout() == dist->layout())) throw LayoutError("observation layout does not match the distribution");
    const double h = 1e-7;
    const auto plus = perturb_signed(dist, DiracAtom{o}, h);
    const auto minus = perturb_signed(dist, DiracAtom{o}, -h);
    return (fnl(*plus).value - fnl(*minus).value) / (2.0 * h);
}

// ---------------------------------------------------------------- DTR influence function

double dtr_eif(const DiscreteDistribution& dist, std::span<const int> regime, const Observation& o)
{
    const Layout l = dist.layout();
    const std::size_t T = regime.size(), d = l.covariate_dim;
    if (T != l.stages || !(o.layout() == l)) throw LayoutError("observation or regime does not match the distribution");
    std::vector<Observation> obs;
    std::vector<double> mass;
    for (const auto& at : *dist.atoms()) {
        obs.push_back(at.obs);
        mass.push_back(at.mass);
    }
    auto pm = [&](const std::vector<double>& xb, std::size_t xs, std::size_t na) {
        return prefix_mass(obs, mass, xb, xs, na, regime, d);
    };

    // Q_t(x-bar_t) = E[V_{t+1} | x-bar_t, a-bar_t on the regime]
    std::function<double(const std::vector<double>&, std::size_t)> Q = [&](const std::vector<double>& xb, std::size_t t) {
        const double on = pm(xb, t + 1, t + 1);
        if (on == 0.0) throw DegenerateError("history prefix has zero probability under the regime at stage " + std::to_string(t));
        if (t + 1 == T) {
            double ysum = 0.0;
            for (std::size_t i = 0; i < obs.size(); ++i)
                if (obs[i].x == xb && std::equal(regime.begin(), regime.end(), obs[i].a.begin())) ysum += mass[i] * obs[i].y;
            return ysum / on;
        }
        std::set<std::vector<double>> nexts;
        for (std::size_t i = 0; i < obs.size(); ++i)
            if (std::equal(xb.begin(), xb.begin() + static_cast<std::ptrdiff_t>((t + 1) * d), obs[i].x.begin()) &&
                std::equal(regime.begin(), regime.begin() + static_cast<std::ptrdiff_t>(t + 1), obs[i].a.begin()))
                nexts.insert(obs[i].x);
        // group full histories by their stage-(t+1) prefix
        std::set<std::vector<double>> prefixes;
        for (const auto& x : nexts) prefixes.insert(std::vector<double>(x.begin(), x.begin() + static_cast<std::ptrdiff_t>((t + 2) * d)));
        double s = 0.0;
        for (const auto& p : prefixes) {
            std::vector<double> full = p;
            full.resize(xb.size(), 0.0);
            // any completion works: Q_{t+1} only reads the first t+2 blocks
            for (const auto& x : nexts)
                if (std::equal(p.begin(), p.end(), x.begin())) {
                    full = x;
                    break;
                }
            const double num = pm(full, t + 2, t + 1);
            if (num == 0.0) continue;
            s += num / on * Q(full, t + 1);
        }
        return s;
    };

    std::set<std::vector<double>> firsts;
    std::map<std::vector<double>, std::vector<double>> completion;
    for (const auto& x : obs) {
        std::vector<double> x0(x.x.begin(), x.x.begin() + static_cast<std::ptrdiff_t>(d));
        if (firsts.insert(x0).second) completion[x0] = x.x;
    }
    double psi = 0.0;
    for (const auto& x0 : firsts) {
        const double p0 = pm(completion[x0], 1, 0);
        if (p0 == 0.0) continue;
        psi += p0 * Q(completion[x0], 0);
    }

    double eif = Q(o.x, 0) - psi;
    double W = 1.0;
    for (std::size_t t = 0; t < T; ++t) {
        if (o.a[t] != regime[t]) break;
        const double on = pm(o.x, t + 1, t + 1);
        const double reach = pm(o.x, t + 1, t);
        W *= reach / on;
        const double next = t + 1 == T ? o.y : Q(o.x, t + 1);
        eif += W * (next - Q(o.x, t));
    }
    return eif;
}

// ---------------------------------------------------------------- MDP

MdpInfluence mdp_influence_parts(const LPSolution& sol, const TabularMDP& mdp, const Triple& o)
{
    if (o.s < 0 || o.a < 0 || o.s_next < 0 || static_cast<std::size_t>(o.s) >= mdp.nS ||
        static_cast<std::size_t>(o.a) >= mdp.nA || static_cast<std::size_t>(o.s_next) >= mdp.nS)
        throw InvalidInput("triple is outside the MDP");
    const auto s = static_cast<std::size_t>(o.s), a = static_cast<std::size_t>(o.a);
    const auto sp = static_cast<std::size_t>(o.s_next);
    const double dsa = mdp.d[s][a];
    if (!(dsa > 0.0))
        throw SupportError("occupancy d(" + std::to_string(s) + "," + std::to_string(a) + ") is zero");
    double mu0V = 0.0, PV = 0.0;
    for (std::size_t k = 0; k < mdp.nS; ++k) {
        mu0V += mdp.mu0[k] * sol.V[k];
        PV += mdp.P[s][a][k] * sol.V[k];
    }
    MdpInfluence out;
    out.initial = (1.0 - mdp.gamma) * (sol.V[s] - mu0V);
    out.transition = sol.mu[s][a] / dsa * mdp.gamma * (sol.V[sp] - PV);
    return out;
}

double mdp_influence(const LPSolution& sol, const TabularMDP& mdp, const Triple& o)
{
    return mdp_influence_parts(sol, mdp, o).total();
}

}  // namespace gateaux
