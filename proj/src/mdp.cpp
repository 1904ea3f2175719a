#include "gateaux/mdp.hpp"

#include "gateaux/json_util.hpp"
#include "gateaux/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace gateaux {

namespace {

void require(bool ok, const std::string& msg)
{
    if (!ok) throw InvalidInput(msg);
}

std::string sense_name(Sense s)
{
    switch (s) {
    case Sense::LessEqual: return "<=";
    case Sense::Equal: return "=";
    case Sense::GreaterEqual: return ">=";
    }
    return "<=";
}

Sense parse_sense(const std::string& s)
{
    if (s == "<=" || s == "le") return Sense::LessEqual;
    if (s == "=" || s == "==" || s == "eq") return Sense::Equal;
    if (s == ">=" || s == "ge") return Sense::GreaterEqual;
    throw InvalidParameter("unknown constraint sense '" + s + "'");
}

struct BuiltLP {
    LinearProgram lp;
    std::size_t n_mu = 0;
};

BuiltLP build_lp(const TabularMDP& mdp, const LinearConstraintSet& cons)
{
    const std::size_t nS = mdp.nS, nA = mdp.nA, nmu = nS * nA;
    std::size_t slacks = 0;
    for (const auto& row : cons.rows) slacks += row.sense == Sense::Equal ? 0 : 1;
    const auto m = static_cast<Eigen::Index>(nS + cons.rows.size());
    const auto n = static_cast<Eigen::Index>(nmu + slacks);
    BuiltLP out;
    out.n_mu = nmu;
    auto& lp = out.lp;
    lp.A = Eigen::MatrixXd::Zero(m, n);
    lp.b = Eigen::VectorXd::Zero(m);
    lp.c = Eigen::VectorXd::Zero(n);
    for (std::size_t s = 0; s < nS; ++s)
        for (std::size_t a = 0; a < nA; ++a) {
            const auto col = static_cast<Eigen::Index>(s * nA + a);
            lp.c(col) = mdp.r[s][a];
            lp.A(static_cast<Eigen::Index>(s), col) += 1.0;
            for (std::size_t sp = 0; sp < nS; ++sp) lp.A(static_cast<Eigen::Index>(sp), col) -= mdp.gamma * mdp.P[s][a][sp];
        }
    for (std::size_t sp = 0; sp < nS; ++sp) lp.b(static_cast<Eigen::Index>(sp)) = (1.0 - mdp.gamma) * mdp.mu0[sp];
    std::size_t slack = nmu;
    for (std::size_t k = 0; k < cons.rows.size(); ++k) {
        const auto row = static_cast<Eigen::Index>(nS + k);
        const auto& c = cons.rows[k];
        for (std::size_t s = 0; s < nS; ++s)
            for (std::size_t a = 0; a < nA; ++a) lp.A(row, static_cast<Eigen::Index>(s * nA + a)) = c.coef[s][a];
        lp.b(row) = c.rhs;
        if (c.sense != Sense::Equal) lp.A(row, static_cast<Eigen::Index>(slack++)) = c.sense == Sense::LessEqual ? 1.0 : -1.0;
    }
    return out;
}

void check_triple(const TabularMDP& mdp, const Triple& o)
{
    if (o.s < 0 || o.a < 0 || o.s_next < 0 || static_cast<std::size_t>(o.s) >= mdp.nS ||
        static_cast<std::size_t>(o.a) >= mdp.nA || static_cast<std::size_t>(o.s_next) >= mdp.nS)
        throw InvalidInput("triple (" + std::to_string(o.s) + "," + std::to_string(o.a) + "," + std::to_string(o.s_next) +
                           ") is outside the MDP");
}

}  // namespace

// ---------------------------------------------------------------- TabularMDP

void TabularMDP::validate() const
{
    require(nS >= 1 && nA >= 1, "MDP needs at least one state and one action");
    require(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
    require(P.size() == nS && r.size() == nS && mu0.size() == nS && d.size() == nS, "MDP arrays must have nS rows");
    double mu_total = 0.0, d_total = 0.0;
    for (std::size_t s = 0; s < nS; ++s) {
        require(P[s].size() == nA && r[s].size() == nA && d[s].size() == nA, "MDP arrays must have nA columns");
        require(mu0[s] >= 0.0, "mu0 must be nonnegative");
        mu_total += mu0[s];
        for (std::size_t a = 0; a < nA; ++a) {
            require(P[s][a].size() == nS, "transition rows must have nS entries");
            require(std::isfinite(r[s][a]), "rewards must be finite");
            require(d[s][a] >= 0.0, "occupancy d must be nonnegative");
            d_total += d[s][a];
            double row = 0.0;
            for (double p : P[s][a]) {
                require(p >= 0.0, "transition probabilities must be nonnegative");
                row += p;
            }
            require(std::abs(row - 1.0) <= 1e-12, "transition row (" + std::to_string(s) + "," + std::to_string(a) +
                                                      ") does not sum to 1");
        }
    }
    require(std::abs(mu_total - 1.0) <= 1e-12, "mu0 must sum to 1");
    require(std::abs(d_total - 1.0) <= 1e-12, "occupancy d must sum to 1");
}

TabularMDP TabularMDP::from_json(const nlohmann::json& j)
{
    reject_unknown_keys<InvalidInput>(j, {"nS", "nA", "gamma", "P", "r", "mu0", "d"}, "MDP spec");
    TabularMDP m;
    try {
        m.nS = j.at("nS").get<std::size_t>();
        m.nA = j.at("nA").get<std::size_t>();
        m.gamma = j.at("gamma").get<double>();
        m.P = j.at("P").get<std::vector<std::vector<std::vector<double>>>>();
        m.r = j.at("r").get<std::vector<std::vector<double>>>();
        m.mu0 = j.at("mu0").get<std::vector<double>>();
        if (j.contains("d")) {
            m.d = j.at("d").get<std::vector<std::vector<double>>>();
        } else {
            m.d.assign(m.nS, std::vector<double>(m.nA, 1.0 / static_cast<double>(m.nS * m.nA)));
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("malformed MDP spec: ") + e.what());
    }
    m.validate();
    return m;
}

nlohmann::json TabularMDP::to_json() const
{
    return {{"nS", nS}, {"nA", nA}, {"gamma", gamma}, {"P", P}, {"r", r}, {"mu0", mu0}, {"d", d}};
}

// ---------------------------------------------------------------- constraints

void LinearConstraintSet::validate(std::size_t nS, std::size_t nA) const
{
    for (const auto& row : rows) {
        require(row.coef.size() == nS, "constraint coefficients must have nS rows");
        for (const auto& c : row.coef) {
            require(c.size() == nA, "constraint coefficients must have nA columns");
            for (double v : c) require(std::isfinite(v), "constraint coefficients must be finite");
        }
        require(std::isfinite(row.rhs), "constraint bound must be finite");
    }
}

LinearConstraintSet LinearConstraintSet::from_json(const nlohmann::json& j)
{
    reject_unknown_keys<InvalidInput>(j, {"constraints"}, "constraint file");
    LinearConstraintSet set;
    try {
        for (const auto& row : j.at("constraints")) {
            reject_unknown_keys<InvalidInput>(row, {"coef", "sense", "rhs"}, "constraint row");
            LinearConstraint c;
            c.coef = row.at("coef").get<std::vector<std::vector<double>>>();
            c.sense = parse_sense(row.value("sense", std::string("<=")));
            c.rhs = row.at("rhs").get<double>();
            set.rows.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("malformed constraint file: ") + e.what());
    }
    return set;
}

nlohmann::json LinearConstraintSet::to_json() const
{
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : rows) arr.push_back({{"coef", c.coef}, {"sense", sense_name(c.sense)}, {"rhs", c.rhs}});
    return {{"constraints", arr}};
}

// ---------------------------------------------------------------- LP

nlohmann::json LPSolution::to_json() const
{
    return {{"objective", objective}, {"V", V},       {"mu", mu},           {"constraint_duals", constraint_duals},
            {"basis", basis},         {"policy", policy}, {"degenerate", degenerate}, {"iterations", iterations}};
}

LPSolution solve_policy_lp(const TabularMDP& mdp, const LinearConstraintSet& constraints)
{
    mdp.validate();
    constraints.validate(mdp.nS, mdp.nA);
    const BuiltLP built = build_lp(mdp, constraints);
    const SimplexResult res = simplex_maximize(built.lp);

    LPSolution sol;
    sol.objective = res.objective;
    sol.degenerate = res.degenerate;
    sol.iterations = res.iterations;
    sol.basis = res.basis;
    sol.V.assign(res.y.data(), res.y.data() + mdp.nS);
    sol.constraint_duals.assign(res.y.data() + mdp.nS, res.y.data() + res.y.size());
    sol.mu.assign(mdp.nS, std::vector<double>(mdp.nA, 0.0));
    sol.policy.assign(mdp.nS, 0);
    for (std::size_t s = 0; s < mdp.nS; ++s) {
        for (std::size_t a = 0; a < mdp.nA; ++a) sol.mu[s][a] = res.x(static_cast<Eigen::Index>(s * mdp.nA + a));
        sol.policy[s] = static_cast<std::size_t>(std::max_element(sol.mu[s].begin(), sol.mu[s].end()) - sol.mu[s].begin());
    }
    return sol;
}

DualityCheck check_duality(const TabularMDP& mdp, const LPSolution& sol, const LinearConstraintSet& constraints)
{
    const BuiltLP built = build_lp(mdp, constraints);
    const auto& lp = built.lp;
    Eigen::VectorXd y(lp.A.rows());
    for (std::size_t s = 0; s < mdp.nS; ++s) y(static_cast<Eigen::Index>(s)) = sol.V[s];
    for (std::size_t k = 0; k < sol.constraint_duals.size(); ++k)
        y(static_cast<Eigen::Index>(mdp.nS + k)) = sol.constraint_duals[k];
    Eigen::VectorXd x = Eigen::VectorXd::Zero(lp.A.cols());
    for (std::size_t s = 0; s < mdp.nS; ++s)
        for (std::size_t a = 0; a < mdp.nA; ++a) x(static_cast<Eigen::Index>(s * mdp.nA + a)) = sol.mu[s][a];
    // slack values follow from the constraint rows
    std::size_t slack = built.n_mu;
    for (std::size_t k = 0; k < constraints.rows.size(); ++k) {
        const auto& c = constraints.rows[k];
        if (c.sense == Sense::Equal) continue;
        const auto row = static_cast<Eigen::Index>(mdp.nS + k);
        const double lhs = lp.A.row(row).head(static_cast<Eigen::Index>(built.n_mu)).dot(x.head(static_cast<Eigen::Index>(built.n_mu)));
        x(static_cast<Eigen::Index>(slack)) = c.sense == Sense::LessEqual ? c.rhs - lhs : lhs - c.rhs;
        ++slack;
    }

    DualityCheck chk;
    const Eigen::VectorXd rc = lp.c - lp.A.transpose() * y;
    for (Eigen::Index j = 0; j < rc.size(); ++j) chk.primal_violation = std::max(chk.primal_violation, rc(j));
    const Eigen::VectorXd resid = lp.A * x - lp.b;
    chk.dual_violation = resid.cwiseAbs().maxCoeff();
    for (Eigen::Index j = 0; j < x.size(); ++j) chk.dual_violation = std::max(chk.dual_violation, -x(j));
    chk.gap = std::abs(lp.b.dot(y) - lp.c.dot(x));
    return chk;
}

// ---------------------------------------------------------------- perturbation and derivatives

TabularMDP perturb_mdp(const TabularMDP& mdp, const Triple& o, double eps, PerturbTarget target)
{
    if (!(eps >= 0.0 && eps < 1.0)) throw InvalidParameter("eps must lie in [0, 1)");
    check_triple(mdp, o);
    TabularMDP out = mdp;
    if (eps == 0.0) return out;  // the ratio form would round P
    const auto s = static_cast<std::size_t>(o.s), a = static_cast<std::size_t>(o.a);
    const auto sp = static_cast<std::size_t>(o.s_next);
    if (target != PerturbTarget::InitialState) {
        const double dsa = mdp.d[s][a];
        const double den = (1.0 - eps) * dsa + eps;
        for (std::size_t k = 0; k < mdp.nS; ++k)
            out.P[s][a][k] = ((1.0 - eps) * dsa * mdp.P[s][a][k] + (k == sp ? eps : 0.0)) / den;
        for (std::size_t i = 0; i < mdp.nS; ++i)
            for (std::size_t j = 0; j < mdp.nA; ++j) out.d[i][j] = (1.0 - eps) * mdp.d[i][j] + (i == s && j == a ? eps : 0.0);
    }
    if (target != PerturbTarget::Transitions)
        for (std::size_t i = 0; i < mdp.nS; ++i) out.mu0[i] = (1.0 - eps) * mdp.mu0[i] + (i == s ? eps : 0.0);
    return out;
}

FdResult fd_derivative(const TabularMDP& mdp, const Triple& o, double eps, const LinearConstraintSet& constraints,
                       const LPSolution* base, PerturbTarget target)
{
    validate_eps(eps);
    LPSolution own;
    if (!base) {
        own = solve_policy_lp(mdp, constraints);
        base = &own;
    }
    const LPSolution pert = solve_policy_lp(perturb_mdp(mdp, o, eps, target), constraints);
    return {(pert.objective - base->objective) / eps, pert.basis == base->basis, pert.objective};
}

ValueIterationResult value_iteration(const TabularMDP& mdp, double tol)
{
    if (!(tol > 0.0)) throw InvalidParameter("value iteration tolerance must be positive");
    // gamma = 0 is outside the LP model but well defined here (one greedy sweep)
    if (mdp.gamma == 0.0) {
        TabularMDP shape = mdp;
        shape.gamma = 0.5;
        shape.validate();
    } else {
        mdp.validate();
    }
    ValueIterationResult res;
    res.V.assign(mdp.nS, 0.0);
    res.policy.assign(mdp.nS, 0);
    // max_a r / (1 - gamma) is the exact answer for absorbing single-action chains
    for (std::size_t s = 0; s < mdp.nS; ++s)
        res.V[s] = *std::max_element(mdp.r[s].begin(), mdp.r[s].end()) / (1.0 - mdp.gamma);
    std::vector<double> next(mdp.nS);
    for (std::size_t it = 1; it <= 1000000; ++it) {
        double resid = 0.0;
        for (std::size_t s = 0; s < mdp.nS; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t a = 0; a < mdp.nA; ++a) {
                double q = mdp.r[s][a];
                for (std::size_t k = 0; k < mdp.nS; ++k) q += mdp.gamma * mdp.P[s][a][k] * res.V[k];
                if (q > best) {
                    best = q;
                    res.policy[s] = a;
                }
            }
            next[s] = best;
            resid = std::max(resid, std::abs(best - res.V[s]));
        }
        res.iterations = it;
        if (resid <= tol) return res;
        res.V.swap(next);
    }
    throw NumericError("value iteration did not converge");
}

TabularMDP estimate_mdp(const std::vector<Triple>& triples, const TabularMDP& known)
{
    if (triples.empty()) throw InvalidInput("no transition triples");
    TabularMDP m = known;
    std::vector<std::vector<double>> counts(m.nS, std::vector<double>(m.nA, 0.0));
    std::vector<std::vector<std::vector<double>>> next(m.nS, std::vector<std::vector<double>>(m.nA, std::vector<double>(m.nS, 0.0)));
    for (const auto& t : triples) {
        check_triple(m, t);
        counts[static_cast<std::size_t>(t.s)][static_cast<std::size_t>(t.a)] += 1.0;
        next[static_cast<std::size_t>(t.s)][static_cast<std::size_t>(t.a)][static_cast<std::size_t>(t.s_next)] += 1.0;
    }
    std::ostringstream unseen;
    std::size_t missing = 0;
    const double n = static_cast<double>(triples.size());
    for (std::size_t s = 0; s < m.nS; ++s)
        for (std::size_t a = 0; a < m.nA; ++a) {
            if (counts[s][a] == 0.0) {
                unseen << (missing++ ? ", " : "") << '(' << s << ',' << a << ')';
                continue;
            }
            m.d[s][a] = counts[s][a] / n;
            for (std::size_t k = 0; k < m.nS; ++k) m.P[s][a][k] = next[s][a][k] / counts[s][a];
        }
    if (missing) throw SupportError("state-action pairs never observed in the triples: " + unseen.str());
    return m;
}

namespace {

struct TripleLess {
    bool operator()(const Triple& x, const Triple& y) const
    {
        return std::tie(x.s, x.a, x.s_next) < std::tie(y.s, y.a, y.s_next);
    }
};

/// Per-triple derivative under the chosen weighting, with basis-stability flags.
struct TripleDerivatives {
    std::map<Triple, FdResult, TripleLess> values;
    double initial_term = 0.0;  // InitialState weighting: mu0-average of the mu0 part
    bool initial_basis_changed = false;
};

TripleDerivatives triple_derivatives(const TabularMDP& mdp, const LPSolution& sol, const std::vector<Triple>& triples,
                                     double eps, const LinearConstraintSet& cons, Weighting weighting, std::size_t threads)
{
    TripleDerivatives out;
    std::vector<Triple> unique;
    {
        std::map<Triple, int, TripleLess> seen;
        for (const auto& t : triples)
            if (seen.emplace(t, 0).second) unique.push_back(t);
    }
    const PerturbTarget target = weighting == Weighting::Occupancy ? PerturbTarget::Both : PerturbTarget::Transitions;
    std::vector<FdResult> fd(unique.size());
    std::vector<std::string> err(unique.size());
    parallel_for(unique.size(), threads, [&](std::size_t i) {
        try {
            fd[i] = fd_derivative(mdp, unique[i], eps, cons, &sol, target);
        } catch (const std::exception& e) {
            err[i] = e.what();
        }
    });
    for (std::size_t i = 0; i < unique.size(); ++i) {
        if (!err[i].empty()) throw NumericError(err[i]);
        out.values[unique[i]] = fd[i];
    }
    if (weighting == Weighting::InitialState) {
        for (std::size_t s = 0; s < mdp.nS; ++s) {
            if (mdp.mu0[s] == 0.0) continue;
            const FdResult f = fd_derivative(mdp, {static_cast<int>(s), 0, 0}, eps, cons, &sol, PerturbTarget::InitialState);
            out.initial_term += mdp.mu0[s] * f.value;
            out.initial_basis_changed = out.initial_basis_changed || !f.basis_stable;
        }
    }
    return out;
}

}  // namespace

GateauxReport one_step_policy_value(const TabularMDP& known, const std::vector<Triple>& triples, double eps,
                                    const LinearConstraintSet& constraints, Weighting weighting, std::size_t threads)
{
    validate_eps(eps);
    const TabularMDP mdp = estimate_mdp(triples, known);
    const LPSolution sol = solve_policy_lp(mdp, constraints);
    const TripleDerivatives der = triple_derivatives(mdp, sol, triples, eps, constraints, weighting, threads);

    GateauxReport rep;
    rep.plugin = sol.objective;
    rep.eps = eps;
    rep.lambda = 0.0;
    rep.scheme = "forward";
    rep.phi.reserve(triples.size());
    for (const auto& t : triples) {
        const FdResult& f = der.values.at(t);
        rep.phi.push_back(f.value + der.initial_term);
        rep.basis_changed.push_back(!f.basis_stable || der.initial_basis_changed);
    }
    rep.one_step = rep.plugin + rep.mean_phi();
    return rep;
}

double weighted_adjustment(const TabularMDP& mdp, const std::vector<Triple>& triples, const std::vector<double>& weights,
                           double eps, const LinearConstraintSet& constraints, Weighting weighting)
{
    if (weights.size() != triples.size()) throw InvalidParameter("one weight per triple required");
    validate_eps(eps);
    const LPSolution sol = solve_policy_lp(mdp, constraints);
    const TripleDerivatives der = triple_derivatives(mdp, sol, triples, eps, constraints, weighting, 1);
    double total = 0.0;
    for (std::size_t i = 0; i < triples.size(); ++i) total += weights[i] * (der.values.at(triples[i]).value + der.initial_term);
    return total;
}

}  // namespace gateaux
