#include "gateaux/gateaux.hpp"

#include "gateaux/dataset_io.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace gateaux {

SchemeKind DiffScheme::parse(const std::string& name)
{
    if (name == "forward") return SchemeKind::Forward;
    if (name == "central") return SchemeKind::Central;
    throw InvalidParameter("unknown difference scheme '" + name + "' (expected forward or central)");
}

void validate_eps(double eps)
{
    if (!(eps > 0.0)) throw InvalidParameter("eps must be positive");
    if (eps < kMinEps) throw InvalidParameter("eps must be at least 1e-12");
    if (!(eps < 1.0)) throw InvalidParameter("eps must be below 1");
}

Direction direction_toward(const DistributionView& base, const Observation& o, const PerturbationSettings& pert)
{
    if (!(o.layout() == base.layout())) throw LayoutError("observation layout does not match the base distribution");
    if (base.is_discrete()) return DiracAtom{o};
    if (!(pert.lambda > 0.0)) throw InvalidParameter("lambda must be positive");
    return SmoothedDelta::at(o, pert.lambda, pert.x_kernel, pert.y_kernel);
}

GateauxValue empirical_gateaux(const Functional& fnl, const ViewPtr& base, const Observation& o,
                               const DiffScheme& scheme, const PerturbationSettings& pert,
                               std::optional<double> base_value)
{
    validate_eps(scheme.eps);
    const Direction dir = direction_toward(*base, o, pert);
    GateauxValue out;

    if (scheme.kind == SchemeKind::Central) {
        const auto plus = perturb_signed(base, dir, scheme.eps);
        const auto minus = perturb_signed(base, dir, -scheme.eps);
        if (minus->nonnegative()) {
            const Evaluation ep = fnl(*plus);
            const Evaluation em = fnl(*minus);
            if (!minus->saw_negative()) {
                out.value = (ep.value - em.value) / (2.0 * scheme.eps);
                out.clipped = ep.clipped + em.clipped;
                return out;
            }
        }
        out.central_fallback = true;
    }

    const double psi0 = base_value ? *base_value : fnl(*base).value;
    const Evaluation ep = fnl(*perturb(base, dir, scheme.eps));
    out.value = (ep.value - psi0) / scheme.eps;
    out.clipped += ep.clipped;
    return out;
}

double GateauxReport::mean_phi() const
{
    double sum = 0.0;
    std::size_t count = 0;
    for (double v : phi)
        if (!std::isnan(v)) {
            sum += v;
            ++count;
        }
    return count ? sum / static_cast<double>(count) : 0.0;
}

nlohmann::json GateauxReport::to_json() const
{
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["n"] = phi.size();
    j["plugin"] = plugin;
    j["one_step"] = one_step;
    j["mean_phi"] = mean_phi();
    j["eps"] = eps;
    j["lambda"] = lambda;
    j["scheme"] = scheme;
    j["clip_count"] = clip_count;
    j["fallback_count"] = fallback_count;
    auto& p = j["phi"] = nlohmann::json::array();
    for (double v : phi) p.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
    auto& f = j["failures"] = nlohmann::json::array();
    for (const auto& e : failures) f.push_back({{"index", e.index}, {"message", e.message}});
    if (!basis_changed.empty()) {
        std::size_t changed = 0;
        for (bool b : basis_changed) changed += b ? 1 : 0;
        j["basis_changed"] = basis_changed;
        j["basis_change_count"] = changed;
    }
    return j;
}

GateauxReport one_step(const Functional& fnl, const ViewPtr& base, const Dataset& data, const DiffScheme& scheme,
                       const PerturbationSettings& pert, std::size_t threads)
{
    if (data.empty()) throw InvalidInput("one-step estimation needs a nonempty dataset");
    validate_eps(scheme.eps);
    if (!base->is_discrete() && !(pert.lambda > 0.0)) throw InvalidParameter("lambda must be positive");

    GateauxReport rep;
    rep.plugin = fnl(*base).value;
    rep.eps = scheme.eps;
    rep.lambda = base->is_discrete() ? 0.0 : pert.lambda;
    rep.scheme = scheme.name();

    const std::size_t n = data.size();
    std::vector<double> phi(n, std::numeric_limits<double>::quiet_NaN());
    std::vector<std::string> errors(n);
    std::vector<std::size_t> clips(n, 0);
    std::vector<char> fallback(n, 0);
    parallel_for(n, threads, [&](std::size_t i) {
        try {
            const GateauxValue g = empirical_gateaux(fnl, base, data.rows[i], scheme, pert, rep.plugin);
            phi[i] = g.value;
            clips[i] = g.clipped;
            fallback[i] = g.central_fallback ? 1 : 0;
            if (!std::isfinite(g.value)) errors[i] = "non-finite derivative";
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });

    std::size_t ok = 0;
    for (std::size_t i = 0; i < n; ++i) {
        rep.clip_count += clips[i];
        rep.fallback_count += static_cast<std::size_t>(fallback[i]);
        if (errors[i].empty()) {
            ++ok;
        } else {
            phi[i] = std::numeric_limits<double>::quiet_NaN();
            rep.failures.push_back({i, errors[i]});
        }
    }
    rep.phi = std::move(phi);
    if (static_cast<double>(ok) < kMinSuccessShare * static_cast<double>(n)) {
        std::ostringstream msg;
        msg << "derivative failed on " << n - ok << " of " << n << " observations";
        if (!rep.failures.empty()) msg << " (first: index " << rep.failures.front().index << ": " << rep.failures.front().message << ")";
        throw NumericError(msg.str());
    }
    rep.one_step = rep.plugin + rep.mean_phi();
    return rep;
}

std::string SweepResult::to_csv() const
{
    std::ostringstream out;
    out << "eps";
    for (double l : lambda_grid) out << ",lambda=" << format_double(l);
    out << '\n';
    for (std::size_t e = 0; e < eps_grid.size(); ++e) {
        out << format_double(eps_grid[e]);
        for (double v : mae[e]) out << ',' << (std::isnan(v) ? std::string("nan") : format_double(v));
        out << '\n';
    }
    return out.str();
}

SweepResult sweep(const Functional& fnl, const ViewPtr& base, const Dataset& data, const std::vector<double>& eps_grid,
                  const std::vector<double>& lambda_grid, const SweepReference& reference, SchemeKind scheme,
                  Kernel x_kernel, Kernel y_kernel, std::size_t threads)
{
    if (eps_grid.empty() || lambda_grid.empty()) throw InvalidParameter("sweep grids must be nonempty");
    if (data.empty()) throw InvalidInput("sweep needs a nonempty dataset");
    if (!reference) throw InvalidParameter("sweep needs a reference");
    for (double e : eps_grid) validate_eps(e);
    for (double l : lambda_grid)
        if (!(l > 0.0)) throw InvalidParameter("lambda must be positive");

    SweepResult res{eps_grid, lambda_grid,
                    std::vector<std::vector<double>>(eps_grid.size(), std::vector<double>(lambda_grid.size()))};
    const double psi0 = fnl(*base).value;
    const std::size_t n = data.size();
    const std::size_t cells = eps_grid.size() * lambda_grid.size();
    std::vector<double> err(cells * n, std::numeric_limits<double>::quiet_NaN());
    parallel_for(cells * n, threads, [&](std::size_t k) {
        const std::size_t cell = k / n, i = k % n;
        const double eps = eps_grid[cell / lambda_grid.size()];
        const double lambda = lambda_grid[cell % lambda_grid.size()];
        try {
            const PerturbationSettings pert{lambda, x_kernel, y_kernel};
            const double phi = empirical_gateaux(fnl, base, data.rows[i], {scheme, eps}, pert, psi0).value;
            err[k] = std::abs(phi - reference(data.rows[i], eps, lambda));
        } catch (const std::exception&) {
        }
    });
    for (std::size_t cell = 0; cell < cells; ++cell) {
        double sum = 0.0;
        std::size_t ok = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = err[cell * n + i];
            if (std::isfinite(v)) {
                sum += v;
                ++ok;
            }
        }
        const double mae = static_cast<double>(ok) >= kMinSuccessShare * static_cast<double>(n)
                               ? sum / static_cast<double>(ok)
                               : std::numeric_limits<double>::quiet_NaN();
        res.mae[cell / lambda_grid.size()][cell % lambda_grid.size()] = mae;
    }
    return res;
}

}  // namespace gateaux
