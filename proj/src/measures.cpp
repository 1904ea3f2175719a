#include "gateaux/measures.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

namespace gateaux {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599343818684758586311649;

bool same_prefix(const std::vector<int>& a, std::span<const int> prefix)
{
    if (prefix.size() > a.size()) return false;
    for (std::size_t t = 0; t < prefix.size(); ++t)
        if (a[t] != prefix[t]) return false;
    return true;
}

void check_prefix(const Layout& layout, std::span<const double> x_prefix, std::span<const int> a_prefix)
{
    if (x_prefix.size() % layout.covariate_dim != 0 || x_prefix.size() > layout.stages * layout.covariate_dim ||
        a_prefix.size() > layout.stages)
        throw LayoutError("history prefix does not match the distribution layout");
}

void check_full(const Layout& layout, std::span<const double> x, std::span<const int> a)
{
    if (x.size() != layout.stages * layout.covariate_dim || a.size() != layout.stages)
        throw LayoutError("complete history expected");
}

}  // namespace

// ---------------------------------------------------------------- Kernel

double Kernel::operator()(double u) const noexcept
{
    switch (family) {
    case KernelFamily::Uniform:
        return std::abs(u) <= 1.0 ? 0.5 : 0.0;
    case KernelFamily::Gaussian:
        return kInvSqrt2Pi * std::exp(-0.5 * u * u);
    }
    return 0.0;
}

double Kernel::radius() const noexcept
{
    return family == KernelFamily::Uniform ? 1.0 : 8.0;
}

double Kernel::draw(Rng& rng) const
{
    if (family == KernelFamily::Uniform) return std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    return std::normal_distribution<double>(0.0, 1.0)(rng);
}

std::string Kernel::name() const
{
    return family == KernelFamily::Uniform ? "uniform" : "gaussian";
}

Kernel Kernel::parse(std::string_view name)
{
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "uniform") return {KernelFamily::Uniform};
    if (lower == "gaussian") return {KernelFamily::Gaussian};
    throw InvalidParameter("unknown kernel '" + std::string(name) + "' (expected uniform or gaussian)");
}

double kernel_eval(const Kernel& kernel, double u, double lambda)
{
    if (!(lambda > 0.0)) throw InvalidParameter("kernel bandwidth must be positive");
    return kernel(u / lambda) / lambda;
}

// ---------------------------------------------------------------- Observation / Dataset

Layout Observation::layout() const
{
    if (a.empty() || x.size() % a.size() != 0) throw LayoutError("observation has no stages or ragged covariates");
    return {a.size(), x.size() / a.size()};
}

std::span<const double> Observation::stage_x(std::size_t stage) const
{
    const std::size_t d = x.size() / a.size();
    return std::span<const double>(x).subspan(stage * d, d);
}

std::vector<double> Observation::to_point() const
{
    const Layout l = layout();
    std::vector<double> p(l.point_size());
    for (std::size_t t = 0; t < l.stages; ++t) {
        for (std::size_t j = 0; j < l.covariate_dim; ++j) p[l.x_index(t, j)] = x[t * l.covariate_dim + j];
        p[l.a_index(t)] = a[t];
    }
    p[l.y_index()] = y;
    return p;
}

Observation Observation::from_point(std::span<const double> point, const Layout& l)
{
    if (point.size() != l.point_size()) throw LayoutError("point size does not match layout");
    Observation o;
    o.x.resize(l.stages * l.covariate_dim);
    o.a.resize(l.stages);
    for (std::size_t t = 0; t < l.stages; ++t) {
        for (std::size_t j = 0; j < l.covariate_dim; ++j) o.x[t * l.covariate_dim + j] = point[l.x_index(t, j)];
        o.a[t] = static_cast<int>(std::lround(point[l.a_index(t)]));
    }
    o.y = point[l.y_index()];
    return o;
}

void Dataset::validate() const
{
    if (layout.stages == 0 || layout.covariate_dim == 0) throw InvalidInput("dataset layout must have stages and covariates");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.a.size() != layout.stages || r.x.size() != layout.stages * layout.covariate_dim)
            throw InvalidInput("row " + std::to_string(i) + " does not match the dataset layout");
        if (!std::isfinite(r.y) || !std::all_of(r.x.begin(), r.x.end(), [](double v) { return std::isfinite(v); }))
            throw InvalidInput("row " + std::to_string(i) + " has a non-finite value");
    }
}

// ---------------------------------------------------------------- SmoothedDelta

SmoothedDelta::SmoothedDelta(std::vector<double> center, std::vector<bool> discrete_mask, double bandwidth,
                             Kernel kernel)
    : center_(std::move(center)), discrete_(std::move(discrete_mask)), kernels_(center_.size(), kernel),
      bandwidth_(bandwidth)
{
    if (!(bandwidth_ > 0.0)) throw InvalidParameter("smoothing bandwidth lambda must be positive");
    if (discrete_.size() != center_.size()) throw LayoutError("discrete mask and center differ in length");
}

SmoothedDelta SmoothedDelta::at(const Observation& o, double bandwidth, Kernel x_kernel, Kernel y_kernel)
{
    const Layout l = o.layout();
    std::vector<bool> mask(l.point_size(), false);
    for (std::size_t t = 0; t < l.stages; ++t) mask[l.a_index(t)] = true;
    SmoothedDelta delta(o.to_point(), std::move(mask), bandwidth, x_kernel);
    delta.set_kernel(l.y_index(), y_kernel);
    return delta;
}

void SmoothedDelta::set_kernel(std::size_t coord, Kernel kernel)
{
    kernels_.at(coord) = kernel;
}

double SmoothedDelta::factor(std::size_t coord, double value) const noexcept
{
    if (discrete_[coord]) return value == center_[coord] ? 1.0 : 0.0;
    return kernels_[coord]((value - center_[coord]) / bandwidth_) / bandwidth_;
}

double SmoothedDelta::eval(std::span<const double> point) const
{
    if (point.size() != center_.size())
        throw LayoutError("point has " + std::to_string(point.size()) + " coordinates, delta has " +
                          std::to_string(center_.size()));
    double v = 1.0;
    for (std::size_t j = 0; j < center_.size() && v != 0.0; ++j) v *= factor(j, point[j]);
    return v;
}

void SmoothedDelta::draw(Rng& rng, std::span<double> out) const
{
    for (std::size_t j = 0; j < center_.size(); ++j)
        out[j] = discrete_[j] ? center_[j] : center_[j] + bandwidth_ * kernels_[j].draw(rng);
}

// ---------------------------------------------------------------- DistributionView

PointQuery DistributionView::point_query(std::span<const double> x, int a) const
{
    const int arm[1] = {a};
    PointQuery q;
    q.px = marginal(x, {});
    q.pax = marginal(x, arm);
    q.m = outcome_moment(x, arm);
    return q;
}

// ---------------------------------------------------------------- DiscreteDistribution

DiscreteDistribution::DiscreteDistribution(std::vector<Observation> support, std::vector<double> probabilities)
{
    if (support.empty()) throw InvalidInput("discrete distribution needs at least one atom");
    if (support.size() != probabilities.size()) throw InvalidInput("support and probability lists differ in length");
    layout_ = support.front().layout();
    double total = 0.0;
    atoms_.reserve(support.size());
    for (std::size_t i = 0; i < support.size(); ++i) {
        if (!(support[i].layout() == layout_)) throw LayoutError("atoms have inconsistent layouts");
        if (!(probabilities[i] >= 0.0)) throw InvalidInput("atom probabilities must be nonnegative");
        total += probabilities[i];
        atoms_.push_back({std::move(support[i]), probabilities[i]});
    }
    if (std::abs(total - 1.0) > 1e-12) throw InvalidInput("atom probabilities must sum to 1");
}

DiscreteDistribution DiscreteDistribution::empirical(const Dataset& data)
{
    if (data.empty()) throw InvalidInput("empirical distribution of an empty dataset");
    data.validate();
    auto key = [](const Observation& o) { return std::tuple(o.x, o.a, o.y); };
    std::map<decltype(key(data.rows.front())), std::size_t> counts;
    for (const auto& r : data.rows) ++counts[key(r)];
    std::vector<Observation> support;
    std::vector<double> probs;
    const double n = static_cast<double>(data.size());
    for (const auto& [k, c] : counts) {
        support.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k)});
        probs.push_back(static_cast<double>(c) / n);
    }
    // renormalize rounding so the sum check is robust for any n
    const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
    for (auto& p : probs) p /= total;
    return DiscreteDistribution(std::move(support), std::move(probs));
}

double DiscreteDistribution::marginal(std::span<const double> x_prefix, std::span<const int> a_prefix) const
{
    check_prefix(layout_, x_prefix, a_prefix);
    double s = 0.0;
    for (const auto& at : atoms_) {
        if (!same_prefix(at.obs.a, a_prefix)) continue;
        if (!std::equal(x_prefix.begin(), x_prefix.end(), at.obs.x.begin())) continue;
        s += at.mass;
    }
    return s;
}

double DiscreteDistribution::outcome_density(double y, std::span<const double> x, std::span<const int> a) const
{
    check_full(layout_, x, a);
    double s = 0.0;
    for (const auto& at : atoms_)
        if (at.obs.y == y && same_prefix(at.obs.a, a) && std::equal(x.begin(), x.end(), at.obs.x.begin()))
            s += at.mass;
    return s;
}

double DiscreteDistribution::outcome_moment(std::span<const double> x, std::span<const int> a) const
{
    check_full(layout_, x, a);
    double s = 0.0;
    for (const auto& at : atoms_)
        if (same_prefix(at.obs.a, a) && std::equal(x.begin(), x.end(), at.obs.x.begin())) s += at.mass * at.obs.y;
    return s;
}

double DiscreteDistribution::stage_density(std::size_t, std::span<const double>) const
{
    throw Error("stage densities are not defined for discrete distributions");
}

void DiscreteDistribution::stage_components(std::size_t, double, std::uint64_t, std::vector<MixtureComponent>&) const
{
    throw Error("stage mixture components are not defined for discrete distributions");
}

std::optional<std::size_t> DiscreteDistribution::find(const Observation& o) const
{
    for (std::size_t i = 0; i < atoms_.size(); ++i)
        if (atoms_[i].obs == o) return i;
    return std::nullopt;
}

// ---------------------------------------------------------------- KdeModel

KdeModel::KdeModel(Dataset data, double h, Kernel kernel) : data_(std::move(data)), h_(h), kernel_(kernel)
{
    if (data_.empty()) throw InvalidInput("cannot fit a density to an empty dataset");
    if (data_.size() < 2) throw InvalidInput("density estimation needs at least two observations");
    if (!(h_ > 0.0)) throw InvalidParameter("density bandwidth h must be positive");
    data_.validate();

    if (data_.layout.stages == 1 && data_.layout.covariate_dim == 1 && kernel_.family == KernelFamily::Uniform) {
        std::vector<std::size_t> order(data_.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return data_.rows[i].x[0] < data_.rows[j].x[0]; });
        std::map<int, SortedArm> arms;
        for (std::size_t i : order) {
            const auto& r = data_.rows[i];
            sorted_x_.push_back(r.x[0]);
            auto& arm = arms[r.a[0]];
            arm.arm = r.a[0];
            if (arm.y_prefix.empty()) arm.y_prefix.push_back(0.0L);
            arm.x.push_back(r.x[0]);
            arm.y_prefix.push_back(arm.y_prefix.back() + static_cast<long double>(r.y));
        }
        for (auto& [a, arm] : arms) sorted_.push_back(std::move(arm));
    }
}

double KdeModel::weight_x(const Observation& row, std::span<const double> x_prefix) const noexcept
{
    double w = 1.0;
    for (std::size_t j = 0; j < x_prefix.size() && w != 0.0; ++j) w *= kernel_((x_prefix[j] - row.x[j]) / h_) / h_;
    return w;
}

double KdeModel::marginal(std::span<const double> x_prefix, std::span<const int> a_prefix) const
{
    check_prefix(data_.layout, x_prefix, a_prefix);
    double s = 0.0;
    for (const auto& r : data_.rows)
        if (same_prefix(r.a, a_prefix)) s += weight_x(r, x_prefix);
    return s / static_cast<double>(data_.size());
}

double KdeModel::outcome_density(double y, std::span<const double> x, std::span<const int> a) const
{
    check_full(data_.layout, x, a);
    double s = 0.0;
    for (const auto& r : data_.rows)
        if (same_prefix(r.a, a)) s += weight_x(r, x) * (kernel_((y - r.y) / h_) / h_);
    return s / static_cast<double>(data_.size());
}

double KdeModel::outcome_moment(std::span<const double> x, std::span<const int> a) const
{
    check_full(data_.layout, x, a);
    double s = 0.0;
    for (const auto& r : data_.rows)
        if (same_prefix(r.a, a)) s += weight_x(r, x) * r.y;
    return s / static_cast<double>(data_.size());
}

PointQuery KdeModel::point_query_direct(std::span<const double> x, int a) const
{
    if (data_.layout.stages != 1 || x.size() != data_.layout.covariate_dim)
        throw LayoutError("point queries need a single-stage layout");
    PointQuery q;
    for (const auto& r : data_.rows) {
        const double w = weight_x(r, x);
        q.px += w;
        if (r.a[0] == a) {
            q.pax += w;
            q.m += w * r.y;
        }
    }
    const double n = static_cast<double>(data_.size());
    q.px /= n;
    q.pax /= n;
    q.m /= n;
    return q;
}

PointQuery KdeModel::point_query_fast(double x, int a) const
{
    const double height = 0.5 / h_;
    const double n = static_cast<double>(data_.size());
    // same predicate as the direct sum, |(x - x_i) / h| <= 1, so edges agree exactly
    auto count = [&](const std::vector<double>& v, std::size_t& first, std::size_t& last) {
        first = static_cast<std::size_t>(
            std::partition_point(v.begin(), v.end(), [&](double xi) { return (x - xi) / h_ > 1.0; }) - v.begin());
        last = static_cast<std::size_t>(
            std::partition_point(v.begin(), v.end(), [&](double xi) { return (x - xi) / h_ >= -1.0; }) - v.begin());
    };
    PointQuery q;
    std::size_t f = 0, l = 0;
    count(sorted_x_, f, l);
    q.px = static_cast<double>(l - f) * height / n;
    for (const auto& arm : sorted_) {
        if (arm.arm != a) continue;
        count(arm.x, f, l);
        q.pax = static_cast<double>(l - f) * height / n;
        q.m = static_cast<double>(arm.y_prefix[l] - arm.y_prefix[f]) * height / n;
    }
    return q;
}

PointQuery KdeModel::point_query(std::span<const double> x, int a) const
{
    if (has_fast_path() && x.size() == 1) return point_query_fast(x[0], a);
    return point_query_direct(x, a);
}

double KdeModel::nadaraya_watson(std::span<const double> x, int a) const
{
    if (data_.layout.stages != 1 || x.size() != data_.layout.covariate_dim)
        throw LayoutError("Nadaraya-Watson needs a single-stage query");
    double num = 0.0, den = 0.0;
    for (const auto& r : data_.rows) {
        if (r.a[0] != a) continue;
        const double w = weight_x(r, x);
        num += w * r.y;
        den += w;
    }
    if (den == 0.0) throw DegenerateError("no kernel mass for the requested arm at this point");
    return num / den;
}

double KdeModel::stage_density(std::size_t stage, std::span<const double> x_t) const
{
    const std::size_t d = data_.layout.covariate_dim;
    if (stage >= data_.layout.stages || x_t.size() != d) throw LayoutError("stage covariate does not match layout");
    double s = 0.0;
    for (const auto& r : data_.rows) {
        double w = 1.0;
        for (std::size_t j = 0; j < d && w != 0.0; ++j) w *= kernel_((x_t[j] - r.x[stage * d + j]) / h_) / h_;
        s += w;
    }
    return s / static_cast<double>(data_.size());
}

void KdeModel::stage_components(std::size_t stage, double weight, std::uint64_t stream,
                                std::vector<MixtureComponent>& out) const
{
    if (stage >= data_.layout.stages) throw LayoutError("stage out of range");
    const std::size_t d = data_.layout.covariate_dim;
    out.push_back({weight, stream, [this, stage, d](Rng& rng, std::span<double> x) {
                       const auto i = std::uniform_int_distribution<std::size_t>(0, data_.size() - 1)(rng);
                       for (std::size_t j = 0; j < d; ++j) x[j] = data_.rows[i].x[stage * d + j] + h_ * kernel_.draw(rng);
                   }});
}

void KdeModel::breakpoints(int coord, std::vector<double>& out) const
{
    const double r = h_ * kernel_.radius();
    if (coord == kOutcome) {
        for (const auto& row : data_.rows) {
            out.push_back(row.y - r);
            out.push_back(row.y + r);
        }
        return;
    }
    if (data_.layout.covariate_dim != 1 || coord < 0 || static_cast<std::size_t>(coord) >= data_.layout.stages)
        throw LayoutError("breakpoints need a scalar stage covariate");
    for (const auto& row : data_.rows) {
        out.push_back(row.x[static_cast<std::size_t>(coord)] - r);
        out.push_back(row.x[static_cast<std::size_t>(coord)] + r);
    }
}

std::shared_ptr<const KdeModel> fit_kde(const Dataset& data, double h, Kernel kernel)
{
    return std::make_shared<const KdeModel>(data, h, kernel);
}

// ---------------------------------------------------------------- PerturbedDistribution

PerturbedDistribution::PerturbedDistribution(ViewPtr base, Direction direction, double eps)
    : base_(std::move(base)), direction_(std::move(direction)), eps_(eps)
{
    if (!base_) throw InvalidParameter("perturbation needs a base distribution");
    if (!(eps_ >= -1.0 && eps_ <= 1.0)) throw InvalidParameter("eps must lie in [0, 1]");
    const Layout l = base_->layout();
    if (const auto* delta = std::get_if<SmoothedDelta>(&direction_)) {
        if (delta->dim() != l.point_size())
            throw LayoutError("smoothed delta has " + std::to_string(delta->dim()) + " coordinates, base has " +
                              std::to_string(l.point_size()));
        if (base_->is_discrete()) throw LayoutError("discrete bases are perturbed toward exact atoms, not smoothed deltas");
    } else {
        const auto& atom = std::get<DiracAtom>(direction_).obs;
        if (!(atom.layout() == l)) throw LayoutError("Dirac atom layout does not match the base distribution");
        const auto* base_atoms = base_->atoms();
        if (!base_atoms) throw LayoutError("continuous bases need a smoothed delta direction");
        bool merged = false;
        atoms_.reserve(base_atoms->size() + 1);
        for (const auto& at : *base_atoms) {
            const bool hit = !merged && at.obs == atom;
            merged = merged || hit;
            atoms_.push_back({at.obs, mix(at.mass, hit ? 1.0 : 0.0)});
        }
        if (!merged) atoms_.push_back({atom, mix(0.0, 1.0)});
        for (const auto& at : atoms_) nonnegative_ = nonnegative_ && at.mass >= 0.0;
    }
}

double PerturbedDistribution::mix(double base_value, double direction_value) const noexcept
{
    const double v = (1.0 - eps_) * base_value + eps_ * direction_value;
    if (v < 0.0) saw_negative_.store(true, std::memory_order_relaxed);
    return v;
}

const std::vector<WeightedAtom>* PerturbedDistribution::atoms() const
{
    return std::holds_alternative<DiracAtom>(direction_) ? &atoms_ : nullptr;
}

double PerturbedDistribution::direction_marginal(std::span<const double> x_prefix, std::span<const int> a_prefix) const
{
    const Layout l = layout();
    check_prefix(l, x_prefix, a_prefix);
    const std::size_t d = l.covariate_dim;
    if (const auto* delta = std::get_if<SmoothedDelta>(&direction_)) {
        double v = 1.0;
        for (std::size_t k = 0; k < x_prefix.size() && v != 0.0; ++k) v *= delta->factor(l.x_index(k / d, k % d), x_prefix[k]);
        for (std::size_t t = 0; t < a_prefix.size() && v != 0.0; ++t) v *= delta->factor(l.a_index(t), a_prefix[t]);
        return v;
    }
    const auto& o = std::get<DiracAtom>(direction_).obs;
    if (!same_prefix(o.a, a_prefix) || !std::equal(x_prefix.begin(), x_prefix.end(), o.x.begin())) return 0.0;
    return 1.0;
}

double PerturbedDistribution::direction_outcome_density(double y, std::span<const double> x, std::span<const int> a) const
{
    check_full(layout(), x, a);
    const double v = direction_marginal(x, a);
    if (v == 0.0) return 0.0;
    if (const auto* delta = std::get_if<SmoothedDelta>(&direction_)) return v * delta->factor(layout().y_index(), y);
    return std::get<DiracAtom>(direction_).obs.y == y ? v : 0.0;
}

double PerturbedDistribution::direction_outcome_moment(std::span<const double> x, std::span<const int> a) const
{
    check_full(layout(), x, a);
    const double v = direction_marginal(x, a);
    if (v == 0.0) return 0.0;
    // symmetric kernels: the outcome factor integrates y to the center value
    if (const auto* delta = std::get_if<SmoothedDelta>(&direction_)) return v * delta->center()[layout().y_index()];
    return v * std::get<DiracAtom>(direction_).obs.y;
}

double PerturbedDistribution::marginal(std::span<const double> x_prefix, std::span<const int> a_prefix) const
{
    return mix(base_->marginal(x_prefix, a_prefix), direction_marginal(x_prefix, a_prefix));
}

double PerturbedDistribution::outcome_density(double y, std::span<const double> x, std::span<const int> a) const
{
    return mix(base_->outcome_density(y, x, a), direction_outcome_density(y, x, a));
}

double PerturbedDistribution::outcome_moment(std::span<const double> x, std::span<const int> a) const
{
    return mix(base_->outcome_moment(x, a), direction_outcome_moment(x, a));
}

PointQuery PerturbedDistribution::point_query(std::span<const double> x, int a) const
{
    const PointQuery b = base_->point_query(x, a);
    const int arm[1] = {a};
    const double dx = direction_marginal(x, {});
    const double dax = dx == 0.0 ? 0.0 : direction_marginal(x, arm);
    const double dm = dax == 0.0 ? 0.0 : direction_outcome_moment(x, arm);
    return {mix(b.px, dx), mix(b.pax, dax), mix(b.m, dm)};
}

double PerturbedDistribution::stage_density(std::size_t stage, std::span<const double> x_t) const
{
    const Layout l = layout();
    const double b = base_->stage_density(stage, x_t);
    const auto& delta = std::get<SmoothedDelta>(direction_);
    double v = 1.0;
    for (std::size_t j = 0; j < x_t.size() && v != 0.0; ++j) v *= delta.factor(l.x_index(stage, j), x_t[j]);
    return mix(b, v);
}

void PerturbedDistribution::stage_components(std::size_t stage, double weight, std::uint64_t stream,
                                             std::vector<MixtureComponent>& out) const
{
    base_->stage_components(stage, weight * (1.0 - eps_), stream, out);
    if (eps_ == 0.0) return;
    const auto& delta = std::get<SmoothedDelta>(direction_);
    const Layout l = layout();
    out.push_back({weight * eps_, mix_seed(stream, 0xD1AC), [&delta, l, stage](Rng& rng, std::span<double> x) {
                       for (std::size_t j = 0; j < l.covariate_dim; ++j) {
                           const std::size_t c = l.x_index(stage, j);
                           x[j] = delta.center()[c] + delta.bandwidth() * delta.kernel(c).draw(rng);
                       }
                   }});
}

void PerturbedDistribution::breakpoints(int coord, std::vector<double>& out) const
{
    base_->breakpoints(coord, out);
    const auto* delta = std::get_if<SmoothedDelta>(&direction_);
    if (!delta) return;
    const Layout l = layout();
    const std::size_t c = coord == kOutcome ? l.y_index() : l.x_index(static_cast<std::size_t>(coord), 0);
    const double r = delta->bandwidth() * delta->kernel(c).radius();
    out.push_back(delta->center()[c] - r);
    out.push_back(delta->center()[c] + r);
}

double PerturbedDistribution::smoothing_scale() const
{
    const double b = base_->smoothing_scale();
    const auto* delta = std::get_if<SmoothedDelta>(&direction_);
    if (!delta) return b;
    return b > 0.0 ? std::min(b, delta->bandwidth()) : delta->bandwidth();
}

bool PerturbedDistribution::piecewise_constant() const
{
    if (!base_->piecewise_constant()) return false;
    const auto* delta = std::get_if<SmoothedDelta>(&direction_);
    if (!delta) return true;
    for (std::size_t j = 0; j < delta->dim(); ++j)
        if (!delta->is_discrete(j) && delta->kernel(j).family != KernelFamily::Uniform) return false;
    return true;
}

std::shared_ptr<const PerturbedDistribution> perturb(ViewPtr base, Direction direction, double eps)
{
    if (!(eps >= 0.0 && eps <= 1.0)) throw InvalidParameter("eps must lie in [0, 1]");
    return std::make_shared<const PerturbedDistribution>(std::move(base), std::move(direction), eps);
}

std::shared_ptr<const PerturbedDistribution> perturb_signed(ViewPtr base, Direction direction, double eps)
{
    return std::make_shared<const PerturbedDistribution>(std::move(base), std::move(direction), eps);
}

// ---------------------------------------------------------------- sampling

std::vector<std::vector<double>> sample(const DiscreteDistribution& dist, std::size_t n, std::uint64_t seed)
{
    if (n == 0) throw InvalidParameter("sample size must be at least 1");
    const auto& atoms = *dist.atoms();
    std::vector<double> w;
    for (const auto& a : atoms) w.push_back(a.mass);
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    Rng rng(seed);
    std::vector<std::vector<double>> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(atoms[pick(rng)].obs.to_point());
    return out;
}

std::vector<std::vector<double>> sample(const SmoothedDelta& delta, std::size_t n, std::uint64_t seed)
{
    if (n == 0) throw InvalidParameter("sample size must be at least 1");
    Rng rng(seed);
    std::vector<std::vector<double>> out(n, std::vector<double>(delta.dim()));
    for (auto& p : out) delta.draw(rng, p);
    return out;
}

std::vector<std::vector<double>> sample(const KdeModel& kde, std::size_t n, std::uint64_t seed)
{
    if (n == 0) throw InvalidParameter("sample size must be at least 1");
    Rng rng(seed);
    const auto& rows = kde.data().rows;
    std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
    std::vector<std::vector<double>> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Observation o = rows[pick(rng)];
        for (auto& x : o.x) x += kde.bandwidth() * kde.kernel().draw(rng);
        o.y += kde.bandwidth() * kde.kernel().draw(rng);
        out.push_back(o.to_point());
    }
    return out;
}

}  // namespace gateaux
