#pragma once

// Kernels, smoothed point masses, kernel density estimates and eps-mixtures.
//
// Observations are histories x_0, a_0, x_1, a_1, ..., x_{T-1}, a_{T-1}, y with a
// d-dimensional covariate per stage. The point-treatment case (X, A, Y) is T = 1.
// Flattened points use that same order; treatments are discrete coordinates.

#include "gateaux/common.hpp"

#include <atomic>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace gateaux {

enum class KernelFamily { Uniform, Gaussian };

/// Symmetric one-dimensional base kernel K with unit mass. Multivariate use is
/// always a product of these.
struct Kernel {
    KernelFamily family = KernelFamily::Uniform;

    double operator()(double u) const noexcept;
    /// Effective half-width in bandwidth units: 1 for Uniform, 8 for Gaussian
    /// (tail mass beyond 8 is below 1e-15).
    double radius() const noexcept;
    /// Draw u ~ K.
    double draw(Rng& rng) const;

    std::string name() const;
    static Kernel parse(std::string_view name);

    friend bool operator==(const Kernel&, const Kernel&) = default;
};

/// lambda^{-1} K(u / lambda).
double kernel_eval(const Kernel& kernel, double u, double lambda);

struct Layout {
    std::size_t stages = 1;
    std::size_t covariate_dim = 1;

    std::size_t point_size() const noexcept { return stages * (covariate_dim + 1) + 1; }
    std::size_t x_index(std::size_t stage, std::size_t j) const noexcept
    {
        return stage * (covariate_dim + 1) + j;
    }
    std::size_t a_index(std::size_t stage) const noexcept
    {
        return stage * (covariate_dim + 1) + covariate_dim;
    }
    std::size_t y_index() const noexcept { return stages * (covariate_dim + 1); }

    friend bool operator==(const Layout&, const Layout&) = default;
};

struct Observation {
    std::vector<double> x;  // stage-major, stages * covariate_dim values
    std::vector<int> a;     // one treatment per stage
    double y = 0.0;

    Layout layout() const;
    std::span<const double> stage_x(std::size_t stage) const;
    std::vector<double> to_point() const;
    static Observation from_point(std::span<const double> point, const Layout& layout);

    friend bool operator==(const Observation&, const Observation&) = default;
};

struct Dataset {
    Layout layout;
    std::vector<Observation> rows;

    std::size_t size() const noexcept { return rows.size(); }
    bool empty() const noexcept { return rows.empty(); }
    /// Throws InvalidInput when a row does not match the layout.
    void validate() const;
};

/// Kernel-smoothed point mass at `center`. Continuous coordinates contribute
/// lambda^{-1} K((u_j - c_j) / lambda); discrete coordinates contribute 1{u_j = c_j}.
class SmoothedDelta {
public:
    SmoothedDelta(std::vector<double> center, std::vector<bool> discrete_mask, double bandwidth,
                  Kernel kernel = {});

    /// Smoothed delta at an observation; treatments are discrete, the outcome
    /// coordinate uses `y_kernel`, covariates use `x_kernel`.
    static SmoothedDelta at(const Observation& o, double bandwidth, Kernel x_kernel = {},
                            Kernel y_kernel = {});

    void set_kernel(std::size_t coord, Kernel kernel);

    double eval(std::span<const double> point) const;
    /// One coordinate's factor.
    double factor(std::size_t coord, double value) const noexcept;
    void draw(Rng& rng, std::span<double> out) const;

    std::span<const double> center() const noexcept { return center_; }
    bool is_discrete(std::size_t coord) const noexcept { return discrete_[coord]; }
    const Kernel& kernel(std::size_t coord) const noexcept { return kernels_[coord]; }
    double bandwidth() const noexcept { return bandwidth_; }
    std::size_t dim() const noexcept { return center_.size(); }

private:
    std::vector<double> center_;
    std::vector<bool> discrete_;
    std::vector<Kernel> kernels_;
    double bandwidth_;
};

/// One component of a stage-covariate mixture, used for stratified Monte Carlo.
/// `stream` identifies the component so repeated evaluations can reuse draws.
struct MixtureComponent {
    double weight = 1.0;
    std::uint64_t stream = 0;
    std::function<void(Rng&, std::span<double>)> draw;
};

/// Densities the point-treatment functionals need at one covariate value.
struct PointQuery {
    double px = 0.0;   // p(x)
    double pax = 0.0;  // p(a, x)
    double m = 0.0;    // integral of y p(y, a, x) dy
};

struct WeightedAtom {
    Observation obs;
    double mass = 0.0;
};

/// Read-only access to a (possibly signed, possibly perturbed) distribution over
/// observations. Discrete views report probability masses, continuous views
/// densities with respect to Lebesgue x counting measure on treatments.
class DistributionView {
public:
    static constexpr int kOutcome = -1;

    virtual ~DistributionView() = default;

    virtual Layout layout() const = 0;

    /// Joint of a history prefix: x_prefix holds (t+1)*d covariates, a_prefix
    /// holds t or t+1 treatments. Empty x_prefix returns the total mass.
    virtual double marginal(std::span<const double> x_prefix, std::span<const int> a_prefix) const = 0;
    /// p(y, x-bar, a-bar) for a complete history.
    virtual double outcome_density(double y, std::span<const double> x, std::span<const int> a) const = 0;
    /// Integral of y p(y, x-bar, a-bar) dy for a complete history.
    virtual double outcome_moment(std::span<const double> x, std::span<const int> a) const = 0;

    /// p(x), p(a, x), m(a, x) for single-stage layouts.
    virtual PointQuery point_query(std::span<const double> x, int a) const;

    /// Marginal density of stage `stage`'s covariate, treatments and other
    /// stages integrated out. Continuous views only.
    virtual double stage_density(std::size_t stage, std::span<const double> x_t) const = 0;
    /// Appends the mixture components of stage_density, scaled by `weight`.
    virtual void stage_components(std::size_t stage, double weight, std::uint64_t stream,
                                  std::vector<MixtureComponent>& out) const = 0;
    /// Appends points where the density may be non-smooth along one scalar
    /// coordinate: a stage covariate (covariate_dim == 1) or kOutcome.
    virtual void breakpoints(int coord, std::vector<double>& out) const = 0;
    /// Smallest kernel bandwidth in the view (0 for discrete views).
    virtual double smoothing_scale() const = 0;
    /// True when every density is piecewise constant between breakpoints.
    virtual bool piecewise_constant() const = 0;

    /// Support atoms for discrete views, nullptr for continuous ones.
    virtual const std::vector<WeightedAtom>* atoms() const { return nullptr; }
    bool is_discrete() const { return atoms() != nullptr; }
};

using ViewPtr = std::shared_ptr<const DistributionView>;

/// Finitely supported distribution; queries match coordinates exactly.
class DiscreteDistribution final : public DistributionView {
public:
    DiscreteDistribution(std::vector<Observation> support, std::vector<double> probabilities);
    /// Empirical distribution of a dataset (duplicate rows merged).
    static DiscreteDistribution empirical(const Dataset& data);

    Layout layout() const override { return layout_; }
    double marginal(std::span<const double> x_prefix, std::span<const int> a_prefix) const override;
    double outcome_density(double y, std::span<const double> x, std::span<const int> a) const override;
    double outcome_moment(std::span<const double> x, std::span<const int> a) const override;
    double stage_density(std::size_t, std::span<const double>) const override;
    void stage_components(std::size_t, double, std::uint64_t, std::vector<MixtureComponent>&) const override;
    void breakpoints(int, std::vector<double>&) const override {}
    double smoothing_scale() const override { return 0.0; }
    bool piecewise_constant() const override { return true; }
    const std::vector<WeightedAtom>* atoms() const override { return &atoms_; }

    /// Index of the atom equal to o, if any.
    std::optional<std::size_t> find(const Observation& o) const;
    std::size_t size() const noexcept { return atoms_.size(); }

private:
    Layout layout_;
    std::vector<WeightedAtom> atoms_;
};

/// Product-kernel density estimate with treatments matched exactly:
/// p(y, a-bar, x-bar) = n^{-1} sum_i 1{a-bar_i = a-bar} prod K_h(x - x_i) K_h(y - y_i).
class KdeModel final : public DistributionView {
public:
    KdeModel(Dataset data, double h, Kernel kernel = {});

    Layout layout() const override { return data_.layout; }
    double marginal(std::span<const double> x_prefix, std::span<const int> a_prefix) const override;
    double outcome_density(double y, std::span<const double> x, std::span<const int> a) const override;
    double outcome_moment(std::span<const double> x, std::span<const int> a) const override;
    PointQuery point_query(std::span<const double> x, int a) const override;
    double stage_density(std::size_t stage, std::span<const double> x_t) const override;
    void stage_components(std::size_t stage, double weight, std::uint64_t stream,
                          std::vector<MixtureComponent>& out) const override;
    void breakpoints(int coord, std::vector<double>& out) const override;
    double smoothing_scale() const override { return h_; }
    bool piecewise_constant() const override { return kernel_.family == KernelFamily::Uniform; }

    /// Closed-form Nadaraya-Watson estimate of E[Y | A = a, X = x] (single stage).
    double nadaraya_watson(std::span<const double> x, int a) const;
    /// p(x), p(a, x), m(a, x) by direct summation, bypassing the sorted fast path.
    PointQuery point_query_direct(std::span<const double> x, int a) const;

    const Dataset& data() const noexcept { return data_; }
    double bandwidth() const noexcept { return h_; }
    const Kernel& kernel() const noexcept { return kernel_; }

private:
    double weight_x(const Observation& row, std::span<const double> x_prefix) const noexcept;
    bool has_fast_path() const noexcept { return !sorted_.empty(); }
    PointQuery point_query_fast(double x, int a) const;

    struct SortedArm {
        int arm = 0;
        std::vector<double> x;        // sorted covariates of rows with this arm
        std::vector<long double> y_prefix;  // prefix sums of outcomes, same order
    };

    Dataset data_;
    double h_;
    Kernel kernel_;
    std::vector<double> sorted_x_;  // fast path: all covariates, sorted
    std::vector<SortedArm> sorted_;
};

/// Builds a KDE; throws InvalidInput on an empty dataset, InvalidParameter on h <= 0.
std::shared_ptr<const KdeModel> fit_kde(const Dataset& data, double h, Kernel kernel = {});

/// Exact point mass, for discrete bases.
struct DiracAtom {
    Observation obs;
};

using Direction = std::variant<SmoothedDelta, DiracAtom>;

/// Lazy mixture (1 - eps) base + eps direction. Every query is evaluated as
/// (1 - eps) * base_query + eps * direction_query.
class PerturbedDistribution final : public DistributionView {
public:
    /// eps may be negative (used by the central difference); `nonnegative()`
    /// and `saw_negative()` report whether the signed measure stayed valid.
    PerturbedDistribution(ViewPtr base, Direction direction, double eps);

    Layout layout() const override { return base_->layout(); }
    double marginal(std::span<const double> x_prefix, std::span<const int> a_prefix) const override;
    double outcome_density(double y, std::span<const double> x, std::span<const int> a) const override;
    double outcome_moment(std::span<const double> x, std::span<const int> a) const override;
    PointQuery point_query(std::span<const double> x, int a) const override;
    double stage_density(std::size_t stage, std::span<const double> x_t) const override;
    void stage_components(std::size_t stage, double weight, std::uint64_t stream,
                          std::vector<MixtureComponent>& out) const override;
    void breakpoints(int coord, std::vector<double>& out) const override;
    double smoothing_scale() const override;
    bool piecewise_constant() const override;
    const std::vector<WeightedAtom>* atoms() const override;

    double eps() const noexcept { return eps_; }
    const DistributionView& base() const noexcept { return *base_; }
    const Direction& direction() const noexcept { return direction_; }

    /// False if a discrete mixture has a negative atom mass.
    bool nonnegative() const noexcept { return nonnegative_; }
    /// True once any continuous query returned a negative value.
    bool saw_negative() const noexcept { return saw_negative_.load(std::memory_order_relaxed); }

    /// Direction's share of each query type.
    double direction_marginal(std::span<const double> x_prefix, std::span<const int> a_prefix) const;
    double direction_outcome_density(double y, std::span<const double> x, std::span<const int> a) const;
    double direction_outcome_moment(std::span<const double> x, std::span<const int> a) const;

private:
    double mix(double base_value, double direction_value) const noexcept;

    ViewPtr base_;
    Direction direction_;
    double eps_;
    bool nonnegative_ = true;
    mutable std::atomic<bool> saw_negative_{false};
    std::vector<WeightedAtom> atoms_;  // discrete case: merged support
};

/// eps must lie in [0, 1]; throws InvalidParameter otherwise, LayoutError on mismatch.
std::shared_ptr<const PerturbedDistribution> perturb(ViewPtr base, Direction direction, double eps);
/// Signed variant, eps in [-1, 1].
std::shared_ptr<const PerturbedDistribution> perturb_signed(ViewPtr base, Direction direction, double eps);

/// i.i.d. draws as flattened points; deterministic given the seed.
std::vector<std::vector<double>> sample(const DiscreteDistribution& dist, std::size_t n, std::uint64_t seed);
std::vector<std::vector<double>> sample(const SmoothedDelta& delta, std::size_t n, std::uint64_t seed);
std::vector<std::vector<double>> sample(const KdeModel& kde, std::size_t n, std::uint64_t seed);

}  // namespace gateaux
