#include "gateaux/experiments.hpp"
#include "gateaux/functionals.hpp"
#include "gateaux/measures.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

using namespace gateaux;

namespace {

const Kernel kUniform{KernelFamily::Uniform};
const Kernel kGaussian{KernelFamily::Gaussian};

IntegratorSettings quadrature()
{
    IntegratorSettings s;
    s.kind = IntegratorKind::Quadrature;
    return s;
}

/// Gaussian tails drop below the default floor; a negligible floor keeps the
/// unclipped definition in force out to the truncation radius.
IntegratorSettings unclipped()
{
    IntegratorSettings s;
    s.overlap_floor = 1e-300;
    return s;
}

/// Each covariate value appears once per arm, so every treated density has full overlap.
Dataset paired_data(std::size_t n, std::uint64_t seed, double y_lo, double y_hi)
{
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_real_distribution<double> y(y_lo, y_hi);
    Dataset d;
    d.layout = {1, 1};
    for (std::size_t i = 0; i < n; ++i) {
        const double x = u(rng);
        d.rows.push_back({{x}, {1}, y(rng)});
        d.rows.push_back({{x}, {0}, y(rng)});
    }
    return d;
}

double brute_mpo(const DiscreteDistribution& dist, int arm)
{
    std::map<double, double> px, pax, m;
    for (const auto& at : *dist.atoms()) {
        px[at.obs.x[0]] += at.mass;
        if (at.obs.a[0] == arm) {
            pax[at.obs.x[0]] += at.mass;
            m[at.obs.x[0]] += at.mass * at.obs.y;
        }
    }
    double psi = 0.0;
    for (const auto& [x, p] : px) psi += p * m[x] / pax[x];
    return psi;
}

/// Two-stage g-formula by enumerating every covariate pair, computing each
/// conditional from raw atom sums.
double brute_dtr2(const DiscreteDistribution& dist, int r0, int r1)
{
    auto mass = [&](auto pred) {
        double s = 0.0;
        for (const auto& at : *dist.atoms())
            if (pred(at.obs)) s += at.mass;
        return s;
    };
    double psi = 0.0;
    for (double x0 : {0.0, 1.0}) {
        const double p0 = mass([&](const Observation& o) { return o.x[0] == x0; });
        const double p0a = mass([&](const Observation& o) { return o.x[0] == x0 && o.a[0] == r0; });
        if (p0 == 0.0) continue;
        for (double x1 : {0.0, 1.0}) {
            auto hist = [&](const Observation& o) { return o.x[0] == x0 && o.a[0] == r0 && o.x[1] == x1; };
            const double p1 = mass(hist);
            const double p1a = mass([&](const Observation& o) { return hist(o) && o.a[1] == r1; });
            if (p1 == 0.0) continue;
            double my = 0.0;
            for (const auto& at : *dist.atoms())
                if (hist(at.obs) && at.obs.a[1] == r1) my += at.mass * at.obs.y;
            psi += p0 * (p1 / p0a) * (my / p1a);
        }
    }
    return psi;
}

double box(double u, double h) { return std::abs(u) <= h ? 0.5 / h : 0.0; }

/// Two-stage uniform-kernel KDE g-formula, summed exactly over the product grid
/// of kernel edges (the integrand is constant on each cell).
double brute_kde_dtr2(const Dataset& data, double h, int r0, int r1)
{
    std::vector<double> e0, e1;
    for (const auto& row : data.rows) {
        e0.push_back(row.x[0] - h);
        e0.push_back(row.x[0] + h);
        e1.push_back(row.x[1] - h);
        e1.push_back(row.x[1] + h);
    }
    std::sort(e0.begin(), e0.end());
    std::sort(e1.begin(), e1.end());
    const double n = static_cast<double>(data.size());
    double psi = 0.0;
    for (std::size_t i = 0; i + 1 < e0.size(); ++i) {
        const double w0 = e0[i + 1] - e0[i];
        if (w0 <= 0.0) continue;
        const double x0 = 0.5 * (e0[i] + e0[i + 1]);
        for (std::size_t j = 0; j + 1 < e1.size(); ++j) {
            const double w1 = e1[j + 1] - e1[j];
            if (w1 <= 0.0) continue;
            const double x1 = 0.5 * (e1[j] + e1[j + 1]);
            double p0 = 0, p0a = 0, p1 = 0, p1a = 0, my = 0;
            for (const auto& row : data.rows) {
                const double k0 = box(x0 - row.x[0], h);
                p0 += k0;
                if (row.a[0] != r0) continue;
                p0a += k0;
                const double k1 = k0 * box(x1 - row.x[1], h);
                p1 += k1;
                if (row.a[1] != r1) continue;
                p1a += k1;
                my += k1 * row.y;
            }
            if (p0a == 0.0 || p1a == 0.0) continue;
            psi += w0 * w1 * (p0 / n) * (p1 / p0a) * (my / p1a);
        }
    }
    return psi;
}

Dataset two_stage_data(std::size_t n, std::uint64_t seed)
{
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Dataset d;
    d.layout = {2, 1};
    for (std::size_t i = 0; i < n; ++i) {
        const double x0 = u(rng);
        const double x1 = 0.5 * x0 + 0.5 * u(rng);
        d.rows.push_back({{x0, x1}, {u(rng) < 0.6 ? 1 : 0, u(rng) < 0.6 ? 1 : 0}, x0 + x1 + u(rng)});
    }
    return d;
}

}  // namespace

TEST_CASE("mean potential outcome on the uniform cube")
{
    const auto cube = discrete_cube();
    CHECK(mean_potential_outcome(*cube, 1).value == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(mean_potential_outcome(*cube, 0).value == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("discrete mean potential outcome matches a brute-force sum")
{
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto dist = random_tabulated(seed);
        for (int arm : {0, 1})
            CHECK(mean_potential_outcome(*dist, arm).value == doctest::Approx(brute_mpo(*dist, arm)).epsilon(1e-13));
    }
}

TEST_CASE("constant outcome gives the constant")
{
    Dataset d = paired_data(40, 3, 0.0, 1.0);
    for (auto& row : d.rows) row.y = 1.75;
    for (const Kernel& k : {kUniform, kGaussian}) {
        const auto kde = fit_kde(d, 0.1, k);
        CHECK(mean_potential_outcome(*kde, 1, unclipped()).value == doctest::Approx(1.75).epsilon(1e-9));
    }
    const auto emp = std::make_shared<DiscreteDistribution>(DiscreteDistribution::empirical(d));
    CHECK(mean_potential_outcome(*emp, 0).value == doctest::Approx(1.75).epsilon(1e-14));
}

TEST_CASE("uniform-kernel quadrature is exact against edge-wise summation")
{
    const Dataset d = paired_data(25, 8, -1.0, 2.0);
    const double h = 0.07;
    const auto kde = fit_kde(d, h, kUniform);
    std::vector<double> edges;
    for (const auto& row : d.rows) {
        edges.push_back(row.x[0] - h);
        edges.push_back(row.x[0] + h);
    }
    std::sort(edges.begin(), edges.end());
    double psi = 0.0;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        const double w = edges[i + 1] - edges[i];
        if (w <= 0.0) continue;
        const double x = 0.5 * (edges[i] + edges[i + 1]);
        double px = 0, pax = 0, m = 0;
        for (const auto& row : d.rows) {
            const double k = box(x - row.x[0], h);
            px += k;
            if (row.a[0] == 1) {
                pax += k;
                m += k * row.y;
            }
        }
        if (pax > 0.0) psi += w * px / d.size() * m / pax;
    }
    CHECK(mean_potential_outcome(*kde, 1, quadrature()).value == doctest::Approx(psi).epsilon(1e-12));
}

TEST_CASE("Gaussian-kernel quadrature converges to a fine Simpson integral")
{
    const Dataset d = paired_data(15, 4, 0.0, 3.0);
    const double h = 0.1;
    const auto kde = fit_kde(d, h, kGaussian);
    auto integrand = [&](double x) {
        const std::array<double, 1> xv{x};
        const PointQuery q = kde->point_query(xv, 1);
        return q.pax > 0.0 ? q.px * q.m / q.pax : 0.0;
    };
    const int panels = 200000;
    const double a = -0.9, b = 1.9, w = (b - a) / panels;
    double s = integrand(a) + integrand(b);
    for (int i = 1; i < panels; ++i) s += integrand(a + i * w) * (i % 2 ? 4.0 : 2.0);
    const double reference = s * w / 3.0;
    IntegratorSettings q = unclipped();
    q.kind = IntegratorKind::Quadrature;
    CHECK(mean_potential_outcome(*kde, 1, q).value == doctest::Approx(reference).epsilon(1e-8));
}

TEST_CASE("Monte Carlo and quadrature agree for a single stage")
{
    const Dataset d = paired_data(30, 12, 0.0, 2.0);
    const auto kde = fit_kde(d, 0.08, kUniform);
    IntegratorSettings mc;
    mc.kind = IntegratorKind::MonteCarlo;
    mc.mc_samples = 200000;
    mc.seed = 5;
    const double q = mean_potential_outcome(*kde, 1, quadrature()).value;
    CHECK(mean_potential_outcome(*kde, 1, mc).value == doctest::Approx(q).epsilon(5e-3));
}

TEST_CASE("induced regression examples")
{
    Dataset d;
    d.layout = {1, 1};
    d.rows.push_back({{0.0}, {1}, 0.0});
    d.rows.push_back({{1.0}, {1}, 1.0});
    const std::array<double, 1> mid{0.5};
    CHECK(induced_regression(*fit_kde(d, 2.0, kUniform), 1, mid).value == doctest::Approx(0.5).epsilon(1e-14));

    const std::array<double, 1> zero{0.0};
    const InducedValue g = induced_regression(*fit_kde(d, 0.01, kGaussian), 1, zero);
    CHECK(std::abs(g.value) < 1e-6);
    CHECK_FALSE(g.clipped);

    // A full-weight smoothed delta whose outcome kernel is uniform returns its own outcome.
    const auto kde = fit_kde(d, 0.2, kUniform);
    const Observation o{{0.3}, {1}, 4.25};
    const auto full = perturb(kde, SmoothedDelta::at(o, 0.05, kUniform, kUniform), 1.0);
    const std::array<double, 1> x{0.31};
    CHECK(induced_regression(*full, 1, x).value == doctest::Approx(4.25).epsilon(1e-12));
}

TEST_CASE("induced regression equals Nadaraya-Watson")
{
    const Dataset d = paired_data(60, 21, -2.0, 2.0);
    for (const Kernel& k : {kUniform, kGaussian}) {
        const auto kde = fit_kde(d, 0.06, k);
        Rng rng(77);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int i = 0; i < 100; ++i) {
            const std::array<double, 1> x{u(rng)};
            for (int a : {0, 1}) {
                const double nw = kde->nadaraya_watson(x, a);
                CHECK(std::abs(induced_regression(*kde, a, x).value - nw) <= 1e-12 * std::max(1.0, std::abs(nw)));
            }
        }
    }
}

TEST_CASE("induced propensity examples and monotone perturbation")
{
    Dataset d;
    d.layout = {1, 1};
    d.rows.push_back({{0.0}, {1}, 0.0});
    d.rows.push_back({{0.0}, {0}, 0.0});
    d.rows.push_back({{0.5}, {1}, 0.0});
    d.rows.push_back({{0.5}, {0}, 0.0});
    const auto kde = fit_kde(d, 0.3, kUniform);
    const std::array<double, 1> x{0.2};
    CHECK(induced_propensity(*kde, 1, x).value == doctest::Approx(0.5).epsilon(1e-14));

    Dataset treated = d;
    for (auto& row : treated.rows) row.a[0] = 1;
    CHECK(induced_propensity(*fit_kde(treated, 0.3, kUniform), 1, x).value == doctest::Approx(1.0).epsilon(1e-14));

    const Observation o{{0.2}, {1}, 0.0};
    double prev = induced_propensity(*kde, 1, x).value;
    for (double eps : {0.05, 0.1, 0.3, 0.6, 0.9}) {
        const double e = induced_propensity(*perturb(kde, SmoothedDelta::at(o, 0.1), eps), 1, x).value;
        CHECK(e > prev);
        prev = e;
    }
}

TEST_CASE("values stay inside the outcome range under overlap")
{
    const Dataset d = paired_data(50, 33, -1.5, 2.5);
    for (const Kernel& k : {kUniform, kGaussian}) {
        const auto kde = fit_kde(d, 0.05, k);
        for (int a : {0, 1}) {
            const Evaluation e = mean_potential_outcome(*kde, a, unclipped());
            CHECK(e.value >= -1.5);
            CHECK(e.value <= 2.5);
            CHECK(e.clipped == 0);
        }
        Rng rng(2);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int i = 0; i < 50; ++i) {
            const std::array<double, 1> x{u(rng)};
            const double r = induced_regression(*kde, 1, x).value;
            CHECK(r >= -1.5 - 1e-12);
            CHECK(r <= 2.5 + 1e-12);
        }
    }
}

TEST_CASE("zero perturbation reproduces the base value bitwise")
{
    const auto cube = discrete_cube();
    const Observation atom{{1.0}, {1}, 1.0};
    CHECK(mean_potential_outcome(*perturb(cube, DiracAtom{atom}, 0.0), 1).value ==
          mean_potential_outcome(*cube, 1).value);

    const Dataset d = paired_data(30, 9, 0.0, 1.0);
    const auto kde = fit_kde(d, 0.1, kUniform);
    const auto zero = perturb(kde, SmoothedDelta::at(d.rows[3], 0.05), 0.0);
    CHECK(mean_potential_outcome(*zero, 1).value == mean_potential_outcome(*kde, 1).value);

    const Dataset d2 = two_stage_data(40, 10);
    const auto kde2 = fit_kde(d2, 0.2, kUniform);
    const std::vector<int> regime{1, 1};
    const auto zero2 = perturb(kde2, SmoothedDelta::at(d2.rows[0], 0.1), 0.0);
    CHECK(dtr_g_formula(*zero2, regime).value == dtr_g_formula(*kde2, regime).value);
}

TEST_CASE("discrete perturbation follows the closed-form rational curve")
{
    const auto dist = random_tabulated(4);
    const Observation o{{2.0}, {1}, 2.0};
    // Only the stratum x = 2 changes: its marginal, treated mass and outcome moment all mix linearly.
    double rest = 0.0, px = 0.0, pax = 0.0, m = 0.0;
    std::map<double, double> sx, sax, sm;
    for (const auto& at : *dist->atoms()) {
        sx[at.obs.x[0]] += at.mass;
        if (at.obs.a[0] == 1) {
            sax[at.obs.x[0]] += at.mass;
            sm[at.obs.x[0]] += at.mass * at.obs.y;
        }
    }
    for (const auto& [x, p] : sx) {
        if (x == 2.0) {
            px = p;
            pax = sax[x];
            m = sm[x];
        } else {
            rest += p * sm[x] / sax[x];
        }
    }
    for (double eps : {1e-6, 1e-3, 0.1, 0.5, 0.9}) {
        const double expected =
            (1 - eps) * rest + ((1 - eps) * px + eps) * ((1 - eps) * m + eps * 2.0) / ((1 - eps) * pax + eps);
        CHECK(mean_potential_outcome(*perturb(dist, DiracAtom{o}, eps), 1).value ==
              doctest::Approx(expected).epsilon(1e-13));
    }
}

TEST_CASE("one-stage g-formula equals the mean potential outcome")
{
    const auto dist = random_tabulated(6);
    for (int arm : {0, 1}) {
        const std::vector<int> regime{arm};
        CHECK(dtr_g_formula(*dist, regime).value == mean_potential_outcome(*dist, arm).value);
    }
}

TEST_CASE("deterministic chain returns its outcome")
{
    const Observation only{{0.0, 1.0}, {1, 1}, 2.0};
    const DiscreteDistribution dist({only}, {1.0});
    const std::vector<int> regime{1, 1};
    CHECK(dtr_g_formula(dist, regime).value == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("two-stage discrete g-formula matches brute-force enumeration")
{
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto dist = dtr_discrete(2, seed);
        for (int r0 : {0, 1})
            for (int r1 : {0, 1}) {
                const std::vector<int> regime{r0, r1};
                CHECK(std::abs(dtr_g_formula(*dist, regime).value - brute_dtr2(*dist, r0, r1)) < 1e-12);
            }
    }
}

TEST_CASE("g-formula has zero-mass regimes raise DegenerateError")
{
    const Observation only{{0.0, 1.0}, {1, 1}, 2.0};
    const DiscreteDistribution dist({only}, {1.0});
    const std::vector<int> regime{0, 1};
    CHECK_THROWS_AS(dtr_g_formula(dist, regime), DegenerateError);

    Dataset d;
    d.layout = {1, 1};
    d.rows.push_back({{0.0}, {0}, 1.0});
    const auto emp = std::make_shared<DiscreteDistribution>(DiscreteDistribution::empirical(d));
    CHECK_THROWS_AS(mean_potential_outcome(*emp, 1), DegenerateError);
}

TEST_CASE("two-stage KDE Monte Carlo matches exact cell summation")
{
    const Dataset d = two_stage_data(30, 17);
    const double h = 0.3;
    const auto kde = fit_kde(d, h, kUniform);
    const std::vector<int> regime{1, 1};
    IntegratorSettings mc;
    mc.mc_samples = 400000;
    mc.seed = 3;
    const double exact = brute_kde_dtr2(d, h, 1, 1);
    const Evaluation e = dtr_g_formula(*kde, regime, mc);
    CHECK(e.value == doctest::Approx(exact).epsilon(5e-3));

    // Same seed, same draws.
    mc.mc_samples = 5000;
    CHECK(dtr_g_formula(*kde, regime, mc).value == dtr_g_formula(*kde, regime, mc).value);
}

TEST_CASE("regime length must match the layout")
{
    const auto dist = dtr_discrete(2, 1);
    const std::vector<int> three{1, 1, 1};
    CHECK_THROWS_AS(dtr_g_formula(*dist, three), LayoutError);
    const std::vector<int> none;
    CHECK_THROWS_AS(dtr_g_formula(*dist, none), InvalidParameter);
    CHECK_THROWS_AS(mean_potential_outcome(*dist, 1), LayoutError);
}

TEST_CASE("functional spec JSON round trip")
{
    const FunctionalSpec mpo = FunctionalSpec::from_json({{"kind", "mpo"}, {"arm", 0}});
    CHECK(mpo.kind == FunctionalSpec::Kind::MeanPotentialOutcome);
    CHECK(mpo.arm == 0);
    CHECK(FunctionalSpec::from_json(mpo.to_json()).to_json() == mpo.to_json());

    const FunctionalSpec dtr = FunctionalSpec::from_json(
        {{"kind", "dtr"}, {"regime", {1, 0, 1}}, {"T", 3}, {"integrator", {{"kind", "mc"}, {"mc_samples", 77}}}});
    CHECK(dtr.horizon() == 3);
    CHECK(dtr.integ.kind == IntegratorKind::MonteCarlo);
    CHECK(dtr.integ.mc_samples == 77);
    CHECK(FunctionalSpec::from_json(dtr.to_json()).to_json() == dtr.to_json());

    CHECK_THROWS_AS(FunctionalSpec::from_json({{"kind", "mpo"}, {"bogus", 1}}), InvalidParameter);
    CHECK_THROWS_AS(FunctionalSpec::from_json({{"kind", "dtr"}, {"regime", {1, 1}}, {"T", 3}}), InvalidParameter);
    CHECK_THROWS_AS(FunctionalSpec::from_json({{"kind", "ate"}}), InvalidParameter);
    CHECK_THROWS_AS(FunctionalSpec::from_json({{"kind", "mpo"}, {"regime", {1}}}), InvalidParameter);
}

TEST_CASE("integrator settings JSON")
{
    const IntegratorSettings s = integrator_from_json(
        {{"kind", "quadrature"}, {"gauss_nodes", 6}, {"overlap_floor", 1e-3}, {"seed", 9}});
    CHECK(s.kind == IntegratorKind::Quadrature);
    CHECK(s.gauss_nodes == 6);
    CHECK(s.overlap_floor == 1e-3);
    CHECK(integrator_from_json(integrator_to_json(s)).seed == 9);
    CHECK_THROWS_AS(integrator_from_json({{"mc_samples", 0}}), InvalidParameter);
    CHECK_THROWS_AS(integrator_from_json({{"overlap_floor", 0.0}}), InvalidParameter);
    CHECK_THROWS_AS(integrator_from_json({{"kind", "simpson"}}), InvalidParameter);
    CHECK_THROWS_AS(integrator_from_json({{"nodes", 3}}), InvalidParameter);
}

TEST_CASE("make_functional dispatches on the spec")
{
    const auto cube = discrete_cube();
    FunctionalSpec spec;
    spec.arm = 1;
    CHECK(make_functional(spec)(*cube).value == doctest::Approx(0.5));

    const auto dist = dtr_discrete(2, 3);
    FunctionalSpec dspec;
    dspec.kind = FunctionalSpec::Kind::DtrValue;
    dspec.regime = {0, 1};
    CHECK(make_functional(dspec)(*dist).value == doctest::Approx(brute_dtr2(*dist, 0, 1)).epsilon(1e-12));
}
