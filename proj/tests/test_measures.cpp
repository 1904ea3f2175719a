#include "gateaux/dataset_io.hpp"
#include "gateaux/measures.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace gateaux;

namespace {

const Kernel kUniform{KernelFamily::Uniform};
const Kernel kGaussian{KernelFamily::Gaussian};

/// Composite Simpson rule on [a, b].
template <class F>
double simpson(F f, double a, double b, int panels = 20000)
{
    const double h = (b - a) / panels;
    double s = f(a) + f(b);
    for (int i = 1; i < panels; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

/// Midpoint rule; exact for piecewise-constant integrands whose jumps are panel edges.
template <class F>
double midpoint(F f, double a, double b, int panels)
{
    const double h = (b - a) / panels;
    double s = 0.0;
    for (int i = 0; i < panels; ++i) s += f(a + (i + 0.5) * h);
    return s * h;
}

Dataset linear_data(std::size_t n, std::uint64_t seed)
{
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Dataset d;
    d.layout = {1, 1};
    for (std::size_t i = 0; i < n; ++i) {
        const double x = u(rng);
        d.rows.push_back({{x}, {u(rng) < 0.5 ? 1 : 0}, 2.0 * x + u(rng)});
    }
    return d;
}

}  // namespace

TEST_CASE("kernel values at reference points")
{
    CHECK(kernel_eval(kUniform, 0.2, 0.5) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(kernel_eval(kGaussian, 0.0, 1.0) == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)).epsilon(1e-15));
    CHECK(kernel_eval(kUniform, 2.0, 0.5) == 0.0);
    CHECK(kUniform(1.0) == 0.5);
    CHECK(kUniform(1.0000001) == 0.0);
    CHECK_THROWS_AS(kernel_eval(kUniform, 0.0, 0.0), InvalidParameter);
    CHECK_THROWS_AS(kernel_eval(kGaussian, 0.0, -1.0), InvalidParameter);
}

TEST_CASE("kernels are normalized and symmetric")
{
    for (const Kernel& k : {kUniform, kGaussian}) {
        const double r = k.radius();
        // split at the uniform kernel's jumps so Simpson sees smooth pieces
        const double mass = simpson(k, -r, -1.0) + simpson(k, -1.0, 1.0) + simpson(k, 1.0, r);
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
        for (double u : {0.1, 0.5, 0.99, 1.7, 3.0}) CHECK(k(u) == k(-u));
    }
}

TEST_CASE("kernel names parse and round-trip")
{
    CHECK(Kernel::parse("uniform") == kUniform);
    CHECK(Kernel::parse(kGaussian.name()) == kGaussian);
    CHECK_THROWS_AS(Kernel::parse("epanechnikov"), InvalidParameter);
}

TEST_CASE("kernel draws follow the kernel")
{
    for (const Kernel& k : {kUniform, kGaussian}) {
        Rng rng(7);
        double s = 0.0, s2 = 0.0;
        const int n = 200000;
        for (int i = 0; i < n; ++i) {
            const double u = k.draw(rng);
            if (k.family == KernelFamily::Uniform) REQUIRE(std::abs(u) <= 1.0);
            s += u;
            s2 += u * u;
        }
        const double var = k.family == KernelFamily::Uniform ? 1.0 / 3.0 : 1.0;
        CHECK(std::abs(s / n) < 4.0 * std::sqrt(var / n));
        CHECK(s2 / n == doctest::Approx(var).epsilon(0.01));
    }
}

TEST_CASE("layout indexing follows x_0, a_0, x_1, a_1, ..., y")
{
    const Layout l{2, 3};
    CHECK(l.point_size() == 9);
    CHECK(l.x_index(0, 2) == 2);
    CHECK(l.a_index(0) == 3);
    CHECK(l.x_index(1, 0) == 4);
    CHECK(l.a_index(1) == 7);
    CHECK(l.y_index() == 8);

    const Observation o{{1, 2, 3, 4, 5, 6}, {1, 0}, 9.5};
    CHECK(o.layout() == l);
    const auto p = o.to_point();
    CHECK(p == std::vector<double>{1, 2, 3, 1, 4, 5, 6, 0, 9.5});
    CHECK(Observation::from_point(p, l) == o);
    CHECK_THROWS_AS(Observation::from_point(std::vector<double>{1, 2}, l), LayoutError);
}

TEST_CASE("smoothed delta evaluation")
{
    const Observation c{{0.5}, {1}, 1.0};
    const SmoothedDelta d = SmoothedDelta::at(c, 0.1);
    CHECK(d.eval(std::vector<double>{0.5, 1, 1.0}) == doctest::Approx(25.0).epsilon(1e-14));
    CHECK(d.eval(std::vector<double>{0.5, 0, 1.0}) == 0.0);
    CHECK(d.eval(std::vector<double>{0.61, 1, 1.0}) == 0.0);
    CHECK_THROWS_AS(d.eval(std::vector<double>{0.5, 1}), LayoutError);
    CHECK(d.is_discrete(1));
    CHECK_FALSE(d.is_discrete(0));
    CHECK_THROWS_AS(SmoothedDelta::at(c, 0.0), InvalidParameter);
}

TEST_CASE("smoothed delta integrates to one over continuous coordinates")
{
    for (const Kernel& k : {kUniform, kGaussian}) {
        const Observation c{{0.3}, {0}, -2.0};
        const SmoothedDelta d = SmoothedDelta::at(c, 0.2, k, k);
        // Monte Carlo over a box covering the support, uniform proposal
        Rng rng(11);
        const double half = 0.2 * k.radius();
        std::uniform_real_distribution<double> ux(0.3 - half, 0.3 + half), uy(-2.0 - half, -2.0 + half);
        const int n = 400000;
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += d.eval(std::vector<double>{ux(rng), 0, uy(rng)});
        const double mass = s / n * (2 * half) * (2 * half);
        CHECK(mass == doctest::Approx(1.0).epsilon(k.family == KernelFamily::Uniform ? 1e-3 : 2e-2));
        // exact check: the product factorizes, so integrate each factor with Simpson
        const double fx = simpson([&](double x) { return d.factor(0, x); }, 0.3 - half, 0.3 - 0.2) +
                          simpson([&](double x) { return d.factor(0, x); }, 0.3 - 0.2, 0.3 + 0.2) +
                          simpson([&](double x) { return d.factor(0, x); }, 0.3 + 0.2, 0.3 + half);
        CHECK(fx == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("discrete distribution invariants")
{
    const Observation a{{0}, {1}, 0}, b{{1}, {1}, 1};
    CHECK_THROWS_AS(DiscreteDistribution({a, b}, {0.5, 0.6}), InvalidInput);
    CHECK_THROWS_AS(DiscreteDistribution({a, b}, {1.5, -0.5}), InvalidInput);
    CHECK_THROWS_AS(DiscreteDistribution({a}, {0.5, 0.5}), InvalidInput);
    CHECK_THROWS_AS(DiscreteDistribution({a, Observation{{0, 0}, {1}, 0}}, {0.5, 0.5}), LayoutError);

    Dataset data;
    data.layout = {1, 1};
    data.rows = {a, b, a, a};
    const auto emp = DiscreteDistribution::empirical(data);
    CHECK(emp.size() == 2);
    CHECK(emp.atoms()->at(*emp.find(a)).mass == doctest::Approx(0.75));
    CHECK_FALSE(emp.find(Observation{{2}, {1}, 0}).has_value());
    CHECK(emp.marginal({}, {}) == doctest::Approx(1.0));
    CHECK(emp.marginal(std::vector<double>{0}, std::vector<int>{1}) == doctest::Approx(0.75));
    CHECK(emp.outcome_moment(std::vector<double>{1}, std::vector<int>{1}) == doctest::Approx(0.25));
}

TEST_CASE("kde reference values")
{
    Dataset one;
    one.layout = {1, 1};
    one.rows = {{{0.0}, {1}, 0.0}, {{100.0}, {1}, 100.0}};
    // second row is far away; the density at the origin is half a product of two peaks
    const KdeModel kde(one, 1.0, kGaussian);
    CHECK(2.0 * kde.outcome_density(0.0, std::vector<double>{0.0}, std::vector<int>{1}) ==
          doctest::Approx(1.0 / (2.0 * std::numbers::pi)).epsilon(1e-12));
    CHECK(kde.outcome_density(0.0, std::vector<double>{0.0}, std::vector<int>{0}) == 0.0);

    Dataset sym;
    sym.layout = {1, 1};
    sym.rows = {{{-0.3}, {1}, 0.0}, {{0.3}, {0}, 1.0}};
    const KdeModel k2(sym, 0.5, kGaussian);
    CHECK(k2.marginal(std::vector<double>{0.1}, {}) ==
          doctest::Approx(k2.marginal(std::vector<double>{-0.1}, {})).epsilon(1e-12));

    CHECK_THROWS_AS(KdeModel(Dataset{{1, 1}, {}}, 0.1), InvalidInput);
    CHECK_THROWS_AS(KdeModel(sym, 0.0), InvalidParameter);
}

TEST_CASE("kde marginalization consistency")
{
    const Dataset data = linear_data(60, 3);
    for (const Kernel& k : {kUniform, kGaussian}) {
        const KdeModel kde(data, 0.1, k);
        Rng rng(5);
        std::uniform_real_distribution<double> u(-0.1, 1.1);
        for (int t = 0; t < 10; ++t) {
            const std::vector<double> x{u(rng)};
            double sum_a = 0.0;
            for (int a : {0, 1}) {
                const std::vector<int> av{a};
                const double pax = kde.marginal(x, av);
                sum_a += pax;
                // integrate p(y, a, x) over y piecewise between the outcome breakpoints
                std::vector<double> br;
                kde.breakpoints(DistributionView::kOutcome, br);
                std::sort(br.begin(), br.end());
                double integral = 0.0, moment = 0.0;
                for (std::size_t i = 0; i + 1 < br.size(); ++i) {
                    if (br[i + 1] - br[i] < 1e-12) continue;
                    integral += midpoint([&](double y) { return kde.outcome_density(y, x, av); }, br[i], br[i + 1], 400);
                    moment += midpoint([&](double y) { return y * kde.outcome_density(y, x, av); }, br[i], br[i + 1], 400);
                }
                CHECK(integral == doctest::Approx(pax).epsilon(1e-6).scale(1.0));
                CHECK(moment == doctest::Approx(kde.outcome_moment(x, av)).epsilon(1e-6).scale(1.0));
            }
            CHECK(sum_a == doctest::Approx(kde.marginal(x, {})).epsilon(1e-12));
        }
    }
}

TEST_CASE("kde sorted fast path agrees with direct summation")
{
    const Dataset data = linear_data(300, 9);
    const KdeModel kde(data, 0.05);
    Rng rng(1);
    std::uniform_real_distribution<double> u(-0.2, 1.2);
    for (int t = 0; t < 500; ++t) {
        const std::vector<double> x{u(rng)};
        for (int a : {0, 1}) {
            const PointQuery f = kde.point_query(x, a), d = kde.point_query_direct(x, a);
            CHECK(f.px == doctest::Approx(d.px).epsilon(1e-12).scale(1.0));
            CHECK(f.pax == doctest::Approx(d.pax).epsilon(1e-12).scale(1.0));
            CHECK(f.m == doctest::Approx(d.m).epsilon(1e-12).scale(1.0));
        }
    }
    // exactly on a kernel edge
    const double edge = data.rows[0].x[0] + 0.05;
    for (int a : {0, 1}) {
        const PointQuery f = kde.point_query(std::vector<double>{edge}, a);
        const PointQuery d = kde.point_query_direct(std::vector<double>{edge}, a);
        CHECK(f.pax == doctest::Approx(d.pax).epsilon(1e-12));
    }
}

TEST_CASE("nadaraya-watson matches the moment ratio")
{
    const Dataset data = linear_data(100, 4);
    const KdeModel kde(data, 0.1, kGaussian);
    for (double x : {0.1, 0.5, 0.93}) {
        const std::vector<double> xv{x};
        double num = 0.0, den = 0.0;
        for (const auto& r : data.rows)
            if (r.a[0] == 1) {
                const double w = kGaussian((x - r.x[0]) / 0.1);
                num += w * r.y;
                den += w;
            }
        CHECK(kde.nadaraya_watson(xv, 1) == doctest::Approx(num / den).epsilon(1e-12));
    }
}

TEST_CASE("perturbed distribution is an exact mixture")
{
    const Dataset data = linear_data(50, 2);
    const auto kde = fit_kde(data, 0.1);
    const SmoothedDelta d = SmoothedDelta::at(data.rows[3], 0.07);
    Rng rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double eps : {0.0, 0.1, 0.5, 1.0}) {
        const auto p = perturb(kde, d, eps);
        for (int t = 0; t < 50; ++t) {
            const std::vector<double> x{u(rng)};
            const std::vector<int> a{t % 2};
            const double y = 3.0 * u(rng);
            CHECK(p->marginal(x, a) == (1.0 - eps) * kde->marginal(x, a) + eps * p->direction_marginal(x, a));
            CHECK(p->outcome_density(y, x, a) ==
                  (1.0 - eps) * kde->outcome_density(y, x, a) + eps * p->direction_outcome_density(y, x, a));
            if (eps == 0.0) CHECK(p->marginal(x, a) == kde->marginal(x, a));
            if (eps == 1.0) {
                const std::vector<double> pt{x[0], double(a[0]), y};
                CHECK(p->outcome_density(y, x, a) == d.eval(pt));
            }
        }
    }
    CHECK_THROWS_AS(perturb(kde, d, 1.5), InvalidParameter);
    CHECK_THROWS_AS(perturb(kde, d, -0.1), InvalidParameter);
    CHECK_THROWS_AS(perturb(kde, DiracAtom{data.rows[0]}, 0.1), LayoutError);
}

TEST_CASE("perturbed distribution conserves mass")
{
    const Dataset data = linear_data(40, 8);
    const auto kde = fit_kde(data, 0.1);
    const SmoothedDelta d = SmoothedDelta::at(data.rows[0], 0.1);
    for (double eps : {0.0, 0.1, 0.5, 1.0}) {
        const auto p = perturb(kde, d, eps);
        std::vector<double> br;
        p->breakpoints(0, br);
        std::sort(br.begin(), br.end());
        double mass = 0.0;
        for (std::size_t i = 0; i + 1 < br.size(); ++i) {
            const double mid = 0.5 * (br[i] + br[i + 1]);
            mass += (br[i + 1] - br[i]) * p->marginal(std::vector<double>{mid}, {});
        }
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("discrete mixture arithmetic")
{
    const Observation a{{0}, {1}, 0}, b{{1}, {1}, 1};
    const auto base = std::make_shared<const DiscreteDistribution>(std::vector<Observation>{a, b},
                                                                   std::vector<double>{0.5, 0.5});
    const auto p = perturb(base, DiracAtom{b}, 0.1);
    REQUIRE(p->atoms()->size() == 2);
    CHECK(p->atoms()->at(0).mass == doctest::Approx(0.45));
    CHECK(p->atoms()->at(1).mass == doctest::Approx(0.55));
    CHECK(p->nonnegative());

    // a new atom is appended; negative eps flags the signed measure
    const Observation c{{2}, {0}, 5};
    const auto q = perturb_signed(base, DiracAtom{c}, -0.1);
    CHECK(q->atoms()->size() == 3);
    CHECK_FALSE(q->nonnegative());
    CHECK_THROWS_AS(perturb(base, SmoothedDelta::at(a, 0.1), 0.1), LayoutError);
}

TEST_CASE("sampling is deterministic and respects support")
{
    const Observation a{{0.25}, {1}, -1};
    const DiscreteDistribution one({a}, {1.0});
    const auto s = sample(one, 5, 42);
    REQUIRE(s.size() == 5);
    for (const auto& p : s) CHECK(p == a.to_point());

    const SmoothedDelta u(std::vector<double>{0.0}, std::vector<bool>{false}, 1.0, kUniform);
    for (const auto& p : sample(u, 1000, 1)) CHECK(std::abs(p[0]) <= 1.0);

    const SmoothedDelta g(std::vector<double>{2.0}, std::vector<bool>{false}, 0.5, kGaussian);
    const auto gs = sample(g, 100000, 3);
    double mean = 0.0;
    for (const auto& p : gs) mean += p[0] / 1e5;
    CHECK(std::abs(mean - 2.0) <= 3e-2 * 0.5);

    const Dataset data = linear_data(30, 1);
    const KdeModel kde(data, 0.1);
    CHECK(sample(kde, 20, 9) == sample(kde, 20, 9));
    CHECK(sample(kde, 20, 9) != sample(kde, 20, 10));
    CHECK_THROWS_AS(sample(one, 0, 1), InvalidParameter);
}

TEST_CASE("dataset csv round trip")
{
    Dataset d;
    d.layout = {1, 2};
    d.rows = {{{0.1, 1.0 / 3.0}, {1}, 2.5}, {{-4.0, 1e-300}, {0}, -0.0}};
    std::stringstream s;
    write_dataset_csv(s, d);
    const Dataset back = read_dataset_csv(s);
    CHECK(back.layout == d.layout);
    CHECK(back.rows == d.rows);

    std::stringstream multi("x0,a0,x1,a1,y\n0.5,1,0.25,0,3\n");
    const Dataset m = read_dataset_csv(multi);
    CHECK(m.layout == Layout{2, 1});
    CHECK(m.rows[0] == Observation{{0.5, 0.25}, {1, 0}, 3.0});

    std::stringstream bad("x,a,y\n0.5,1\n");
    CHECK_THROWS_AS(read_dataset_csv(bad), InvalidInput);
    std::stringstream nonnum("x,a,y\n0.5,1,abc\n");
    CHECK_THROWS_AS(read_dataset_csv(nonnum), InvalidInput);
}

TEST_CASE("missing dataset file names the path")
{
    try {
        read_dataset_csv(std::string("/nonexistent/data.csv"));
        FAIL("expected an exception");
    } catch (const InvalidInput& e) {
        CHECK(std::string(e.what()).find("/nonexistent/data.csv") != std::string::npos);
    }
}

TEST_CASE("triples csv round trip")
{
    const std::vector<Triple> t{{0, 1, 2}, {3, 0, 0}};
    std::stringstream s;
    write_triples_csv(s, t);
    CHECK(read_triples_csv(s) == t);
    std::stringstream bad("s,a,next\n0,1,2\n");
    CHECK_THROWS_AS(read_triples_csv(bad), InvalidInput);
}

TEST_CASE("format_double is shortest round trip")
{
    for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5, 123456789.0})
        CHECK(std::stod(format_double(v)) == v);
    CHECK(format_double(0.5) == "0.5");
}
