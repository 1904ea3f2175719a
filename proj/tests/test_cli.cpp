#include "gateaux/cli.hpp"
#include "gateaux/experiments.hpp"
#include "gateaux/oracle.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

using namespace gateaux;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args)
{
    std::ostringstream out, err;
    Run r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path scratch_dir()
{
    static const fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / ("gateaux_cli_test_" + std::to_string(::getpid()));
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

std::string path(const std::string& name) { return (scratch_dir() / name).string(); }

std::string slurp(const std::string& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write(const std::string& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::vector<std::string> lines_of(const std::string& text)
{
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) out.push_back(line);
    return out;
}

}  // namespace

TEST_CASE("estimate on the discrete cube")
{
    const std::string out = path("cube.json");
    const Run r = run({"estimate", "--dgp", "discrete-cube", "--functional", "mpo", "--eps", "1e-6", "--out", out});
    REQUIRE(r.code == exit_code::ok);
    CHECK(r.out.find("plugin=0.5") != std::string::npos);
    const auto j = nlohmann::json::parse(slurp(out));
    CHECK(j["one_step"].get<double>() == doctest::Approx(0.5).epsilon(1e-4));
    CHECK(j["schema_version"] == 1);
    CHECK(j["command"] == "estimate");
}

TEST_CASE("configuration and data errors map to exit codes")
{
    const Run eps0 = run({"estimate", "--dgp", "discrete-cube", "--eps", "0"});
    CHECK(eps0.code == exit_code::config);
    CHECK(eps0.err.find("eps must be positive") != std::string::npos);

    const std::string missing = path("no_such_file.csv");
    const Run nofile = run({"estimate", "--data", missing});
    CHECK(nofile.code == exit_code::data);
    CHECK(nofile.err.find(missing) != std::string::npos);

    CHECK(run({"estimate", "--no-such-flag"}).code == exit_code::config);
    CHECK(run({"frobnicate"}).code == exit_code::config);
    CHECK(run({}).code == exit_code::config);

    const std::string cfg = path("bad_key.json");
    write(cfg, R"({"n": 10, "colour": "red"})");
    const Run bad = run({"estimate", "--config", cfg});
    CHECK(bad.code == exit_code::config);
    CHECK(bad.err.find("colour") != std::string::npos);

    const std::string broken = path("broken.json");
    write(broken, "{ not json");
    CHECK(run({"sweep", "--config", broken}).code == exit_code::config);

    const std::string csv = path("bad.csv");
    write(csv, "x0,a0,y\n0.1,1,2.0\n0.2,abc,1.0\n");
    CHECK(run({"estimate", "--data", csv}).code == exit_code::data);
}

TEST_CASE("help lists every flag")
{
    const std::map<std::string, std::vector<std::string>> flags{
        {"estimate",
         {"--config", "--dump-config", "--data", "--dgp", "--n", "--seed", "--bandwidth", "--kernel", "--lambda",
          "--eps", "--scheme", "--functional", "--arm", "--regime", "--integrator", "--threads", "--out"}},
        {"sweep", {"--config", "--dgp", "--n", "--eps-grid", "--lambda-grid", "--bandwidth", "--svg", "--out"}},
        {"mdp",
         {"--spec", "--constraints", "--triples", "--nS", "--nA", "--gamma", "--eps", "--weighting", "--validate",
          "--strict-nondegenerate", "--n-triples"}},
        {"dtr", {"--data", "--T", "--n", "--eps", "--validate", "--regime"}},
        {"compare", {"--n-list", "--n-seeds", "--bandwidth", "--lambda", "--eps", "--estimators", "--svg"}},
    };
    for (const auto& [cmd, names] : flags) {
        const Run r = run({cmd, "--help"});
        CHECK(r.code == exit_code::ok);
        for (const auto& f : names) {
            INFO(cmd << " " << f);
            CHECK(r.out.find(f) != std::string::npos);
        }
    }
    const Run top = run({"--help"});
    CHECK(top.code == exit_code::ok);
    for (const char* cmd : {"estimate", "sweep", "mdp", "dtr", "compare"}) CHECK(top.out.find(cmd) != std::string::npos);
}

TEST_CASE("dump-config round trips and flags override the config file")
{
    for (const char* cmd : {"estimate", "sweep", "mdp", "dtr", "compare"}) {
        INFO(cmd);
        const Run first = run({cmd, "--dump-config", "--seed", "42"});
        REQUIRE(first.code == exit_code::ok);
        const std::string file = path(std::string(cmd) + "_cfg.json");
        write(file, first.out);
        const Run second = run({cmd, "--config", file, "--dump-config"});
        REQUIRE(second.code == exit_code::ok);
        CHECK(nlohmann::json::parse(second.out) == nlohmann::json::parse(first.out));
        CHECK(nlohmann::json::parse(first.out)["seed"] == 42);

        const Run over = run({cmd, "--config", file, "--seed", "7", "--dump-config"});
        CHECK(nlohmann::json::parse(over.out)["seed"] == 7);
    }
}

TEST_CASE("reruns are byte-identical and independent of the thread count")
{
    const std::vector<std::string> sweep{"sweep", "--n", "80", "--eps-grid", "1e-2,1e-4", "--lambda-grid", "0.1,0.05"};
    auto with = [](std::vector<std::string> a, std::vector<std::string> extra) {
        a.insert(a.end(), extra.begin(), extra.end());
        return a;
    };
    const Run a = run(with(sweep, {"--threads", "1"}));
    const Run b = run(with(sweep, {"--threads", "1"}));
    const Run c = run(with(sweep, {"--threads", "8"}));
    REQUIRE(a.code == exit_code::ok);
    CHECK(a.out == b.out);
    CHECK(a.out == c.out);

    const std::vector<std::string> cmp{"compare", "--n-list", "60,120", "--n-seeds", "4"};
    const Run c1 = run(with(cmp, {"--threads", "1"}));
    const Run c8 = run(with(cmp, {"--threads", "8"}));
    REQUIRE(c1.code == exit_code::ok);
    CHECK(c1.out == c8.out);

    const std::string o1 = path("est1.json"), o8 = path("est8.json");
    REQUIRE(run({"estimate", "--n", "100", "--threads", "1", "--out", o1}).code == exit_code::ok);
    REQUIRE(run({"estimate", "--n", "100", "--threads", "8", "--out", o8}).code == exit_code::ok);
    nlohmann::json j1 = nlohmann::json::parse(slurp(o1)), j8 = nlohmann::json::parse(slurp(o8));
    j1["config"].erase("threads");
    j8["config"].erase("threads");
    CHECK(j1 == j8);

    const std::string m1 = path("mdp1.json"), m8 = path("mdp8.json");
    REQUIRE(run({"mdp", "--nS", "4", "--n-triples", "200", "--threads", "1", "--out", m1}).code == exit_code::ok);
    REQUIRE(run({"mdp", "--nS", "4", "--n-triples", "200", "--threads", "8", "--out", m8}).code == exit_code::ok);
    nlohmann::json k1 = nlohmann::json::parse(slurp(m1)), k8 = nlohmann::json::parse(slurp(m8));
    k1["config"].erase("threads");
    k8["config"].erase("threads");
    CHECK(k1 == k8);
}

TEST_CASE("sweep CSV shape, schema line and SVG")
{
    const std::string csv = path("sweep.csv"), svg = path("sweep.svg");
    const Run r = run({"sweep", "--dgp", "discrete-cube", "--n", "16", "--eps-grid", "1e-1,1e-2,1e-3", "--lambda-grid",
                       "0.1,0.05", "--out", csv, "--svg", svg});
    REQUIRE(r.code == exit_code::ok);
    const auto lines = lines_of(slurp(csv));
    REQUIRE(lines.size() == 2 + 3);
    CHECK(lines[0] == "# schema_version=1");
    CHECK(lines[1].rfind("eps,lambda=", 0) == 0);
    for (std::size_t i = 1; i < lines.size(); ++i) CHECK(std::count(lines[i].begin(), lines[i].end(), ',') == 2);
    // Monotone column on the discrete cube.
    double prev = 1e300;
    for (std::size_t i = 2; i < lines.size(); ++i) {
        const double v = std::stod(lines[i].substr(lines[i].find(',') + 1));
        CHECK(v < prev);
        prev = v;
    }
    const std::string pic = slurp(svg);
    CHECK(pic.rfind("<svg", 0) == 0);
    CHECK(pic.find("</svg>") != std::string::npos);
}

TEST_CASE("one-by-one sweep equals a single derivative error")
{
    const Run r = run({"sweep", "--dgp", "discrete-cube", "--n", "8", "--eps-grid", "1e-3", "--lambda-grid", "0.05"});
    REQUIRE(r.code == exit_code::ok);
    const auto lines = lines_of(r.out);
    REQUIRE(lines.size() == 3);
    const double mae = std::stod(lines[2].substr(lines[2].find(',') + 1));

    const auto cube = discrete_cube();
    const Dataset d = discrete_cube_data(8);
    FunctionalSpec spec;
    const Functional f = make_functional(spec);
    const std::vector<int> regime{1};
    double expect = 0.0;
    for (const auto& o : d.rows)
        expect += std::abs(empirical_gateaux(f, cube, o, DiffScheme::forward(1e-3)).value -
                           exact_derivative_discrete(regime, *cube, o));
    CHECK(mae == doctest::Approx(expect / d.size()).epsilon(1e-12));
}

TEST_CASE("mdp command")
{
    const std::string spec = path("one_state.json");
    write(spec, R"({"nS":1,"nA":1,"gamma":0.9,"P":[[[1.0]]],"r":[[2.0]],"mu0":[1.0]})");
    const std::string out = path("one_state_out.json");
    const Run r = run({"mdp", "--spec", spec, "--out", out});
    REQUIRE(r.code == exit_code::ok);
    const auto j = nlohmann::json::parse(slurp(out));
    REQUIRE(j["derivatives"].size() == 1);
    CHECK(std::abs(j["derivatives"][0]["fd"].get<double>()) < 1e-12);
    CHECK(std::abs(j["derivatives"][0]["closed_form"].get<double>()) < 1e-12);

    const Run v = run({"mdp", "--nS", "5", "--nA", "3", "--validate", "--eps", "1e-6"});
    REQUIRE(v.code == exit_code::ok);
    const auto pos = v.out.find("max |fd - closed_form| = ");
    REQUIRE(pos != std::string::npos);
    CHECK(std::stod(v.out.substr(pos + 25)) <= 1e-4);

    const std::string cons = path("infeasible.json");
    write(cons, R"({"constraints":[{"coef":[[1,1],[1,1],[1,1]],"sense":">=","rhs":1.5}]})");
    CHECK(run({"mdp", "--nS", "3", "--nA", "2", "--constraints", cons}).code == exit_code::infeasible);

    const std::string twin = path("twin.json");
    write(twin, R"({"nS":2,"nA":2,"gamma":0.9,"P":[[[0.5,0.5],[0.5,0.5]],[[0.2,0.8],[0.2,0.8]]],)"
                R"("r":[[1.0,1.0],[0.0,0.0]],"mu0":[0.5,0.5]})");
    CHECK(run({"mdp", "--spec", twin}).code == exit_code::ok);
    CHECK(run({"mdp", "--spec", twin, "--strict-nondegenerate"}).code == exit_code::degenerate);

    const std::string triples = path("triples.csv");
    write(triples, "s,a,s_next\n0,0,1\n1,0,0\n");
    CHECK(run({"mdp", "--spec", twin, "--triples", triples}).code == exit_code::data);
}

TEST_CASE("dtr command validates against the influence function")
{
    const Run r = run({"dtr", "--T", "2", "--n", "400", "--validate", "--scheme", "central", "--eps", "1e-5"});
    REQUIRE(r.code == exit_code::ok);
    const auto pos = r.out.find("max |fd - eif| = ");
    REQUIRE(pos != std::string::npos);
    CHECK(std::stod(r.out.substr(pos + 17)) <= 1e-4);
}

TEST_CASE("compare with the truth estimator has zero error")
{
    const std::string csv = path("cmp.csv");
    const Run r = run({"compare", "--n-list", "50", "--n-seeds", "3", "--estimators", "truth", "--out", csv});
    REQUIRE(r.code == exit_code::ok);
    const auto lines = lines_of(slurp(csv));
    REQUIRE(lines.size() == 3);
    CHECK(lines[1] == "estimator,n,mean_abs_error,rmse,mean_estimate,ok,failed");
    CHECK(lines[2].rfind("truth,50,0,0,", 0) == 0);
}

TEST_CASE("log level comes from the environment")
{
    ::setenv("GATEAUX_LOG", "info", 1);
    const Run loud = run({"estimate", "--dgp", "discrete-cube"});
    ::setenv("GATEAUX_LOG", "error", 1);
    const Run quiet = run({"estimate", "--dgp", "discrete-cube"});
    ::unsetenv("GATEAUX_LOG");
    CHECK(loud.err.find("info") != std::string::npos);
    CHECK(quiet.err.empty());
}

TEST_CASE("the installed binary reports exit codes")
{
    const std::string bin = GATEAUX_CLI_PATH;
    auto status = [&](const std::string& args) {
        const int raw = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
        return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    };
    CHECK(status("--help") == exit_code::ok);
    CHECK(status("estimate --dgp discrete-cube --eps 0") == exit_code::config);
    CHECK(status("estimate --data " + path("absent.csv")) == exit_code::data);
}
