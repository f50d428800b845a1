#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "app.hpp"
#include "deconv/error.hpp"
#include "deconv/noise.hpp"
#include "deconv/sample_io.hpp"
#include "deconv/simulation.hpp"

using namespace deconv;
using namespace deconv::app;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("deconv_cli_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    f << text;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

struct Run {
    int rc;
    std::string out, err;
};

Run cli(std::vector<std::string> args) {
    args.insert(args.begin(), "deconv");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int rc = run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {rc, out.str(), err.str()};
}

}  // namespace

TEST_CASE("config round trip and strict keys") {
    RunConfig c;
    c.d = 2;
    c.p = 3.0;
    c.seed = 77;
    c.threads = 3;
    c.noise_law = NoiseLaw::laplace;
    c.alpha = 0.5;
    c.kernel_m = 3;
    c.grid_k_min = -4;
    c.grid_k_max = 0;
    c.eval_lo = {-1, -1};
    c.eval_hi = {1, 1};
    c.beta = {2, 1.5};
    c.r = {1, std::numeric_limits<double>::infinity()};
    c.L = {6, 1};
    c.rates_mu = std::vector<double>{2, 2};
    c.sweep = SweepSpec{"beta", 1, 0.5, 3.0, 6};
    c.density = {"gauss_mixture", {0.3, -1, 0.5, 0.7, 1, 0.4}};
    c.replications = {5, 5};
    c.window = {{-2, -2}, {2, 2}, 8};
    c.estimator = EstimatorKind::fixed;
    c.fixed_exponents = {-2, -3};
    c.fit_form = FitForm::power;

    const json j = json::parse(c.to_json().dump());
    const RunConfig back = RunConfig::from_json(j);
    CHECK(back == c);
    CHECK(RunConfig::from_json(json::parse(back.to_json().dump())) == back);
    CHECK(RunConfig::from_json(json::object()) == RunConfig{});

    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"nope":1})")), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"noise":{"law":"laplace","sigma":1}})")), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"d":"two"})")), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"grid":{"k_min":-3}})")), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"simulate":{"estimator":"magic"}})")), ValidationError);
}

TEST_CASE("rates command") {
    TempDir tmp("rates");
    write_text(tmp / "a.json", R"({"p":2,"rates":{"beta":[2],"r":[2],"n":10000}})");
    auto r = cli({"--config", tmp / "a.json", "--output", tmp / "a", "rates"});
    REQUIRE(r.rc == kOk);
    json j = json::parse(slurp(tmp / "a/rates.json"));
    CHECK(j["zone"] == "dense");
    CHECK(j["rho"].get<double>() == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(j["rho_exact"] == "2/5");

    write_text(tmp / "b.json", R"({"p":2,"rates":{"beta":[2],"r":[2],"alpha":1,"mu":[1]}})");
    REQUIRE(cli({"--config", tmp / "b.json", "--output", tmp / "b", "rates"}).rc == kOk);
    j = json::parse(slurp(tmp / "b/rates.json"));
    CHECK(j["rho"].get<double>() == doctest::Approx(0.285714).epsilon(1e-6));
    CHECK(j["rho_exact"] == "2/7");

    write_text(tmp / "c.json", R"({"p":2,"rates":{"beta":[0.25],"r":[1],"alpha":1,"mu":[2]}})");
    REQUIRE(cli({"--config", tmp / "c.json", "--output", tmp / "c", "rates"}).rc == kOk);
    CHECK(json::parse(slurp(tmp / "c/rates.json"))["consistent"] == false);

    // mu taken from the built-in law when not given
    write_text(tmp / "d.json", R"({"noise":{"law":"laplace","alpha":1},"p":2,"rates":{"beta":[2],"r":[1],"L":[6]}})");
    REQUIRE(cli({"--config", tmp / "d.json", "--output", tmp / "d", "rates"}).rc == kOk);
    CHECK(json::parse(slurp(tmp / "d/rates.json"))["rho_exact"] == "3/14");

    write_text(tmp / "s.json",
               R"({"p":2,"rates":{"beta":[2],"r":[2]},"sweep":{"param":"beta","from":0.5,"to":3,"steps":6}})");
    REQUIRE(cli({"--config", tmp / "s.json", "--output", tmp / "s", "rates", "--sweep"}).rc == kOk);
    std::istringstream rows(slurp(tmp / "s/rates_sweep.csv"));
    std::string line;
    std::getline(rows, line);
    CHECK(line == "beta,zone,boundary,rho,varrho,consistent");
    int count = 0;
    while (std::getline(rows, line)) ++count;
    CHECK(count == 6);

    write_text(tmp / "bad.json", R"({"p":2,"rates":{"beta":[-1],"r":[2]}})");
    CHECK(cli({"--config", tmp / "bad.json", "--output", tmp / "bad", "rates"}).rc == kValidation);
    write_text(tmp / "nosweep.json", R"({"p":2,"rates":{"beta":[2],"r":[2]}})");
    CHECK(cli({"--config", tmp / "nosweep.json", "--output", tmp / "x", "rates", "--sweep"}).rc == kValidation);
}

TEST_CASE("check command") {
    TempDir tmp("check");
    write_text(tmp / "lap.json", R"({"noise":{"law":"laplace","alpha":1}})");
    auto r = cli({"--config", tmp / "lap.json", "--output", tmp / "lap", "check"});
    REQUIRE(r.rc == kOk);
    json j = json::parse(slurp(tmp / "lap/check.json"));
    CHECK(j["mu"] == json::array({2.0}));
    CHECK(j["mu_above_half"] == true);
    CHECK(j["k1"].get<double>() > 0);
    CHECK(j["m_inf"].get<double>() >= 1.0);
    CHECK(r.out.find("mu > 1/2 holds") != std::string::npos);

    write_text(tmp / "eps.json", R"({"noise":{"law":"gaussian","alpha":0.3}})");
    REQUIRE(cli({"--config", tmp / "eps.json", "--output", tmp / "eps", "check"}).rc == kOk);
    j = json::parse(slurp(tmp / "eps/check.json"));
    CHECK(j["declared"].get<double>() == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(j["rule"].get<std::string>().find("1-2alpha") != std::string::npos);

    write_text(tmp / "gauss.json", R"({"noise":{"law":"gaussian","alpha":1}})");
    r = cli({"--config", tmp / "gauss.json", "--output", tmp / "g", "check"});
    CHECK(r.rc == kValidation);
    CHECK(r.err.find("moderate ill-posedness of the noise") != std::string::npos);

    // base smoothness too low for mu = 2: the k1 integrand diverges
    write_text(tmp / "m1.json", R"({"noise":{"law":"laplace","alpha":1},"kernel":{"m":1}})");
    r = cli({"--config", tmp / "m1.json", "--output", tmp / "m1", "check"});
    CHECK(r.rc == kValidation);
    CHECK(r.err.find("kernel Fourier integrability") != std::string::npos);
}

TEST_CASE("exit codes for input errors") {
    TempDir tmp("codes");
    CHECK(cli({"--config", tmp / "missing.json", "check"}).rc == kIo);
    write_text(tmp / "garbage.json", "{ not json");
    CHECK(cli({"--config", tmp / "garbage.json", "check"}).rc == kValidation);
    CHECK(cli({"frobnicate"}).rc == kValidation);
    CHECK(cli({}).rc == kValidation);
    CHECK(cli({"--threads", "0", "rates"}).rc == kValidation);

    write_text(tmp / "est.json", R"({"estimate":{"data":")" + (tmp / "nothere.csv") + R"("}})");
    CHECK(cli({"--config", tmp / "est.json", "--output", tmp / "o", "estimate"}).rc == kIo);
    write_text(tmp / "g.json",
               R"({"noise":{"law":"gaussian","alpha":1},"estimate":{"data":")" + (tmp / "nothere.csv") + R"("}})");
    // the data file is checked before the noise
    CHECK(cli({"--config", tmp / "g.json", "--output", tmp / "o", "estimate"}).rc == kIo);
}

TEST_CASE("estimate command") {
    TempDir tmp("estimate");
    const TestDensity f = make_density({"tensor_spline", {1}}, 1);
    const NoiseSpec g = builtin_noise(NoiseLaw::laplace, 1.0, 1, 0.3);
    write_sample_csv(tmp / "z.csv", sample_model(f, g, 1000, 5));

    const std::string cfg = R"({"noise":{"law":"laplace","alpha":0.3},"estimate":{"data":")" + (tmp / "z.csv") +
                            R"(","lo":[-1],"hi":[1],"count":9,"traces":true}})";
    write_text(tmp / "e.json", cfg);
    auto r = cli({"--config", tmp / "e.json", "--output", tmp / "o", "estimate"});
    REQUIRE(r.rc == kOk);
    std::istringstream rows(slurp(tmp / "o/estimates.csv"));
    std::string line;
    std::getline(rows, line);
    CHECK(line == "x1,f_hat,k1");
    int count = 0;
    while (std::getline(rows, line)) ++count;
    CHECK(count == 9);
    std::istringstream traces(slurp(tmp / "o/traces.jsonl"));
    count = 0;
    while (std::getline(traces, line)) {
        CHECK(json::parse(line).contains("records"));
        ++count;
    }
    CHECK(count == 9);

    const std::string first = slurp(tmp / "o/estimates.csv");
    REQUIRE(cli({"--config", tmp / "e.json", "--output", tmp / "o", "--threads", "3", "estimate"}).rc == kOk);
    CHECK(slurp(tmp / "o/estimates.csv") == first);

    // gaussian deconvolution is rejected before any work
    write_text(tmp / "g.json", R"({"noise":{"law":"gaussian","alpha":1},"estimate":{"data":")" + (tmp / "z.csv") + R"("}})");
    r = cli({"--config", tmp / "g.json", "--output", tmp / "g", "estimate"});
    CHECK(r.rc == kValidation);
    CHECK(r.err.find("moderate ill-posedness of the noise") != std::string::npos);

    write_text(tmp / "d2.json", R"({"d":2,"estimate":{"data":")" + (tmp / "z.csv") + R"("}})");
    CHECK(cli({"--config", tmp / "d2.json", "--output", tmp / "d2", "estimate"}).rc == kValidation);
}

TEST_CASE("simulate command") {
    TempDir tmp("simulate");
    write_text(tmp / "toy.json",
               R"({"simulate":{"sample_sizes":[1024,2048],"replications":[5,5],"window":{"lo":[-1],"hi":[1],"cells":8}}})");
    auto r = cli({"--config", tmp / "toy.json", "--output", tmp / "a", "--threads", "1", "simulate"});
    REQUIRE(r.rc == kOk);
    CHECK(fs::exists(tmp / "a/risk.json"));
    CHECK(fs::exists(tmp / "a/risk.csv"));
    CHECK_FALSE(fs::exists(tmp / "a/verdict.json"));

    REQUIRE(cli({"--config", tmp / "toy.json", "--output", tmp / "b", "--threads", "4", "simulate"}).rc == kOk);
    CHECK(slurp(tmp / "a/risk.json") == slurp(tmp / "b/risk.json"));
    CHECK(slurp(tmp / "a/risk.csv") == slurp(tmp / "b/risk.csv"));

    REQUIRE(cli({"--config", tmp / "toy.json", "--output", tmp / "c", "--seed", "2", "simulate"}).rc == kOk);
    CHECK(slurp(tmp / "a/risk.csv") != slurp(tmp / "c/risk.csv"));

    // too few sizes for a verdict
    CHECK(cli({"--config", tmp / "toy.json", "--output", tmp / "d", "simulate", "--assert-rate"}).rc == kValidation);

    write_text(tmp / "wide.json",
               R"({"simulate":{"sample_sizes":[64,128,256,1024],"replications":[3,3,3,3],)"
               R"("window":{"lo":[-1],"hi":[1],"cells":4}}})");
    r = cli({"--config", tmp / "wide.json", "--output", tmp / "e", "simulate", "--assert-rate", "--inject-constant"});
    CHECK(r.rc == kAssertion);
    const json v = json::parse(slurp(tmp / "e/verdict.json"));
    CHECK(v["pass"] == false);
    CHECK(v["slope"].get<double>() == doctest::Approx(0.0).scale(1.0));
}
