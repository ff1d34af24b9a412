#include "ife/cli.hpp"
#include "ife/estimator.hpp"
#include "ife/inference.hpp"
#include "ife/io.hpp"
#include "ife/simulation.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace ife;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    args.insert(args.begin(), "ife_cli");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Run r;
    r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch_dir() {
    const fs::path dir = fs::temp_directory_path() / "ife_cli_tests";
    fs::create_directories(dir);
    return dir;
}

fs::path generated_panel() {
    const fs::path p = scratch_dir() / "panel.csv";
    DgpConfig cfg;
    cfg.n = 40;
    cfg.t = 20;
    cfg.seed = 21;
    write_panel_csv(p.string(), simulate_ar1(cfg).data);
    return p;
}

}  // namespace

TEST_CASE("cli estimate matches the library") {
    const fs::path panel = generated_panel();
    const Run r = cli({"estimate", "--input", panel.string(), "--factors", "1", "--bandwidth", "auto", "--format", "csv"});
    REQUIRE(r.code == 0);

    const LoadedPanel lp = read_panel_csv(panel.string());
    const FitResult fit = minimize_profile(lp.data, ModelSpec{});
    const InferenceResult inf = bias_corrected(fit, lp.data, KernelConfig{auto_bandwidth(20)});
    const std::string golden = "name,beta_hat,beta_star,std_err\ny_lag," + format_double(fit.beta_hat(0)) + "," +
                               format_double(inf.beta_star(0)) + "," + format_double(inf.std_err(0)) + "\n";
    CHECK(r.out == golden);

    const Run j = cli({"estimate", "--input", panel.string(), "--jackknife"});
    REQUIRE(j.code == 0);
    const auto rec = nlohmann::json::parse(j.out);
    CHECK(rec["coefficients"].size() == 1);
    CHECK(rec["bandwidth_used"] == 4);
    CHECK(rec["coefficients"][0].contains("beta_jackknife"));
    CHECK(rec["fit"]["starts"].size() == 5);
    CHECK(rec.contains("diagnostics"));
}

TEST_CASE("cli input errors exit with status 2") {
    const fs::path panel = generated_panel();
    const Run big = cli({"estimate", "--input", panel.string(), "--factors", "50"});
    CHECK(big.code == 2);
    CHECK(nlohmann::json::parse(big.err)["exit_code"] == 2);

    const fs::path bad = scratch_dir() / "bad.csv";
    {
        std::string text = slurp(panel);
        text.replace(0, text.find('\n'), "unit,period,y,y_lag");
        std::ofstream(bad) << text;
    }
    const Run missing = cli({"estimate", "--input", bad.string()});
    CHECK(missing.code == 2);
    CHECK(missing.err.find("'time'") != std::string::npos);

    CHECK(cli({"estimate", "--input", (scratch_dir() / "nope.csv").string()}).code == 2);
    CHECK(cli({"estimate"}).code == 2);
    CHECK(cli({"frobnicate"}).code == 2);
    CHECK(cli({"simulate", "--reps", "0"}).code == 2);
    CHECK(cli({"simulate", "--table", "5"}).code == 2);
    CHECK(cli({"test", "--input", panel.string(), "--restriction", "1,2=0"}).code == 2);
}

TEST_CASE("cli test, diagnose and lsmd") {
    const fs::path panel = generated_panel();
    const Run t = cli({"test", "--input", panel.string(), "--restriction", "1=0.3", "--format", "csv"});
    REQUIRE(t.code == 0);
    CHECK(t.out.find("LR*") != std::string::npos);
    CHECK(std::count(t.out.begin(), t.out.end(), '\n') == 7);

    const Run d = cli({"diagnose", "--input", panel.string()});
    REQUIRE(d.code == 0);
    CHECK(nlohmann::json::parse(d.out)["highrank_stat"].get<double>() > 0.0);

    const fs::path endo = scratch_dir() / "endog.csv";
    REQUIRE(cli({"simulate", "--panel-out", endo.string(), "--design", "endogenous", "--n", "60", "--t", "15"}).code ==
            0);
    const Run l = cli({"lsmd", "--input", endo.string(), "--endog", "x1", "--instruments", "z"});
    REQUIRE(l.code == 0);
    const auto rec = nlohmann::json::parse(l.out);
    CHECK(rec["coefficients"].size() == 1);
    CHECK(std::abs(rec["gamma_at_solution"][0].get<double>()) < 1e-6);
}

TEST_CASE("cli config file") {
    const fs::path panel = generated_panel();
    const fs::path ini = scratch_dir() / "estimate.ini";
    std::ofstream(ini) << "[estimate]\ninput = " << panel.string() << "\nfactors = 1\nformat = csv\n";
    const Run a = cli({"--config", ini.string(), "estimate"});
    const Run b = cli({"estimate", "--input", panel.string(), "--format", "csv"});
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
}

TEST_CASE("cli simulate is deterministic and writes both formats") {
    const fs::path prefix = scratch_dir() / "study";
    const std::vector<std::string> args{"simulate", "--kind", "estimators", "--n", "30", "--t", "8",
                                        "--reps",   "12",    "--seed", "7",  "--threads", "1"};
    std::vector<std::string> with_out = args;
    with_out.insert(with_out.end(), {"--out", prefix.string()});
    REQUIRE(cli(with_out).code == 0);
    const std::string csv1 = slurp(prefix.string() + ".csv");
    const std::string json1 = slurp(prefix.string() + ".json");
    with_out[with_out.size() - 3] = "3";  // thread count
    REQUIRE(cli(with_out).code == 0);
    CHECK(slurp(prefix.string() + ".csv") == csv1);
    CHECK(slurp(prefix.string() + ".json") == json1);
    CHECK(cli(args).out == csv1);
    CHECK(nlohmann::json::parse(json1)["cells"].size() == 1);
}

TEST_CASE("cli table 3 grid") {
    const Run r = cli({"simulate", "--table", "3", "--scale", "0.05", "--seed", "7"});
    REQUIRE(r.code == 0);
    std::set<std::pair<std::string, std::string>> grid;
    std::istringstream in(r.out);
    std::string line;
    std::getline(in, line);
    const std::vector<std::string> header = split_csv_line(line);
    const auto col = [&](const std::string& name) {
        return static_cast<size_t>(std::find(header.begin(), header.end(), name) - header.begin());
    };
    while (std::getline(in, line)) {
        const std::vector<std::string> f = split_csv_line(line);
        grid.insert({f[col("rho0")], f[col("bandwidth")]});
    }
    CHECK(grid.size() == 32);
}
