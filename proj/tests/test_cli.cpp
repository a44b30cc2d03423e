#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <poisimex/csv.hpp>

using namespace poisimex;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string output; // stdout + stderr interleaved
};

CmdResult run_cli(const std::string& args) {
    const std::string cmd = std::string(CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CmdResult result;
    char buf[4096];
    std::size_t got = 0;
    while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) result.output.append(buf, got);
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    std::ostringstream buf;
    buf << is.rdbuf();
    return buf.str();
}

std::string report_value(const std::string& report, const std::string& key) {
    const std::string needle = key + "=";
    const std::size_t at = report.find(needle);
    REQUIRE(at != std::string::npos);
    const std::size_t end = report.find('\n', at);
    return report.substr(at + needle.size(), end - at - needle.size());
}

const std::string kDir = "cli_tmp";

struct DirSetup {
    DirSetup() { std::filesystem::create_directories(kDir); }
};
const DirSetup setup_once;

} // namespace

TEST_CASE("generate writes header plus n rows", "[cli]") {
    const CmdResult r = run_cli("generate --n 10 --seed 1 --out " + kDir + "/gen10.csv");
    REQUIRE(r.exit_code == 0);
    const std::string text = slurp(kDir + "/gen10.csv");
    REQUIRE(std::count(text.begin(), text.end(), '\n') == 11); // splits into 12 segments
    REQUIRE(text.rfind("y,w,a,z1\n", 0) == 0);
    REQUIRE(text.back() == '\n');
}

TEST_CASE("generate rejects --n 0 naming the flag", "[cli]") {
    const CmdResult r = run_cli("generate --n 0 --seed 1 --out " + kDir + "/none.csv");
    REQUIRE(r.exit_code == 1);
    REQUIRE(r.output.find("--n") != std::string::npos);
}

TEST_CASE("generated x column has the configured gamma mean", "[cli]") {
    const CmdResult r = run_cli("generate --n 100000 --seed 5 --x-gamma 1,10 --keep-truth --out " +
                                kDir + "/gen_mean.csv");
    REQUIRE(r.exit_code == 0);
    const Dataset ds = read_dataset_csv(kDir + "/gen_mean.csv");
    REQUIRE(ds.truth.has_value());
    double mean = 0;
    for (double x : ds.truth->x) mean += x;
    mean /= static_cast<double>(ds.n());
    REQUIRE(std::abs(mean - 10.0) < 0.3);
}

TEST_CASE("unknown flags exit 1", "[cli]") {
    const CmdResult r = run_cli("generate --n 10 --wibble 3 --out x.csv");
    REQUIRE(r.exit_code == 1);
}

TEST_CASE("help exits 0 and lists every flag", "[cli]") {
    const CmdResult top = run_cli("--help");
    REQUIRE(top.exit_code == 0);
    for (const char* sub : {"generate", "fit", "study", "curve"}) {
        REQUIRE(top.output.find(sub) != std::string::npos);
    }
    const CmdResult fit = run_cli("fit --help");
    REQUIRE(fit.exit_code == 0);
    for (const char* flag : {"--data", "--lambda-grid", "--b", "--extrapolant", "--variance",
                             "--perturb-scale", "--seed", "--profile-out"}) {
        REQUIRE(fit.output.find(flag) != std::string::npos);
    }
    const CmdResult gen = run_cli("generate --help");
    REQUIRE(gen.exit_code == 0);
    for (const char* flag : {"--n", "--seed", "--beta0", "--beta-x", "--beta-z", "--sigma-eps",
                             "--x-gamma", "--z-uniform", "--area", "--keep-truth", "--out"}) {
        REQUIRE(gen.output.find(flag) != std::string::npos);
    }
    const CmdResult curve = run_cli("curve --help");
    REQUIRE(curve.exit_code == 0);
    for (const char* flag : {"--mean-x", "--var-x", "--beta1", "--lambda-grid"}) {
        REQUIRE(curve.output.find(flag) != std::string::npos);
    }
    const CmdResult study = run_cli("study --help");
    REQUIRE(study.exit_code == 0);
    for (const char* flag : {"--config", "--out", "--threads"}) {
        REQUIRE(study.output.find(flag) != std::string::npos);
    }
}

TEST_CASE("fit is bitwise reproducible and correct at desk scale", "[cli]") {
    REQUIRE(run_cli("generate --n 5000 --seed 17 --out " + kDir + "/fit_data.csv").exit_code == 0);
    const std::string args = "fit --data " + kDir +
                             "/fit_data.csv --extrapolant rational --b 50 --seed 9 "
                             "--profile-out " +
                             kDir + "/profile.csv";
    const CmdResult first = run_cli(args);
    REQUIRE(first.exit_code == 0);
    const std::string profile1 = slurp(kDir + "/profile.csv");
    const CmdResult second = run_cli(args);
    REQUIRE(second.output == first.output);
    REQUIRE(slurp(kDir + "/profile.csv") == profile1);

    const double beta = std::stod(report_value(first.output, "beta_x_simex"));
    REQUIRE(std::abs(beta - 1.0) < 0.1);
    const double naive = std::stod(report_value(first.output, "beta_x_naive"));
    REQUIRE(std::abs(naive - 0.909) < 0.03);
    REQUIRE(report_value(first.output, "extrapolant") == "rational");
    REQUIRE(report_value(first.output, "fallback_used") == "false");

    REQUIRE(profile1.rfind("lambda,intercept,beta_x,beta_z1\n", 0) == 0);
    REQUIRE(std::count(profile1.begin(), profile1.end(), '\n') == 6); // header + 5 grid rows
}

TEST_CASE("fit with known zero variance collapses to the naive fit", "[cli]") {
    REQUIRE(run_cli("generate --n 500 --seed 3 --out " + kDir + "/flat.csv").exit_code == 0);
    const CmdResult r =
        run_cli("fit --data " + kDir + "/flat.csv --variance known:0 --seed 8");
    REQUIRE(r.exit_code == 0);
    REQUIRE(report_value(r.output, "beta_x_simex") == report_value(r.output, "beta_x_naive"));
    REQUIRE(r.output.find("warning") != std::string::npos); // degenerate sigma diagnostic
}

TEST_CASE("fit maps error classes onto exit codes", "[cli]") {
    const CmdResult missing = run_cli("fit --data /no/such/file.csv");
    REQUIRE(missing.exit_code == 3);
    REQUIRE(missing.output.find("/no/such/file.csv") != std::string::npos);

    const CmdResult badvar =
        run_cli("fit --data " + kDir + "/flat.csv --variance sometimes");
    REQUIRE(badvar.exit_code == 1);

    const CmdResult badgrid = run_cli("fit --data " + kDir + "/flat.csv --lambda-grid 0,0.5");
    REQUIRE(badgrid.exit_code == 1);

    // constant counts with zero variance leave the design rank deficient
    std::ofstream bad(kDir + "/const.csv", std::ios::binary);
    bad << "y,w,a\n1,5,1\n2,5,1\n3,5,1\n4,5,1\n";
    bad.close();
    const CmdResult rank = run_cli("fit --data " + kDir + "/const.csv --variance known:0");
    REQUIRE(rank.exit_code == 2);
}

TEST_CASE("curve prints exact attenuation rows", "[cli]") {
    const CmdResult r = run_cli("curve --mean-x 10 --var-x 100 --beta1 1 --lambda-grid -1");
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.output == "-1,1\n");

    const CmdResult zero = run_cli("curve --mean-x 10 --var-x 100 --beta1 1 --lambda-grid 0");
    REQUIRE(zero.output == "0,0.90909090909090906\n");

    const CmdResult flat = run_cli("curve --mean-x 10 --var-x 0 --beta1 1 --lambda-grid 0");
    REQUIRE(flat.output == "0,0\n");

    const CmdResult bad = run_cli("curve --mean-x 10 --var-x 0 --beta1 1 --lambda-grid -1");
    REQUIRE(bad.exit_code == 1); // denominator 0 at lambda = -1
}

TEST_CASE("study runs end to end and is deterministic", "[cli]") {
    const std::string config = kDir + "/study.json";
    {
        std::ofstream os(config, std::ios::binary);
        os << R"({
            "generation": {
                "beta": {"intercept": 2.0, "beta_x": 1.0, "beta_z": [0.5]},
                "sigma_eps": 5.0, "x_shape": 1.0, "x_scale": 10.0,
                "z_low": 0.5, "z_high": 9.0, "area": 1.0
            },
            "sample_sizes": [60, 90],
            "replicates": 4,
            "simex": {"b_reps": 15, "extrapolant": "rational",
                       "variance_mode": {"known": 10.0}},
            "estimators": ["naive", "poi_simex_known", "poi_simex_estimated"],
            "base_seed": 31415
        })";
    }
    const std::string out1 = kDir + "/study_a";
    const std::string out2 = kDir + "/study_b";
    const CmdResult r1 = run_cli("study --config " + config + " --out " + out1 + " --threads 1");
    REQUIRE(r1.exit_code == 0);
    const CmdResult r2 = run_cli("study --config " + config + " --out " + out2 + " --threads 8");
    REQUIRE(r2.exit_code == 0);
    REQUIRE(slurp(out1 + "/cells.csv") == slurp(out2 + "/cells.csv"));
    REQUIRE(slurp(out1 + "/summary.csv") == slurp(out2 + "/summary.csv"));
    for (const char* est : {"naive", "poi_simex_known", "poi_simex_estimated"}) {
        REQUIRE(slurp(out1 + "/boxplot_" + est + ".svg") ==
                slurp(out2 + "/boxplot_" + est + ".svg"));
    }
    const auto header_end = slurp(out1 + "/cells.csv").find('\n');
    REQUIRE(slurp(out1 + "/cells.csv").substr(0, header_end) ==
            "n,rep,estimator,beta_x,intercept,beta_z1,status");
}

TEST_CASE("study without a config file exits 3 with the path", "[cli]") {
    const CmdResult r = run_cli("study --config /missing/study.json --out " + kDir + "/x");
    REQUIRE(r.exit_code == 3);
    REQUIRE(r.output.find("/missing/study.json") != std::string::npos);
}

TEST_CASE("study config typos exit 1", "[cli]") {
    const std::string config = kDir + "/bad_study.json";
    {
        std::ofstream os(config, std::ios::binary);
        os << R"({"generation": {"beta": {"intercept": 0, "beta_x": 1}, "sigma_eps": 1,
                  "x_shape": 1, "x_scale": 1},
                 "sample_sizes": [10], "replicates": 1,
                 "estimators": ["naive"], "base_seed": 1, "output_dirr": "typo"})";
    }
    const CmdResult r = run_cli("study --config " + config + " --out " + kDir + "/y");
    REQUIRE(r.exit_code == 1);
    REQUIRE(r.output.find("output_dirr") != std::string::npos);
}
