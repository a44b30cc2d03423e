#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <poisimex/poisimex.hpp>

namespace {

using namespace poisimex;

std::vector<double> parse_double_list(const std::string& text, const char* flag) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = text.find(',', start);
        const std::string tok =
            text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        try {
            std::size_t used = 0;
            const double v = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            out.push_back(v);
        } catch (const std::exception&) {
            throw InvalidParameter(std::string(flag) + ": cannot parse '" + tok + "' as a number");
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

VarianceMode parse_variance_flag(const std::string& text) {
    if (text == "estimated") return VarianceMode::estimated();
    if (text.rfind("known:", 0) == 0) {
        const std::string num = text.substr(6);
        try {
            std::size_t used = 0;
            const double v = std::stod(num, &used);
            if (used != num.size()) throw std::invalid_argument(num);
            return VarianceMode::known(v);
        } catch (const std::exception&) {
            throw InvalidParameter("--variance: cannot parse '" + num + "' in known:<value>");
        }
    }
    throw InvalidParameter("--variance must be 'estimated' or 'known:<value>'");
}

PerturbScale parse_perturb_flag(const std::string& text) {
    if (text == "density") return PerturbScale::density;
    if (text == "count") return PerturbScale::count;
    throw InvalidParameter("--perturb-scale must be 'density' or 'count'");
}

struct GenerateArgs {
    std::size_t n = 0;
    std::uint64_t seed = 0;
    double beta0 = 2.0, beta_x = 1.0;
    std::string beta_z = "0.5";
    double sigma_eps = 5.0;
    std::string x_gamma = "1,10";
    std::string z_uniform = "0.5,9";
    double area = 1.0;
    bool keep_truth = false;
    std::string out;
};

int run_generate(const GenerateArgs& args) {
    if (args.n < 2) throw InvalidParameter("--n must be at least 2");
    if (!(args.area > 0.0)) throw InvalidParameter("--area must be > 0");
    GenerationConfig cfg;
    cfg.n = args.n;
    cfg.beta.intercept = args.beta0;
    cfg.beta.beta_x = args.beta_x;
    if (!args.beta_z.empty()) cfg.beta.beta_z = parse_double_list(args.beta_z, "--beta-z");
    cfg.sigma_eps = args.sigma_eps;
    const auto gamma = parse_double_list(args.x_gamma, "--x-gamma");
    if (gamma.size() != 2) throw InvalidParameter("--x-gamma expects shape,scale");
    cfg.x_shape = gamma[0];
    cfg.x_scale = gamma[1];
    const auto zu = parse_double_list(args.z_uniform, "--z-uniform");
    if (zu.size() != 2) throw InvalidParameter("--z-uniform expects low,high");
    cfg.z_low = zu[0];
    cfg.z_high = zu[1];
    cfg.area = {args.area};
    validate_generation_config(cfg);
    const Dataset ds = generate_dataset(cfg, RngStream(args.seed));
    write_dataset_csv(ds, args.out, args.keep_truth);
    return 0;
}

struct FitArgs {
    std::string data;
    std::string lambda_grid = "0,0.5,1,1.5,2";
    std::size_t b = 100;
    std::string extrapolant = "quadratic";
    std::string variance = "estimated";
    std::string perturb_scale = "density";
    std::uint64_t seed = 0;
    std::string profile_out;
};

void write_profile_csv(const SimexProfile& profile, std::size_t p, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write '" + path + "'");
    os << "lambda,intercept,beta_x";
    for (std::size_t j = 0; j < p; ++j) os << ",beta_z" << (j + 1);
    os << "\n";
    for (std::size_t k = 0; k < profile.lambdas.size(); ++k) {
        const CoefficientVector& est = profile.mean_estimates[k];
        os << fmt_g17(profile.lambdas[k]) << ',' << fmt_g17(est.intercept) << ','
           << fmt_g17(est.beta_x);
        for (std::size_t j = 0; j < p; ++j) os << ',' << fmt_g17(est.beta_z[j]);
        os << '\n';
    }
    os.flush();
    if (!os) throw IoError("error writing '" + path + "'");
}

int run_fit(const FitArgs& args) {
    const Dataset ds = read_dataset_csv(args.data);
    SimexConfig cfg;
    cfg.lambda_grid = parse_double_list(args.lambda_grid, "--lambda-grid");
    cfg.b_reps = args.b;
    cfg.extrapolant = parse_extrapolant(args.extrapolant);
    cfg.variance_mode = parse_variance_flag(args.variance);
    cfg.perturb_scale = parse_perturb_flag(args.perturb_scale);
    const SimexEstimate est = poi_simex(ds, cfg, RngStream(args.seed));
    if (est.profile.degenerate_sigma) {
        std::cerr << "warning: all pseudo-error scales are zero; SIMEX equals the naive fit\n";
    }

    const std::size_t p = ds.p();
    std::string report;
    report += "beta_x_simex=" + fmt_g6(est.coefficients.beta_x) + "\n";
    report += "beta_x_naive=" + fmt_g6(est.naive.beta_x) + "\n";
    report += "intercept_simex=" + fmt_g6(est.coefficients.intercept) + "\n";
    report += "intercept_naive=" + fmt_g6(est.naive.intercept) + "\n";
    for (std::size_t j = 0; j < p; ++j) {
        const std::string tag = "beta_z" + std::to_string(j + 1);
        report += tag + "_simex=" + fmt_g6(est.coefficients.beta_z[j]) + "\n";
        report += tag + "_naive=" + fmt_g6(est.naive.beta_z[j]) + "\n";
    }
    double sigma2_mean = 0.0;
    for (double s : est.sigma_hat) sigma2_mean += s * s;
    sigma2_mean /= static_cast<double>(est.sigma_hat.size());
    report += "sigma2_hat_mean=" + fmt_g6(sigma2_mean) + "\n";
    const ExtrapolantFit& slope_fit = est.fits[1]; // the beta_x fit
    report += "extrapolant=" + extrapolant_name(slope_fit.kind) + "\n";
    report += std::string("fallback_used=") + (slope_fit.fallback_used ? "true" : "false") + "\n";
    report += std::string("converged=") + (slope_fit.converged ? "true" : "false") + "\n";
    std::fputs(report.c_str(), stdout);

    if (!args.profile_out.empty()) write_profile_csv(est.profile, p, args.profile_out);
    return 0;
}

struct StudyArgs {
    std::string config;
    std::string out;
    std::size_t threads = 1;
};

int run_study_cmd(const StudyArgs& args) {
    StudyConfig cfg = load_study_config(args.config);
    if (!args.out.empty()) cfg.output_dir = args.out;
    if (cfg.output_dir.empty()) {
        throw InvalidParameter("no output directory: set output_dir in the config or pass --out");
    }
    if (args.threads < 1) throw InvalidParameter("--threads must be >= 1");
    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + cfg.output_dir + "'");

    const StudyResult result = run_study(cfg, args.threads);
    emit_study_csv(result, cfg.output_dir);
    std::printf("wrote %s/cells.csv\n", cfg.output_dir.c_str());
    std::printf("wrote %s/summary.csv\n", cfg.output_dir.c_str());
    for (EstimatorKind kind : result.estimators) {
        const std::string name = estimator_name(kind);
        const std::string path = cfg.output_dir + "/boxplot_" + name + ".svg";
        emit_boxplot_svg(result, name, path);
        std::printf("wrote %s\n", path.c_str());
    }
    if (result.degraded) {
        std::cerr << "warning: more than 5% of study cells failed; see cells.csv status column\n";
    }
    return 0;
}

struct CurveArgs {
    double mean_x = 0.0;
    double var_x = 0.0;
    double beta1 = 0.0;
    std::string lambda_grid;
};

int run_curve(const CurveArgs& args) {
    PopulationMoments moments{args.mean_x, args.var_x};
    const auto grid = parse_double_list(args.lambda_grid, "--lambda-grid");
    std::string out;
    for (double lambda : grid) {
        out += fmt_g17(lambda) + "," + fmt_g17(attenuation_curve(moments, args.beta1, lambda)) +
               "\n";
    }
    std::fputs(out.c_str(), stdout);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"POI-SIMEX: measurement-error correction for Poisson-count surrogates"};
    app.require_subcommand(1);

    GenerateArgs gen;
    CLI::App* g = app.add_subcommand("generate", "Generate a synthetic dataset CSV");
    g->add_option("--n", gen.n, "number of subjects (>= 2)")->required();
    g->add_option("--seed", gen.seed, "RNG seed (default 0)");
    g->add_option("--beta0", gen.beta0, "true intercept (default 2)");
    g->add_option("--beta-x", gen.beta_x, "true coefficient of the error-prone covariate (default 1)");
    g->add_option("--beta-z", gen.beta_z,
                  "comma-separated true z coefficients; empty for none (default 0.5)");
    g->add_option("--sigma-eps", gen.sigma_eps, "noise standard deviation (default 5)");
    g->add_option("--x-gamma", gen.x_gamma, "gamma shape,scale for X (default 1,10)");
    g->add_option("--z-uniform", gen.z_uniform, "uniform low,high for Z columns (default 0.5,9)");
    g->add_option("--area", gen.area, "constant observation area (default 1)");
    g->add_flag("--keep-truth", gen.keep_truth, "append hidden x,eps columns to the CSV");
    g->add_option("--out", gen.out, "output CSV path")->required();

    FitArgs fit;
    CLI::App* f = app.add_subcommand("fit", "Run the POI-SIMEX estimator on a dataset CSV");
    f->add_option("--data", fit.data, "input dataset CSV")->required();
    f->add_option("--lambda-grid", fit.lambda_grid,
                  "comma-separated pseudo-error levels (default 0,0.5,1,1.5,2)");
    f->add_option("--b", fit.b, "pseudo-replicates per lambda (default 100)");
    f->add_option("--extrapolant", fit.extrapolant, "linear|quadratic|rational (default quadratic)");
    f->add_option("--variance", fit.variance, "estimated | known:<value> (default estimated)");
    f->add_option("--perturb-scale", fit.perturb_scale,
                  "density|count pseudo-error scale (default density)");
    f->add_option("--seed", fit.seed, "RNG seed for pseudo-errors (default 0)");
    f->add_option("--profile-out", fit.profile_out, "write the per-lambda profile CSV here");

    StudyArgs study;
    CLI::App* s = app.add_subcommand("study", "Run a replicated Monte Carlo study");
    s->add_option("--config", study.config, "study configuration JSON")->required();
    s->add_option("--out", study.out, "output directory (overrides config output_dir)");
    s->add_option("--threads", study.threads, "worker threads (default 1)");

    CurveArgs curve;
    CLI::App* c = app.add_subcommand("curve", "Print the theoretical attenuation curve");
    c->add_option("--mean-x", curve.mean_x, "E[X]")->required();
    c->add_option("--var-x", curve.var_x, "Var[X]")->required();
    c->add_option("--beta1", curve.beta1, "true slope")->required();
    c->add_option("--lambda-grid", curve.lambda_grid, "comma-separated lambda values (>= -1)")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (g->parsed()) return run_generate(gen);
        if (f->parsed()) return run_fit(fit);
        if (s->parsed()) return run_study_cmd(study);
        if (c->parsed()) return run_curve(curve);
        std::cerr << "error: no subcommand\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return 3;
    } catch (const InvalidParameter& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const DimensionMismatch& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const InsufficientGrid& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const EmptyInput& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const UnknownEstimator& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const Error& e) {
        std::cerr << "estimation error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
