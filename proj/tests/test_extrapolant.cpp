#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <poisimex/rng.hpp>
#include <poisimex/simex.hpp>

using namespace poisimex;

namespace {

/// Builds a p=0 profile whose beta_x column holds the given values.
SimexProfile profile_from(const std::vector<double>& lambdas, const std::vector<double>& beta_x) {
    SimexProfile profile;
    profile.lambdas = lambdas;
    profile.mean_estimates.resize(lambdas.size());
    for (std::size_t k = 0; k < lambdas.size(); ++k) {
        profile.mean_estimates[k].beta_x = beta_x[k];
    }
    return profile;
}

const std::vector<double> kGrid{0.0, 0.5, 1.0, 1.5, 2.0};

} // namespace

TEST_CASE("linear fit is exact on a line", "[extrapolant]") {
    std::vector<double> ys;
    for (double l : kGrid) ys.push_back(3.0 + 2.0 * l);
    const ExtrapolantFit fit = fit_extrapolant(profile_from(kGrid, ys), Extrapolant::linear, 1);
    REQUIRE(fit.kind == Extrapolant::linear);
    REQUIRE(fit.params[0] == Catch::Approx(3.0).margin(1e-12));
    REQUIRE(fit.params[1] == Catch::Approx(2.0).margin(1e-12));
    REQUIRE(fit.rss < 1e-20);
    REQUIRE(extrapolate(fit) == Catch::Approx(1.0).margin(1e-10)); // 3 - 2
}

TEST_CASE("quadratic fit recovers exact polynomial coefficients", "[extrapolant]") {
    const double a = -1.25, b = 0.75, c = 2.5;
    std::vector<double> ys;
    for (double l : kGrid) ys.push_back(a + b * l + c * l * l);
    const ExtrapolantFit fit = fit_extrapolant(profile_from(kGrid, ys), Extrapolant::quadratic, 1);
    REQUIRE(fit.params[0] == Catch::Approx(a).margin(1e-10));
    REQUIRE(fit.params[1] == Catch::Approx(b).margin(1e-10));
    REQUIRE(fit.params[2] == Catch::Approx(c).margin(1e-10));
    REQUIRE(extrapolate(fit) == Catch::Approx(a - b + c).margin(1e-9));
}

TEST_CASE("rational fit recovers the exact attenuation curve", "[extrapolant]") {
    // g(lambda) = 100/(110 + 10*lambda) = 0 + 10/(11 + lambda)
    std::vector<double> ys;
    for (double l : kGrid) ys.push_back(100.0 / (110.0 + 10.0 * l));
    const ExtrapolantFit fit = fit_extrapolant(profile_from(kGrid, ys), Extrapolant::rational, 1);
    REQUIRE(fit.kind == Extrapolant::rational);
    REQUIRE_FALSE(fit.fallback_used);
    REQUIRE(fit.converged);
    const double a = fit.params[0], b = fit.params[1], c = fit.params[2];
    for (std::size_t k = 0; k < kGrid.size(); ++k) {
        REQUIRE(std::abs(a + b / (c + kGrid[k]) - ys[k]) < 1e-8);
    }
    // lambda = -1 recovers the true slope 10/(11-1) = 1
    REQUIRE(std::abs(extrapolate(fit) - 1.0) < 1e-6);
}

TEST_CASE("rational fit is exact on random pole-free rational curves", "[extrapolant]") {
    RngStream s(8675309);
    int checked = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const double a = -5.0 + 10.0 * s.next_double();
        const double b = 0.5 + 19.5 * s.next_double();
        const double c = 2.5 + 9.5 * s.next_double(); // pole left of -2.5
        std::vector<double> ys;
        for (double l : kGrid) ys.push_back(a + b / (c + l));
        const ExtrapolantFit fit =
            fit_extrapolant(profile_from(kGrid, ys), Extrapolant::rational, 1);
        REQUIRE(fit.converged);
        REQUIRE_FALSE(fit.fallback_used);
        const double fa = fit.params[0], fb = fit.params[1], fc = fit.params[2];
        double scale = 0.0;
        for (double y : ys) scale = std::max(scale, std::abs(y));
        for (std::size_t k = 0; k < kGrid.size(); ++k) {
            REQUIRE(std::abs(fa + fb / (fc + kGrid[k]) - ys[k]) < 1e-8 * std::max(1.0, scale));
        }
        const double target = a + b / (c - 1.0);
        REQUIRE(std::abs(extrapolate(fit) - target) < 1e-6 * std::max(1.0, std::abs(target)));
        ++checked;
    }
    REQUIRE(checked == 50);
}

TEST_CASE("quadratic extrapolation evaluates a - b + c", "[extrapolant]") {
    ExtrapolantFit fit;
    fit.kind = Extrapolant::quadratic;
    fit.params = {1.0, 2.0, 3.0};
    REQUIRE(extrapolate(fit) == 2.0);
}

TEST_CASE("linear extrapolant under-corrects the convex attenuation curve", "[extrapolant]") {
    std::vector<double> ys;
    for (double l : kGrid) ys.push_back(100.0 / (110.0 + 10.0 * l));
    const ExtrapolantFit fit = fit_extrapolant(profile_from(kGrid, ys), Extrapolant::linear, 1);
    const double corrected = extrapolate(fit);
    REQUIRE(corrected > 100.0 / 110.0); // moves past the naive value
    REQUIRE(corrected < 1.0);           // but not all the way to the truth
}

TEST_CASE("grids smaller than the parameter count are rejected", "[extrapolant]") {
    const std::vector<double> one{0.0};
    const std::vector<double> three{0.0, 1.0, 2.0};
    REQUIRE_THROWS_AS(fit_extrapolant(profile_from(one, {1.0}), Extrapolant::linear, 1),
                      InsufficientGrid);
    REQUIRE_THROWS_AS(
        fit_extrapolant(profile_from({0.0, 1.0}, {1.0, 2.0}), Extrapolant::quadratic, 1),
        InsufficientGrid);
    REQUIRE_THROWS_AS(fit_extrapolant(profile_from(three, {1.0, 2.0, 3.0}), Extrapolant::rational, 1),
                      InsufficientGrid);
    REQUIRE_NOTHROW(fit_extrapolant(profile_from(three, {1.0, 2.0, 3.0}), Extrapolant::quadratic, 1));
}

TEST_CASE("rational pole at the extrapolation target is reported", "[extrapolant]") {
    ExtrapolantFit fit;
    fit.kind = Extrapolant::rational;
    fit.params = {0.0, 1.0, 1.0}; // pole exactly at lambda = -1
    REQUIRE_THROWS_AS(extrapolate(fit), PoleAtTarget);
    fit.params = {0.0, 1.0, 1.0 + 5e-13}; // inside the guard band
    REQUIRE_THROWS_AS(extrapolate(fit), PoleAtTarget);
    fit.params = {0.0, 1.0, 1.5};
    REQUIRE(extrapolate(fit) == Catch::Approx(2.0).epsilon(1e-15)); // 0 + 1/(1.5-1)
}

TEST_CASE("rational fits with in-range poles fall back to quadratic", "[extrapolant]") {
    // exact data from 1/(0.9 + lambda): pole at -0.9, inside [-1, 2]
    std::vector<double> ys;
    for (double l : kGrid) ys.push_back(1.0 / (0.9 + l));
    const ExtrapolantFit fit = fit_extrapolant(profile_from(kGrid, ys), Extrapolant::rational, 1);
    REQUIRE(fit.fallback_used);
    REQUIRE(fit.kind == Extrapolant::quadratic);
    REQUIRE(fit.params.size() == 3);
    REQUIRE_NOTHROW(extrapolate(fit));
}

TEST_CASE("constant profiles extrapolate to the constant", "[extrapolant]") {
    const std::vector<double> ys(kGrid.size(), 0.737);
    for (Extrapolant kind :
         {Extrapolant::linear, Extrapolant::quadratic, Extrapolant::rational}) {
        const ExtrapolantFit fit = fit_extrapolant(profile_from(kGrid, ys), kind, 1);
        REQUIRE(extrapolate(fit) == Catch::Approx(0.737).margin(1e-10));
    }
}

TEST_CASE("all-zero profiles are handled by the rational fit", "[extrapolant]") {
    const std::vector<double> ys(kGrid.size(), 0.0);
    const ExtrapolantFit fit = fit_extrapolant(profile_from(kGrid, ys), Extrapolant::rational, 1);
    REQUIRE(fit.converged);
    REQUIRE(extrapolate(fit) == 0.0);
}
