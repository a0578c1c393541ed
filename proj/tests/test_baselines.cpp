#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "glucast/baselines.hpp"
#include "glucast/rng.hpp"
#include "glucast/trainer.hpp"

using namespace glucast;
using Catch::Approx;

namespace {

AlignedSeries series_from_glucose(const std::vector<double>& g) {
    AlignedSeries s;
    s.start_time = 0;
    s.glucose = g;
    s.carbs.assign(g.size(), 0.0);
    s.insulin.assign(g.size(), 0.0);
    s.valid.assign(g.size(), 1);
    return s;
}

std::vector<double> ar3_sequence(std::size_t n, double a1, double a2, double a3, Rng* noise,
                                 double sd = 0.0) {
    std::vector<double> g = {120.0, 80.0, 150.0};
    g.reserve(n);
    while (g.size() < n) {
        const std::size_t t = g.size();
        double v = a1 * g[t - 1] + a2 * g[t - 2] + a3 * g[t - 3];
        if (noise) v += noise->normal(0.0, sd);
        g.push_back(v);
    }
    return g;
}

} // namespace

TEST_CASE("arx identifies a noiseless AR(3) process") {
    auto g = ar3_sequence(60, 0.5, 0.3, 0.1, nullptr);
    AlignedSeries s = series_from_glucose(g);
    ArxModel m = fit_arx(s, 1, 2, s.size());
    REQUIRE(m.coef[0] == Approx(0.5).margin(1e-6));
    REQUIRE(m.coef[1] == Approx(0.3).margin(1e-6));
    REQUIRE(m.coef[2] == Approx(0.1).margin(1e-6));
    for (std::size_t i = 3; i < 9; ++i) REQUIRE(std::fabs(m.coef[i]) < 1e-6); // exogenous
    REQUIRE(std::fabs(m.coef[9]) < 1e-6);                                     // intercept
}

TEST_CASE("arx coefficient error shrinks with more noisy data") {
    auto fit_err = [](std::size_t n, std::uint64_t seed) {
        Rng noise(seed);
        auto g = ar3_sequence(n, 0.5, 0.3, 0.1, &noise, 1.0);
        AlignedSeries s = series_from_glucose(g);
        ArxModel m = fit_arx(s, 1, 2, s.size());
        return std::fabs(m.coef[0] - 0.5) + std::fabs(m.coef[1] - 0.3) +
               std::fabs(m.coef[2] - 0.1);
    };
    REQUIRE(fit_err(10000, 21) < fit_err(1000, 21));
}

TEST_CASE("arx on a constant series predicts the constant") {
    AlignedSeries s = series_from_glucose(std::vector<double>(120, 140.0));
    ArxModel m = fit_arx(s, 6, 2, s.size());
    auto p = predict_arx(m, s, 60);
    REQUIRE(p.has_value());
    REQUIRE(*p == Approx(140.0).margin(1e-6));
}

TEST_CASE("arx skips instants with masked lags") {
    AlignedSeries s = series_from_glucose(std::vector<double>(120, 140.0));
    ArxModel m = fit_arx(s, 6, 2, s.size());
    s.valid[59] = 0;
    REQUIRE_FALSE(predict_arx(m, s, 60).has_value()); // lag t-1 masked
    REQUIRE_FALSE(predict_arx(m, s, 59).has_value()); // instant itself masked
    REQUIRE(predict_arx(m, s, 70).has_value());
    REQUIRE_FALSE(predict_arx(m, s, 1).has_value()); // not enough history
}

TEST_CASE("arx needs 50 training rows") {
    AlignedSeries s = series_from_glucose(std::vector<double>(40, 140.0));
    REQUIRE_THROWS_WITH(fit_arx(s, 6, 2, s.size()),
                        Catch::Matchers::ContainsSubstring("50"));
}

TEST_CASE("arx model file round trip") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "glucast_arx_test.gmw").string();
    ArxModel m;
    m.ph_steps = 12;
    for (std::size_t i = 0; i < ArxModel::kCoefs; ++i) m.coef[i] = 0.1 * static_cast<double>(i);
    NormStats st;
    save_arx(m, st, path);
    ArxModel l = load_arx(path);
    REQUIRE(l.ph_steps == 12);
    for (std::size_t i = 0; i < ArxModel::kCoefs; ++i) REQUIRE(l.coef[i] == m.coef[i]);
    fs::remove(path);
}

TEST_CASE("nnpg spec") {
    ModelSpec spec = make_nnpg_spec(6);
    REQUIRE(count_params(spec) == 2369);
    Model a = Model::build(spec, 5);
    Model b = Model::build(spec, 5);
    for (std::size_t i = 0; i < a.params.size(); ++i)
        REQUIRE(a.params[i].value == b.params[i].value);
}
