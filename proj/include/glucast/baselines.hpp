#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "glucast/model.hpp"
#include "glucast/series.hpp"

namespace glucast {

/// 3rd-order ARX predictor with exogenous meal/insulin impulses.
/// Coefficient layout: a1..a3 on glucose lags t..t-2, then 3 carb lags,
/// 3 insulin lags, then the intercept.
struct ArxModel {
    static constexpr std::size_t kLags = 3;
    static constexpr std::size_t kCoefs = 3 * kLags + 1;

    std::array<double, kCoefs> coef{};
    std::size_t ph_steps = 6;

    std::uint64_t hash() const {
        std::string s = "kind=arx;lags=3;ph=" + std::to_string(ph_steps);
        std::uint64_t h = 1469598103934665603ULL;
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ULL;
        }
        return h;
    }
};

namespace detail {

/// Cholesky solve of a symmetric positive definite system; throws if a pivot
/// collapses (rank-deficient even after the ridge term).
inline std::vector<double> solve_spd(std::vector<double> A, std::vector<double> b,
                                     std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        double d = A[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= A[j * n + k] * A[j * n + k];
        if (!(d > 0.0) || !std::isfinite(d))
            throw std::runtime_error("solve_spd: matrix not positive definite");
        const double L = std::sqrt(d);
        A[j * n + j] = L;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = A[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= A[i * n + k] * A[j * n + k];
            A[i * n + j] = s / L;
        }
    }
    // forward then backward substitution
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= A[i * n + k] * b[k];
        b[i] = s / A[i * n + i];
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double s = b[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= A[k * n + ii] * b[k];
        b[ii] = s / A[ii * n + ii];
    }
    return b;
}

inline bool arx_row(const AlignedSeries& s, std::size_t t, std::array<double, ArxModel::kCoefs>& x) {
    if (t < ArxModel::kLags - 1) return false;
    for (std::size_t l = 0; l < ArxModel::kLags; ++l)
        if (!s.valid[t - l]) return false;
    for (std::size_t l = 0; l < ArxModel::kLags; ++l) {
        x[l] = s.glucose[t - l];
        x[ArxModel::kLags + l] = s.carbs[t - l];
        x[2 * ArxModel::kLags + l] = s.insulin[t - l];
    }
    x[3 * ArxModel::kLags] = 1.0;
    return true;
}

} // namespace detail

/// Ordinary least squares over rows [g(t), g(t-1), g(t-2), carbs lags,
/// insulin lags, 1] -> g(t + ph) restricted to the given prediction instants;
/// normal equations carry a ridge term of 1e-6 for conditioning.
inline ArxModel fit_arx(const AlignedSeries& s, std::size_t ph_steps,
                        const std::vector<std::size_t>& instants, double ridge = 1e-6) {
    constexpr std::size_t n = ArxModel::kCoefs;
    std::vector<double> A(n * n, 0.0);
    std::vector<double> rhs(n, 0.0);
    std::size_t rows = 0;
    std::array<double, n> x;
    for (std::size_t t : instants) {
        if (t + ph_steps >= s.size() || !s.valid[t + ph_steps]) continue;
        if (!detail::arx_row(s, t, x)) continue;
        const double y = s.glucose[t + ph_steps];
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j <= i; ++j) A[i * n + j] += x[i] * x[j];
            rhs[i] += x[i] * y;
        }
        ++rows;
    }
    if (rows < 50) throw std::runtime_error("fit_arx: fewer than 50 valid training samples");
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) A[i * n + j] = A[j * n + i];
        A[i * n + i] += ridge;
    }
    std::vector<double> beta = detail::solve_spd(std::move(A), std::move(rhs), n);
    ArxModel m;
    m.ph_steps = ph_steps;
    for (std::size_t i = 0; i < n; ++i) m.coef[i] = beta[i];
    return m;
}

/// Range-based fit: uses every instant in [begin, end - ph) whose lags and
/// target are valid.
inline ArxModel fit_arx(const AlignedSeries& s, std::size_t ph_steps, std::size_t begin,
                        std::size_t end, double ridge = 1e-6) {
    std::vector<std::size_t> instants;
    for (std::size_t t = begin; t + ph_steps < end; ++t) instants.push_back(t);
    return fit_arx(s, ph_steps, instants, ridge);
}

/// Direct level prediction at instant t; empty when a lag sample is invalid.
inline std::optional<double> predict_arx(const ArxModel& m, const AlignedSeries& s,
                                         std::size_t t) {
    std::array<double, ArxModel::kCoefs> x;
    if (t >= s.size() || !detail::arx_row(s, t, x)) return std::nullopt;
    double y = 0.0;
    for (std::size_t i = 0; i < ArxModel::kCoefs; ++i) y += m.coef[i] * x[i];
    return y;
}

inline void save_arx(const ArxModel& m, const NormStats& stats, const std::string& path) {
    nlohmann::json meta;
    meta["model"] = "arx";
    meta["ph_steps"] = m.ph_steps;
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(m.hash()));
    meta["spec_hash"] = hex;
    meta["norm_stats"] = to_json(stats);
    std::vector<NamedParam> params;
    params.push_back({"arx.coef", Array({ArxModel::kCoefs},
                                        std::vector<double>(m.coef.begin(), m.coef.end()))});
    save_param_container(path, meta, params);
}

inline ArxModel load_arx(const std::string& path) {
    auto [meta, params] = load_param_container(path);
    if (meta.value("model", "") != "arx") throw std::runtime_error(path + ": not an ARX model");
    ArxModel m;
    m.ph_steps = meta.at("ph_steps").get<std::size_t>();
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(m.hash()));
    if (meta.value("spec_hash", "") != hex)
        throw std::runtime_error(path + ": spec hash mismatch");
    if (params.size() != 1 || params[0].value.size() != ArxModel::kCoefs)
        throw std::runtime_error(path + ": bad ARX coefficient block");
    for (std::size_t i = 0; i < ArxModel::kCoefs; ++i) m.coef[i] = params[0].value[i];
    return m;
}

/// Enhanced NNPG baseline: the flattened [24 x 3] window through one 32-unit
/// tanh layer to a linear delta output; trained by the same trainer.
inline ModelSpec make_nnpg_spec(std::size_t ph_steps) {
    ModelSpec s;
    s.kind = ModelKind::Nnpg;
    s.conv.clear();
    s.lstm_cells = 0;
    s.dense = {32, 1};
    s.dropout = 0.0;
    s.ph_steps = ph_steps;
    return s;
}

} // namespace glucast
