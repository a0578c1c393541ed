#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "glucast/series.hpp"

namespace glucast {

/// Per-channel z-score statistics, fitted on the training split only.
/// Channels whose spread is zero pass through unscaled (std stays 0 as the
/// marker). std is the population standard deviation.
struct NormStats {
    struct Channel {
        double mean = 0.0;
        double std = 0.0;

        double apply(double x) const { return std > 0.0 ? (x - mean) / std : x; }
        double invert(double y) const { return std > 0.0 ? y * std + mean : y; }
    };

    Channel glucose, carbs, insulin;
};

/// Fits stats over [begin, end) of the series. Glucose uses valid samples
/// only; the impulse-coded channels use every sample in the range.
inline NormStats fit_norm_stats(const AlignedSeries& s, std::size_t begin, std::size_t end,
                                std::vector<std::string>* warnings = nullptr) {
    if (begin >= end || end > s.size())
        throw std::invalid_argument("fit_norm_stats: empty or out-of-range training range");

    auto fit = [&](const std::vector<double>& v, bool valid_only, const char* name) {
        double sum = 0.0, sum2 = 0.0;
        std::size_t n = 0;
        for (std::size_t i = begin; i < end; ++i) {
            if (valid_only && !s.valid[i]) continue;
            if (!std::isfinite(v[i])) continue;
            sum += v[i];
            sum2 += v[i] * v[i];
            ++n;
        }
        if (n == 0)
            throw std::invalid_argument(std::string("fit_norm_stats: no usable samples for ") +
                                        name);
        NormStats::Channel c;
        c.mean = sum / static_cast<double>(n);
        const double var = sum2 / static_cast<double>(n) - c.mean * c.mean;
        c.std = var > 0.0 ? std::sqrt(var) : 0.0;
        if (c.std == 0.0)
            detail::warn(warnings, std::string(name) + " channel has zero spread; left unscaled");
        return c;
    };

    NormStats st;
    st.glucose = fit(s.glucose, true, "glucose");
    st.carbs = fit(s.carbs, false, "carbs");
    st.insulin = fit(s.insulin, false, "insulin");
    return st;
}

inline AlignedSeries normalize(const AlignedSeries& in, const NormStats& st) {
    AlignedSeries s = in;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (std::isfinite(s.glucose[i])) s.glucose[i] = st.glucose.apply(s.glucose[i]);
        s.carbs[i] = st.carbs.apply(s.carbs[i]);
        s.insulin[i] = st.insulin.apply(s.insulin[i]);
    }
    return s;
}

inline AlignedSeries denormalize(const AlignedSeries& in, const NormStats& st) {
    AlignedSeries s = in;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (std::isfinite(s.glucose[i])) s.glucose[i] = st.glucose.invert(s.glucose[i]);
        s.carbs[i] = st.carbs.invert(s.carbs[i]);
        s.insulin[i] = st.insulin.invert(s.insulin[i]);
    }
    return s;
}

} // namespace glucast
