#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "glucast/array.hpp"
#include "glucast/normalize.hpp"
#include "glucast/series.hpp"

namespace glucast {

/// One training/evaluation sample: a normalized [window x 3] input slice
/// ending at t_index, the raw current glucose, and the raw glucose change to
/// t_index + ph_steps. base_bg + target_delta reproduces the reference at the
/// target index bit-for-bit.
struct WindowSample {
    Array input;         // [window x 3], channels glucose/carbs/insulin, normalized
    double target_delta; // mg/dL
    double base_bg;      // mg/dL, raw glucose at t_index
    std::size_t t_index;
    std::size_t target_index;
};

/// Largest-magnitude-safe delta: the double d closest to ref - base for
/// which base + d rounds exactly back to ref. fl(ref - base) can be one ulp
/// off from that, so nudge until the round trip is exact.
inline double exact_delta(double ref, double base) {
    double d = ref - base;
    for (int i = 0; i < 64 && base + d != ref; ++i)
        d = std::nextafter(d, base + d < ref ? std::numeric_limits<double>::infinity()
                                             : -std::numeric_limits<double>::infinity());
    return d;
}

/// Recovery step: predicted change plus current glucose.
inline double recover(double delta_pred, double base_bg) { return base_bg + delta_pred; }

/// Slides a stride-1 window over the series. A sample exists for position t
/// iff every sample of the input window [t-window+1, t] and the target at
/// t + ph_steps are valid. Inputs are z-scored with `stats`; base and delta
/// stay in raw mg/dL so recovery is exact and metrics need no denormalization.
inline std::vector<WindowSample> make_windows(const AlignedSeries& s, const NormStats& stats,
                                              std::size_t window, std::size_t ph_steps,
                                              std::vector<std::string>* warnings = nullptr) {
    std::vector<WindowSample> out;
    if (window == 0 || s.size() < window + ph_steps) {
        detail::warn(warnings, "series too short for any window");
        return out;
    }
    for (std::size_t t = window - 1; t + ph_steps < s.size(); ++t) {
        bool ok = s.valid[t + ph_steps] != 0;
        for (std::size_t i = t + 1 - window; ok && i <= t; ++i) ok = s.valid[i] != 0;
        if (!ok) continue;

        WindowSample w;
        w.input = Array({window, 3});
        for (std::size_t i = 0; i < window; ++i) {
            const std::size_t k = t + 1 - window + i;
            w.input.at2(i, 0) = stats.glucose.apply(s.glucose[k]);
            w.input.at2(i, 1) = stats.carbs.apply(s.carbs[k]);
            w.input.at2(i, 2) = stats.insulin.apply(s.insulin[k]);
        }
        w.base_bg = s.glucose[t];
        w.target_delta = exact_delta(s.glucose[t + ph_steps], w.base_bg);
        w.t_index = t;
        w.target_index = t + ph_steps;
        out.push_back(std::move(w));
    }
    if (out.empty()) detail::warn(warnings, "no valid windows in series");
    return out;
}

} // namespace glucast
