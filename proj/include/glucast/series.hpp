#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "glucast/csv.hpp"

namespace glucast {

/// Multi-channel series on a uniform 5-minute grid. Meal and bolus amounts
/// are impulse-coded: the full recorded amount sits on the nearest grid
/// sample and everything else is zero. valid[i] == false marks samples that
/// are missing, implausible, or interpolated; they are excluded from training
/// windows and evaluation. Glucose at invalid samples is NaN until gap
/// filling assigns an interpolated value.
struct AlignedSeries {
    static constexpr std::int64_t kStep = 300; // seconds

    std::int64_t start_time = 0;
    std::vector<double> glucose; // mg/dL
    std::vector<double> carbs;   // g
    std::vector<double> insulin; // U
    std::vector<std::uint8_t> valid;

    std::size_t size() const { return glucose.size(); }
    std::int64_t time_at(std::size_t i) const {
        return start_time + static_cast<std::int64_t>(i) * kStep;
    }
};

namespace detail {

inline void warn(std::vector<std::string>* warnings, std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
}

} // namespace detail

/// Glucose values are kept on a fixed 2^-30 mg/dL grid (about 1e-9 mg/dL,
/// seven orders below sensor noise). On that grid, differences between any
/// two readings below 1024 mg/dL and their sums are exact in double
/// precision, which is what makes the transform/recovery round trip
/// (base + delta == reference) hold bit-for-bit.
inline double quantize_glucose(double v) {
    return std::round(v * 1073741824.0) / 1073741824.0;
}

/// Snaps records onto the 5-minute grid spanning [start, end]. Glucose goes
/// to the nearest grid point (ties to the earlier one); when two readings
/// land on one sample the later reading wins. Meals and boluses accumulate
/// onto their nearest sample. Grid points with no glucose reading are
/// invalid.
inline AlignedSeries align(const std::vector<RawRecord>& records, std::int64_t start,
                           std::int64_t end, std::vector<std::string>* warnings = nullptr) {
    if (start >= end) throw std::invalid_argument("align: start must precede end");
    const std::int64_t step = AlignedSeries::kStep;
    const std::size_t n = static_cast<std::size_t>((end - start) / step) + 1;

    AlignedSeries s;
    s.start_time = start;
    s.glucose.assign(n, std::numeric_limits<double>::quiet_NaN());
    s.carbs.assign(n, 0.0);
    s.insulin.assign(n, 0.0);
    s.valid.assign(n, 0);

    std::vector<std::int64_t> glucose_src(n, std::numeric_limits<std::int64_t>::min());
    for (const RawRecord& r : records) {
        if (r.kind == RecordKind::Glucose && r.flagged) {
            detail::warn(warnings, "skipping flagged glucose reading at t=" +
                                       std::to_string(r.timestamp));
            continue;
        }
        const std::int64_t off = r.timestamp - start;
        if (off < -step / 2 || r.timestamp > end + step / 2) continue;
        std::int64_t k = off / step;
        std::int64_t rem = off - k * step;
        if (rem < 0) { rem += step; k -= 1; }
        if (2 * rem > step) k += 1; // exact half rounds down (earlier sample)
        if (k < 0 || k >= static_cast<std::int64_t>(n)) continue;
        const std::size_t idx = static_cast<std::size_t>(k);
        switch (r.kind) {
            case RecordKind::Glucose:
                if (s.valid[idx]) {
                    detail::warn(warnings, "two glucose readings map to grid sample " +
                                               std::to_string(idx) + "; keeping the later");
                    if (r.timestamp < glucose_src[idx]) break;
                }
                s.glucose[idx] = quantize_glucose(r.value);
                s.valid[idx] = 1;
                glucose_src[idx] = r.timestamp;
                break;
            case RecordKind::Meal: s.carbs[idx] += r.value; break;
            case RecordKind::Bolus: s.insulin[idx] += r.value; break;
        }
    }
    return s;
}

/// Outlier rejection and short-gap filling.
///
/// A valid reading is rejected when it jumps more than `spike_threshold`
/// mg/dL per elapsed 5-minute step from the last accepted reading (so a
/// single spike loses only itself); after a gap longer than `max_gap` steps
/// the walk re-anchors unconditionally since plausibility cannot be judged
/// across it. Interior invalid runs of at most `max_gap` samples are then
/// linearly interpolated between their anchors, keeping valid == false, so
/// filled values feed windows' context but never count as evaluation truth.
/// Longer runs stay NaN and effectively split the series into segments.
inline AlignedSeries detect_outliers_and_fill(const AlignedSeries& in,
                                              double spike_threshold = 40.0,
                                              std::size_t max_gap = 6,
                                              std::vector<std::string>* warnings = nullptr) {
    AlignedSeries s = in;
    const std::size_t n = s.size();

    bool have_ref = false;
    double ref = 0.0;
    std::size_t ref_idx = 0;
    std::size_t rejected = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!s.valid[i]) continue;
        if (!have_ref) {
            have_ref = true;
            ref = s.glucose[i];
            ref_idx = i;
            continue;
        }
        const std::size_t gap = i - ref_idx;
        if (gap > max_gap) {
            ref = s.glucose[i];
            ref_idx = i;
            continue;
        }
        if (std::fabs(s.glucose[i] - ref) > spike_threshold * static_cast<double>(gap)) {
            s.valid[i] = 0;
            s.glucose[i] = std::numeric_limits<double>::quiet_NaN();
            ++rejected;
            continue;
        }
        ref = s.glucose[i];
        ref_idx = i;
    }
    if (rejected)
        detail::warn(warnings, std::to_string(rejected) + " implausible glucose samples rejected");

    // fill interior gaps of <= max_gap samples
    std::size_t prev_valid = n;
    for (std::size_t i = 0; i < n; ++i) {
        if (!s.valid[i]) continue;
        if (prev_valid != n && i - prev_valid > 1) {
            const std::size_t run = i - prev_valid - 1;
            if (run <= max_gap) {
                const double a = s.glucose[prev_valid];
                const double b = s.glucose[i];
                for (std::size_t j = prev_valid + 1; j < i; ++j) {
                    const double f = static_cast<double>(j - prev_valid) /
                                     static_cast<double>(i - prev_valid);
                    s.glucose[j] = quantize_glucose(a + (b - a) * f);
                }
            }
        }
        prev_valid = i;
    }
    return s;
}

/// Gaussian smoothing of the glucose channel. The discrete kernel is
/// truncated at +-3 sigma and renormalized over the samples that actually
/// contribute (series edges, neighbours of unfilled gaps), so a constant
/// series is a fixed point. sigma_steps == 0 is the identity.
inline AlignedSeries gaussian_smooth(const AlignedSeries& in, double sigma_steps) {
    if (sigma_steps < 0.0) throw std::invalid_argument("gaussian_smooth: sigma must be >= 0");
    if (sigma_steps == 0.0) return in;
    AlignedSeries s = in;
    const long r = static_cast<long>(std::ceil(3.0 * sigma_steps));
    std::vector<double> w(static_cast<std::size_t>(2 * r + 1));
    for (long j = -r; j <= r; ++j)
        w[static_cast<std::size_t>(j + r)] =
            std::exp(-0.5 * (static_cast<double>(j) / sigma_steps) * (static_cast<double>(j) / sigma_steps));

    const long n = static_cast<long>(in.size());
    for (long i = 0; i < n; ++i) {
        if (!std::isfinite(in.glucose[static_cast<std::size_t>(i)])) continue;
        double acc = 0.0, wsum = 0.0;
        for (long j = -r; j <= r; ++j) {
            const long k = i + j;
            if (k < 0 || k >= n) continue;
            const double g = in.glucose[static_cast<std::size_t>(k)];
            if (!std::isfinite(g)) continue;
            const double wj = w[static_cast<std::size_t>(j + r)];
            acc += wj * g;
            wsum += wj;
        }
        s.glucose[static_cast<std::size_t>(i)] = quantize_glucose(acc / wsum);
    }
    return s;
}

/// Aligned-series export: `t_index,time,glucose_mgdl,carbs_g,insulin_u,valid`.
inline void write_aligned_csv(std::ostream& out, const AlignedSeries& s) {
    out << "t_index,time,glucose_mgdl,carbs_g,insulin_u,valid\n";
    char buf[128];
    for (std::size_t i = 0; i < s.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%lld,%.10g,%.10g,%.10g,%d\n", i,
                      static_cast<long long>(s.time_at(i)), s.glucose[i], s.carbs[i],
                      s.insulin[i], s.valid[i] ? 1 : 0);
        out << buf;
    }
}

inline void write_aligned_csv(const std::string& path, const AlignedSeries& s) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    write_aligned_csv(out, s);
}

} // namespace glucast
