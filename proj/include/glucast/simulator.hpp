#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "glucast/csv.hpp"
#include "glucast/rng.hpp"

namespace glucast {

/// Physiological parameters of one synthetic subject. The dynamics are a
/// minimal glucose-insulin model: remote insulin action X drives uptake
/// proportional to X*G, subcutaneous boluses absorb through a two-compartment
/// chain with time constant tau_i, meals through a chain with tau_m, and
/// glucose relaxes toward basal at rate sg. Insulin sensitivity si is derived
/// from the carb ratio (as a titrated therapy would be) plus a per-subject
/// imbalance, so dosing roughly covers meals without pinning glucose.
struct SubjectParams {
    double sg = 0.008;        // glucose effectiveness [1/min]
    double p2 = 0.025;        // insulin action decay [1/min]
    double si = 0.6;          // insulin sensitivity [1/U]
    double tau_i = 55.0;      // insulin absorption time constant [min]
    double tau_m = 35.0;      // meal absorption time constant [min]
    double gb = 130.0;        // basal glucose [mg/dL]
    double carb_ratio = 11.0; // [g/U]
    double bw = 70.0;         // body weight [kg]
    double vg = 1.6;          // glucose distribution volume [dL/kg]
    double cgm_noise_sd = 2.0;  // [mg/dL]
    double cgm_noise_ar1 = 0.0; // AR(1) correlation of CGM noise
    double ex_amp = 1.0;        // exercise insulin-sensitivity boost (multiplier - 1)
    double circ_amp = 0.15;     // intra-day sensitivity variation amplitude
    double circ_phase = 0.0;    // [min of day]
    std::uint64_t seed = 0;
};

/// Daily protocol knobs: 3 jittered meals, lognormal carbs, a carb-ratio
/// bolus policy with dosing noise and occasional missed doses, correction
/// boluses at two daily check times, and daytime-only exercise windows.
struct DayProtocol {
    std::array<double, 3> meal_hours = {7.5, 12.5, 18.5};
    double meal_jitter_min = 45.0;
    double carb_median_g = 55.0;
    double carb_log_sigma = 0.35;
    double carb_min_g = 15.0;
    double carb_max_g = 150.0;
    double bolus_dose_noise = 0.22;
    double meal_bolus_p3 = 0.70; // probability all three meals are bolused
    double meal_bolus_p2 = 0.22; // probability exactly two are
    std::array<double, 2> correction_check_hours = {16.0, 22.0};
    double correction_threshold = 200.0; // [mg/dL]
    double correction_target = 115.0;
    double exercise_prob = 0.45;
    double ex_start_hour_min = 8.0; // exercise never overnight
    double ex_start_hour_max = 20.0;
    double ex_min_minutes = 30.0;
    double ex_max_minutes = 60.0;
};

/// Concrete event schedule over the whole simulation, minutes from start.
struct SimSchedule {
    struct Meal {
        std::int64_t minute = 0;
        double grams = 0.0;
        double bolus_units = 0.0; // 0 = missed bolus
        std::int64_t bolus_minute = 0;
    };
    struct Check {
        std::int64_t minute = 0;
        double noise_factor = 1.0; // multiplies the computed correction dose
    };
    struct Exercise {
        std::int64_t minute = 0;
        std::int64_t duration_min = 0;
    };
    std::vector<Meal> meals;
    std::vector<Check> correction_checks;
    std::vector<Exercise> exercise;
};

struct SimStats {
    std::size_t clipped_samples = 0;
    std::size_t correction_boluses = 0;
};

constexpr std::int64_t kSimEpoch = 1704067200; // 2024-01-01T00:00:00Z
constexpr double kCarbBioavailability = 0.9;
constexpr double kMaxGastricEmptying = 0.6; // g/min; keeps glucose rise rates physiological

/// Draws a subject within the documented plausible ranges; deterministic per
/// seed and almost surely distinct across seeds.
inline SubjectParams sample_subject(std::uint64_t seed) {
    Rng rng(seed);
    rng.next_u64(); // decorrelate consecutive seeds
    SubjectParams p;
    p.sg = rng.uniform(0.005, 0.012);
    p.p2 = rng.uniform(0.015, 0.035);
    p.tau_i = rng.uniform(40.0, 70.0);
    p.tau_m = rng.uniform(25.0, 45.0);
    p.gb = rng.uniform(95.0, 135.0);
    p.carb_ratio = rng.uniform(8.0, 15.0);
    p.bw = rng.uniform(55.0, 90.0);
    const double imbalance = rng.uniform(-0.12, 0.12);
    // titrated sensitivity: one unit covers about carb_ratio grams at 140 mg/dL
    p.si = kCarbBioavailability * 1000.0 / (p.vg * p.bw) * p.carb_ratio / 140.0 *
           (1.0 + imbalance);
    p.ex_amp = rng.uniform(0.5, 1.5);
    p.circ_amp = rng.uniform(0.08, 0.25);
    p.circ_phase = rng.uniform(0.0, 1440.0);
    p.seed = seed;
    return p;
}

/// Expands the daily protocol into a concrete schedule: exactly 3 meals per
/// day, 1..3 of them bolused (at least one always), correction checks that
/// can add at most two more boluses. Per-day bolus count stays in [1, 5].
inline SimSchedule build_schedule(const SubjectParams& p, int days, const DayProtocol& proto,
                                  Rng& rng) {
    SimSchedule sched;
    for (int day = 0; day < days; ++day) {
        const double day0 = static_cast<double>(day) * 1440.0;

        const double u = rng.uniform();
        std::size_t n_bolused = u < proto.meal_bolus_p3 ? 3
                                : u < proto.meal_bolus_p3 + proto.meal_bolus_p2 ? 2 : 1;
        std::vector<std::size_t> meal_order = {0, 1, 2};
        rng.shuffle(meal_order);

        for (std::size_t mi = 0; mi < 3; ++mi) {
            SimSchedule::Meal m;
            const double jitter = rng.uniform(-proto.meal_jitter_min, proto.meal_jitter_min);
            m.minute = static_cast<std::int64_t>(
                std::llround(day0 + proto.meal_hours[mi] * 60.0 + jitter));
            m.grams = std::clamp(rng.lognormal(proto.carb_median_g, proto.carb_log_sigma),
                                 proto.carb_min_g, proto.carb_max_g);
            m.grams = std::round(m.grams);
            const bool bolused =
                std::find(meal_order.begin(), meal_order.begin() + n_bolused, mi) !=
                meal_order.begin() + n_bolused;
            const double dose_noise = rng.uniform(-proto.bolus_dose_noise, proto.bolus_dose_noise);
            const double offset = rng.uniform(-10.0, 5.0);
            if (bolused) {
                m.bolus_units =
                    std::round(m.grams / p.carb_ratio * (1.0 + dose_noise) * 10.0) / 10.0;
                m.bolus_minute = m.minute + static_cast<std::int64_t>(std::llround(offset));
            }
            sched.meals.push_back(m);
        }

        for (double hour : proto.correction_check_hours) {
            SimSchedule::Check c;
            c.minute = static_cast<std::int64_t>(
                std::llround(day0 + hour * 60.0 + rng.uniform(-30.0, 30.0)));
            c.noise_factor = 1.0 + rng.uniform(-0.1, 0.25);
            sched.correction_checks.push_back(c);
        }

        if (rng.uniform() < proto.exercise_prob) {
            SimSchedule::Exercise e;
            e.minute = static_cast<std::int64_t>(std::llround(
                day0 + rng.uniform(proto.ex_start_hour_min, proto.ex_start_hour_max) * 60.0));
            e.duration_min = static_cast<std::int64_t>(
                std::llround(rng.uniform(proto.ex_min_minutes, proto.ex_max_minutes)));
            sched.exercise.push_back(e);
        }
    }
    return sched;
}

namespace detail {

struct SimState {
    double G, X, S1, S2, D1, D2;
};

inline SimState deriv(const SimState& s, double act, const SubjectParams& p) {
    SimState d;
    const double emptying = std::min(s.D1 / p.tau_m, kMaxGastricEmptying); // g/min
    const double ra = kCarbBioavailability * 1000.0 * s.D2 / p.tau_m;      // mg/min
    d.G = -p.sg * (s.G - p.gb) - act * s.X * s.G + ra / (p.vg * p.bw);
    d.X = -p.p2 * s.X + p.p2 * p.si * (s.S2 / p.tau_i);
    d.S1 = -s.S1 / p.tau_i;
    d.S2 = (s.S1 - s.S2) / p.tau_i;
    d.D1 = -emptying;
    d.D2 = emptying - s.D2 / p.tau_m;
    return d;
}

inline SimState axpy(const SimState& a, double h, const SimState& b) {
    return {a.G + h * b.G,   a.X + h * b.X,   a.S1 + h * b.S1,
            a.S2 + h * b.S2, a.D1 + h * b.D1, a.D2 + h * b.D2};
}

} // namespace detail

/// Integrates the subject model with fixed-step RK4 at 1-minute resolution
/// and samples the CGM every 5 minutes with additive (optionally AR(1))
/// noise. Meal and bolus impulses enter at their scheduled minute; correction
/// checks dose (G - target)/CF when glucose exceeds the threshold and the
/// day's bolus budget allows. Glucose is clipped to [40, 400] mg/dL.
/// Deterministic given (params, schedule, seed).
inline std::vector<RawRecord> simulate_schedule(const SubjectParams& p, int days,
                                                const SimSchedule& sched,
                                                const DayProtocol& proto, std::uint64_t seed,
                                                SimStats* stats = nullptr) {
    if (days < 1) throw std::invalid_argument("simulate: days must be >= 1");
    const std::int64_t total_min = static_cast<std::int64_t>(days) * 1440;

    // per-minute impulse tables
    std::vector<double> meal_g(static_cast<std::size_t>(total_min), 0.0);
    std::vector<double> bolus_u(static_cast<std::size_t>(total_min), 0.0);
    std::vector<std::uint8_t> exercising(static_cast<std::size_t>(total_min), 0);
    std::vector<int> day_boluses(static_cast<std::size_t>(days), 0);
    for (const auto& m : sched.meals) {
        if (m.minute < 0 || m.minute >= total_min) continue;
        meal_g[static_cast<std::size_t>(m.minute)] += m.grams;
        if (m.bolus_units > 0.0 && m.bolus_minute >= 0 && m.bolus_minute < total_min) {
            bolus_u[static_cast<std::size_t>(m.bolus_minute)] += m.bolus_units;
            ++day_boluses[static_cast<std::size_t>(m.bolus_minute / 1440)];
        }
    }
    for (const auto& e : sched.exercise)
        for (std::int64_t t = e.minute; t < e.minute + e.duration_min && t < total_min; ++t)
            if (t >= 0) exercising[static_cast<std::size_t>(t)] = 1;

    Rng noise_rng = Rng(seed).fork(101);
    detail::SimState st{p.gb, 0.0, 0.0, 0.0, 0.0, 0.0};
    std::vector<RawRecord> records;
    records.reserve(static_cast<std::size_t>(days) * 300);
    double cgm_err = p.cgm_noise_sd > 0.0 ? noise_rng.normal(0.0, p.cgm_noise_sd) : 0.0;
    SimStats local;

    std::size_t check_at = 0;
    std::vector<SimSchedule::Check> checks = sched.correction_checks;
    std::sort(checks.begin(), checks.end(),
              [](const auto& a, const auto& b) { return a.minute < b.minute; });

    for (std::int64_t t = 0; t < total_min; ++t) {
        const std::size_t ti = static_cast<std::size_t>(t);
        // impulses at the start of the minute
        if (meal_g[ti] > 0.0) {
            st.D1 += meal_g[ti];
            records.push_back({kSimEpoch + 60 * t, RecordKind::Meal, meal_g[ti], false});
        }
        while (check_at < checks.size() && checks[check_at].minute == t) {
            const int day = static_cast<int>(t / 1440);
            if (st.G > proto.correction_threshold && day_boluses[static_cast<std::size_t>(day)] < 5) {
                const double cf = p.si * proto.correction_target; // mg/dL per unit
                double dose = (st.G - proto.correction_target) / cf * checks[check_at].noise_factor;
                dose = std::round(dose * 10.0) / 10.0;
                if (dose >= 0.5) {
                    bolus_u[ti] += dose;
                    ++day_boluses[static_cast<std::size_t>(day)];
                    ++local.correction_boluses;
                }
            }
            ++check_at;
        }
        if (bolus_u[ti] > 0.0) {
            st.S1 += bolus_u[ti];
            records.push_back({kSimEpoch + 60 * t, RecordKind::Bolus, bolus_u[ti], false});
        }

        // CGM sample at the start of every 5th minute
        if (t % 5 == 0) {
            double reading = st.G + cgm_err;
            reading = std::clamp(reading, 40.0, 400.0);
            records.push_back({kSimEpoch + 60 * t, RecordKind::Glucose, reading, false});
            if (p.cgm_noise_sd > 0.0) {
                const double rho = std::clamp(p.cgm_noise_ar1, 0.0, 0.999);
                cgm_err = rho * cgm_err +
                          std::sqrt(1.0 - rho * rho) * noise_rng.normal(0.0, p.cgm_noise_sd);
            }
        }

        // one RK4 minute
        const double mid_day = std::fmod(static_cast<double>(t) + 0.5 - p.circ_phase, 1440.0);
        double act = 1.0 + p.circ_amp * std::sin(2.0 * 3.141592653589793 * mid_day / 1440.0);
        if (exercising[ti]) act *= 1.0 + p.ex_amp;
        const auto k1 = detail::deriv(st, act, p);
        const auto k2 = detail::deriv(detail::axpy(st, 0.5, k1), act, p);
        const auto k3 = detail::deriv(detail::axpy(st, 0.5, k2), act, p);
        const auto k4 = detail::deriv(detail::axpy(st, 1.0, k3), act, p);
        st.G += (k1.G + 2.0 * k2.G + 2.0 * k3.G + k4.G) / 6.0;
        st.X += (k1.X + 2.0 * k2.X + 2.0 * k3.X + k4.X) / 6.0;
        st.S1 += (k1.S1 + 2.0 * k2.S1 + 2.0 * k3.S1 + k4.S1) / 6.0;
        st.S2 += (k1.S2 + 2.0 * k2.S2 + 2.0 * k3.S2 + k4.S2) / 6.0;
        st.D1 += (k1.D1 + 2.0 * k2.D1 + 2.0 * k3.D1 + k4.D1) / 6.0;
        st.D2 += (k1.D2 + 2.0 * k2.D2 + 2.0 * k3.D2 + k4.D2) / 6.0;

        if (st.G < 40.0 || st.G > 400.0) {
            st.G = std::clamp(st.G, 40.0, 400.0);
            ++local.clipped_samples;
        }
        st.X = std::max(st.X, 0.0);
        if (!std::isfinite(st.G) || !std::isfinite(st.X) || !std::isfinite(st.S2))
            throw std::runtime_error("simulate: non-finite state (bad parameters)");
    }

    if (stats) *stats = local;
    return records;
}

/// Standard protocol run: builds the schedule from (params, protocol, seed)
/// and integrates it.
inline std::vector<RawRecord> simulate(const SubjectParams& p, int days,
                                       const DayProtocol& proto, std::uint64_t seed,
                                       SimStats* stats = nullptr) {
    Rng rng = Rng(seed).fork(7);
    SimSchedule sched = build_schedule(p, days, proto, rng);
    return simulate_schedule(p, days, sched, proto, seed, stats);
}

/// Writes `subject_NN.csv` files plus `manifest.json` (subject -> seed and
/// parameter values) into `dir`. Returns the CSV paths.
inline std::vector<std::string> generate_cohort(int n_subjects, int days, std::uint64_t seed,
                                                const std::string& dir,
                                                const DayProtocol& proto = {},
                                                double cgm_noise_sd = 2.0,
                                                double cgm_noise_ar1 = 0.0) {
    if (n_subjects < 1) throw std::invalid_argument("generate_cohort: need at least 1 subject");
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    nlohmann::json manifest;
    manifest["days"] = days;
    manifest["seed"] = seed;
    nlohmann::json subjects = nlohmann::json::array();
    std::vector<std::string> paths;
    for (int i = 0; i < n_subjects; ++i) {
        const std::uint64_t subj_seed = seed * 1000003ULL + static_cast<std::uint64_t>(i);
        SubjectParams p = sample_subject(subj_seed);
        p.cgm_noise_sd = cgm_noise_sd;
        p.cgm_noise_ar1 = cgm_noise_ar1;
        SimStats stats;
        auto records = simulate(p, days, proto, subj_seed, &stats);

        char name[64];
        std::snprintf(name, sizeof(name), "subject_%02d.csv", i + 1);
        const std::string path = (fs::path(dir) / name).string();
        write_records_csv(path, records);
        paths.push_back(path);

        nlohmann::json js;
        js["id"] = i + 1;
        js["file"] = name;
        js["seed"] = subj_seed;
        js["clipped_samples"] = stats.clipped_samples;
        js["params"] = {{"sg", p.sg},           {"p2", p.p2},
                        {"si", p.si},           {"tau_i", p.tau_i},
                        {"tau_m", p.tau_m},     {"gb", p.gb},
                        {"carb_ratio", p.carb_ratio}, {"bw", p.bw},
                        {"vg", p.vg},           {"cgm_noise_sd", p.cgm_noise_sd},
                        {"cgm_noise_ar1", p.cgm_noise_ar1}, {"ex_amp", p.ex_amp},
                        {"circ_amp", p.circ_amp}, {"circ_phase", p.circ_phase}};
        subjects.push_back(js);
    }
    manifest["subjects"] = subjects;
    std::ofstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw std::runtime_error("cannot write manifest.json in " + dir);
    mf << manifest.dump(2) << '\n';
    return paths;
}

} // namespace glucast
