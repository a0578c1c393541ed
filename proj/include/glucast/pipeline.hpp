#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "glucast/baselines.hpp"
#include "glucast/config.hpp"
#include "glucast/metrics.hpp"
#include "glucast/model.hpp"
#include "glucast/series.hpp"
#include "glucast/simulator.hpp"
#include "glucast/trainer.hpp"
#include "glucast/windows.hpp"

namespace glucast {

/// Raw records -> cleaned aligned series, spanning the first to last credible
/// glucose reading: align, outlier rejection, short-gap fill, optional
/// Gaussian smoothing.
inline AlignedSeries prepare_series(const std::vector<RawRecord>& records, const RunConfig& cfg,
                                    std::vector<std::string>* warnings = nullptr) {
    std::int64_t first = 0, last = 0;
    bool have = false;
    for (const auto& r : records) {
        if (r.kind != RecordKind::Glucose || r.flagged) continue;
        if (!have) {
            first = last = r.timestamp;
            have = true;
        } else {
            first = std::min(first, r.timestamp);
            last = std::max(last, r.timestamp);
        }
    }
    if (!have) throw std::runtime_error("prepare_series: no usable glucose records");
    AlignedSeries s = align(records, first, last, warnings);
    s = detect_outliers_and_fill(s, cfg.spike_threshold_mgdl,
                                 static_cast<std::size_t>(cfg.max_interp_gap_samples), warnings);
    if (cfg.smooth_sigma_steps > 0.0) s = gaussian_smooth(s, cfg.smooth_sigma_steps);
    return s;
}

/// Windowed view of one subject with a chronological train/validation/test
/// partition. The test period is the final (1 - train_fraction) of the
/// series; training windows live entirely inside the training period (their
/// whole context included), optionally limited to its most recent
/// `train_days`; validation is the tail of the training pool.
struct PreparedSubject {
    AlignedSeries series;
    NormStats stats;
    std::size_t split_index = 0;       // first series index of the test period
    std::size_t train_begin_index = 0; // training data starts here
    std::vector<WindowSample> train, validation, test;
};

inline PreparedSubject prepare_subject(AlignedSeries series, const RunConfig& cfg,
                                       std::vector<std::string>* warnings = nullptr,
                                       const NormStats* stats_override = nullptr) {
    PreparedSubject out;
    out.series = std::move(series);
    const std::size_t n = out.series.size();
    const std::size_t split =
        static_cast<std::size_t>(std::llround(static_cast<double>(n) * cfg.train_fraction));
    if (split < 2 || split >= n)
        throw std::runtime_error("prepare_subject: series too short to split");
    out.split_index = split;
    out.train_begin_index = 0;
    if (cfg.train_days > 0) {
        const std::size_t span = static_cast<std::size_t>(cfg.train_days) * 288;
        out.train_begin_index = split > span ? split - span : 0;
    }
    out.stats = stats_override ? *stats_override
                               : fit_norm_stats(out.series, out.train_begin_index, split, warnings);

    const std::size_t window = 24;
    auto windows = make_windows(out.series, out.stats, window, cfg.ph_steps(), warnings);

    std::vector<WindowSample> pool;
    for (auto& w : windows) {
        if (w.t_index >= split)
            out.test.push_back(w);
        else if (w.target_index < split && w.t_index + 1 - window >= out.train_begin_index)
            pool.push_back(w);
    }
    const std::size_t n_val =
        static_cast<std::size_t>(std::llround(static_cast<double>(pool.size()) * cfg.val_fraction));
    if (pool.size() < 2 || n_val == 0 || n_val >= pool.size())
        throw std::runtime_error("prepare_subject: too few training windows");
    out.train.assign(pool.begin(), pool.end() - static_cast<std::ptrdiff_t>(n_val));
    out.validation.assign(pool.end() - static_cast<std::ptrdiff_t>(n_val), pool.end());
    return out;
}

inline ModelSpec spec_for_variant(const std::string& variant, std::size_t ph_steps,
                                  double dropout) {
    if (variant == "nnpg") return make_nnpg_spec(ph_steps);
    ModelSpec s;
    if (variant == "crnn")
        s.ablation = Ablation::Full;
    else if (variant == "crnn-no-cnn")
        s.ablation = Ablation::NoCnn;
    else if (variant == "crnn-no-lstm")
        s.ablation = Ablation::NoLstm;
    else
        throw std::invalid_argument("unknown network variant '" + variant + "'");
    s.ph_steps = ph_steps;
    s.dropout = dropout;
    return s;
}

/// A fitted predictor: either a network (with its history) or an ARX model.
struct TrainedVariant {
    std::optional<Model> model;
    std::optional<ArxModel> arx;
    TrainHistory history;
    bool ok = true;
    std::string error;
};

/// Per-(subject, method, PH) cell result. The trace spans the whole test
/// period on the grid; entries without a prediction carry NaN and a false
/// mask.
struct CellResult {
    MetricsRow row;
    ForecastTrace trace;
    TrainHistory history; // empty for arx
    std::optional<Model> model;
    std::optional<ArxModel> arx;
    bool trained_ok = true;
    std::string error;
};

/// Builds the evaluation trace from per-window level predictions made at the
/// shared valid instants.
inline ForecastTrace build_trace(const PreparedSubject& ps, const std::vector<double>& level_pred,
                                 std::size_t ph_steps) {
    const AlignedSeries& s = ps.series;
    ForecastTrace t;
    t.ph_steps = ph_steps;
    const std::size_t n = s.size() - ps.split_index;
    t.time.resize(n);
    t.ref.resize(n);
    t.pred.assign(n, std::numeric_limits<double>::quiet_NaN());
    t.mask.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = ps.split_index + i;
        t.time[i] = s.time_at(k);
        t.ref[i] = s.glucose[k];
    }
    for (std::size_t wi = 0; wi < ps.test.size(); ++wi) {
        const std::size_t k = ps.test[wi].target_index;
        if (k < ps.split_index) continue;
        const std::size_t i = k - ps.split_index;
        t.pred[i] = level_pred[wi];
        t.mask[i] = s.valid[k] ? 1 : 0;
    }
    return t;
}

inline EventList filter_events(const EventList& evs, EventKind kind) {
    EventList out;
    for (const auto& e : evs)
        if (e.kind == kind) out.push_back(e);
    return out;
}

/// Fills the metrics row from a finished trace.
inline MetricsRow score_trace(const ForecastTrace& trace, const RunConfig& cfg,
                              const std::string& subject, const std::string& method) {
    MetricsRow row;
    row.subject = subject;
    row.method = method;
    row.ph_min = cfg.ph_min;
    row.eval_count = trace.eval_count();
    row.rmse = rmse(trace);
    row.mard = mard(trace);

    const auto persistence = static_cast<std::size_t>(cfg.event_persistence_samples);
    EventList ref_ev = detect_events(trace.ref, trace.mask, cfg.hypo_threshold_mgdl,
                                     cfg.hyper_threshold_mgdl, persistence);
    EventList pred_ev = detect_events(trace.pred, trace.mask, cfg.hypo_threshold_mgdl,
                                      cfg.hyper_threshold_mgdl, persistence);
    row.mcc_hyper = mcc(match_events(filter_events(pred_ev, EventKind::Hyper),
                                     filter_events(ref_ev, EventKind::Hyper), trace.ph_steps,
                                     trace.mask));
    row.mcc_hypo = mcc(match_events(filter_events(pred_ev, EventKind::Hypo),
                                    filter_events(ref_ev, EventKind::Hypo), trace.ph_steps,
                                    trace.mask));
    EffectivePh eff = effective_ph(trace);
    row.ph_eff_min = eff.minutes;
    row.ph_eff_degenerate = eff.degenerate;
    return row;
}

/// Deterministic per-cell seed: the run seed mixed with subject and method,
/// so cells are independent and reproducible.
inline std::uint64_t cell_seed(const RunConfig& cfg, const std::string& subject) {
    std::uint64_t s = cfg.seed;
    for (char c : subject + "/" + cfg.variant + "/" + std::to_string(cfg.ph_min))
        s = s * 1099511628211ULL + static_cast<unsigned char>(c);
    return s;
}

/// Fits the configured variant on the subject's training pool.
inline TrainedVariant train_variant(const PreparedSubject& ps, const RunConfig& cfg,
                                    const std::string& subject) {
    TrainedVariant out;
    const std::size_t ph = cfg.ph_steps();
    if (cfg.variant == "arx") {
        std::vector<std::size_t> instants;
        for (const auto& w : ps.train) instants.push_back(w.t_index);
        for (const auto& w : ps.validation) instants.push_back(w.t_index);
        out.arx = fit_arx(ps.series, ph, instants);
        return out;
    }
    ModelSpec spec = spec_for_variant(cfg.variant, ph, cfg.dropout_rate);
    Model m = Model::build(spec, cell_seed(cfg, subject));
    m.stats = ps.stats;
    TrainConfig tc = cfg.trainer();
    tc.seed = cell_seed(cfg, subject);
    out.history = train(m, ps.train, ps.validation, tc);
    if (out.history.diverged) {
        out.ok = false;
        out.error = "training diverged";
    }
    out.model = std::move(m);
    return out;
}

/// Level predictions at the shared valid test instants, one per test window.
inline std::vector<double> predict_levels(const TrainedVariant& tv, const PreparedSubject& ps) {
    std::vector<double> level_pred(ps.test.size());
    if (tv.arx) {
        for (std::size_t i = 0; i < ps.test.size(); ++i) {
            auto p = predict_arx(*tv.arx, ps.series, ps.test[i].t_index);
            if (!p) throw std::runtime_error("arx: lag unavailable at a shared valid instant");
            level_pred[i] = *p;
        }
        return level_pred;
    }
    const Model& m = *tv.model;
    const std::size_t chunk = 512;
    const std::size_t in_sz = m.spec.window * m.spec.channels;
    for (std::size_t at = 0; at < ps.test.size(); at += chunk) {
        const std::size_t B = std::min(chunk, ps.test.size() - at);
        Array X({B, m.spec.window, m.spec.channels});
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < in_sz; ++i) X[b * in_sz + i] = ps.test[at + b].input[i];
        auto delta = m.forward(X);
        for (std::size_t b = 0; b < B; ++b)
            level_pred[at + b] = recover(delta[b], ps.test[at + b].base_bg);
    }
    return level_pred;
}

/// Trains and evaluates one method on one prepared subject.
inline CellResult run_cell(const PreparedSubject& ps, const RunConfig& cfg,
                           const std::string& subject) {
    CellResult res;
    TrainedVariant tv = train_variant(ps, cfg, subject);
    res.history = tv.history;
    res.trained_ok = tv.ok;
    res.error = tv.error;
    auto level_pred = predict_levels(tv, ps);
    res.model = std::move(tv.model);
    res.arx = std::move(tv.arx);
    res.trace = build_trace(ps, level_pred, cfg.ph_steps());
    res.row = score_trace(res.trace, cfg, subject, cfg.variant);
    return res;
}

/// Trace export: `time,reference,prediction,masked`, one row per valid
/// prediction instant; masked = 1 when the prediction exists but the
/// reference sample is excluded from evaluation.
inline void write_trace_csv(const std::string& path, const ForecastTrace& t) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "time,reference,prediction,masked\n";
    char buf[128];
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(t.pred[i])) continue;
        std::snprintf(buf, sizeof(buf), "%lld,%.10g,%.10g,%d\n",
                      static_cast<long long>(t.time[i]), t.ref[i], t.pred[i],
                      t.mask[i] ? 0 : 1);
        out << buf;
    }
}

} // namespace glucast
