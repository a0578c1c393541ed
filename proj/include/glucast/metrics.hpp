#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace glucast {

/// Time-aligned (reference, prediction) pairs for one subject and one PH on
/// the 5-minute grid. pred is NaN at instants with no prediction; mask marks
/// the instants that enter metrics (prediction exists AND the reference
/// sample is valid).
struct ForecastTrace {
    std::size_t ph_steps = 6;
    std::vector<std::int64_t> time;
    std::vector<double> ref;
    std::vector<double> pred;
    std::vector<std::uint8_t> mask;

    std::size_t size() const { return ref.size(); }
    std::size_t eval_count() const {
        std::size_t n = 0;
        for (auto m : mask) n += m ? 1 : 0;
        return n;
    }
};

inline double rmse(const ForecastTrace& t) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!t.mask[i]) continue;
        const double d = t.pred[i] - t.ref[i];
        s += d * d;
        ++n;
    }
    if (n == 0) throw std::invalid_argument("rmse: no unmasked samples");
    return std::sqrt(s / static_cast<double>(n));
}

/// Mean absolute relative difference, in percent.
inline double mard(const ForecastTrace& t) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!t.mask[i]) continue;
        if (!(t.ref[i] > 0.0)) throw std::invalid_argument("mard: reference must be positive");
        s += std::fabs(t.pred[i] - t.ref[i]) / t.ref[i];
        ++n;
    }
    if (n == 0) throw std::invalid_argument("mard: no unmasked samples");
    return 100.0 * s / static_cast<double>(n);
}

enum class EventKind { Hypo, Hyper };

/// A persistence-qualified adverse event: a maximal run of samples strictly
/// below the hypo threshold (or strictly above the hyper threshold) lasting
/// at least `persistence` samples. Onset is the first sample of the run.
struct Event {
    std::size_t onset = 0;
    EventKind kind = EventKind::Hypo;
    std::size_t duration = 0;
};

using EventList = std::vector<Event>;

/// Extracts hypo/hyper events from a value series. Runs interrupted by
/// masked samples are split; only unmasked finite samples participate.
inline EventList detect_events(const std::vector<double>& values,
                               const std::vector<std::uint8_t>& mask, double hypo_thresh = 70.0,
                               double hyper_thresh = 180.0, std::size_t persistence = 4) {
    if (values.size() != mask.size())
        throw std::invalid_argument("detect_events: values/mask length mismatch");
    EventList out;
    auto scan = [&](EventKind kind) {
        std::size_t run_start = 0, run_len = 0;
        auto in_zone = [&](std::size_t i) {
            if (!mask[i] || !std::isfinite(values[i])) return false;
            return kind == EventKind::Hypo ? values[i] < hypo_thresh : values[i] > hyper_thresh;
        };
        for (std::size_t i = 0; i <= values.size(); ++i) {
            if (i < values.size() && in_zone(i)) {
                if (run_len == 0) run_start = i;
                ++run_len;
            } else {
                if (run_len >= persistence) out.push_back({run_start, kind, run_len});
                run_len = 0;
            }
        }
    };
    scan(EventKind::Hypo);
    scan(EventKind::Hyper);
    std::sort(out.begin(), out.end(), [](const Event& a, const Event& b) {
        return a.onset != b.onset ? a.onset < b.onset : a.kind < b.kind;
    });
    return out;
}

struct ConfusionCounts {
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Greedy one-to-one onset-order matching. A predicted event is a true
/// positive for a same-kind reference event with onset r when its onset p
/// lies in [r - 2, r + (PH_steps - 5)]: up to 10 minutes leading, and 1 step
/// lagging at PH = 30 min / 7 steps at PH = 60 min. Unmatched predictions
/// are false positives, unmatched references false negatives. True negatives
/// count the evaluated instants covered by neither reference nor predicted
/// events.
inline ConfusionCounts match_events(const EventList& pred_events, const EventList& ref_events,
                                    std::size_t ph_steps,
                                    const std::vector<std::uint8_t>& eval_mask) {
    const std::int64_t lead = 2;
    const std::int64_t lag = ph_steps >= 5 ? static_cast<std::int64_t>(ph_steps) - 5 : 0;

    ConfusionCounts c;
    std::vector<bool> pred_used(pred_events.size(), false);
    for (const Event& r : ref_events) {
        bool matched = false;
        for (std::size_t i = 0; i < pred_events.size() && !matched; ++i) {
            if (pred_used[i] || pred_events[i].kind != r.kind) continue;
            const std::int64_t p = static_cast<std::int64_t>(pred_events[i].onset);
            const std::int64_t ro = static_cast<std::int64_t>(r.onset);
            if (p >= ro - lead && p <= ro + lag) {
                pred_used[i] = true;
                matched = true;
            }
        }
        matched ? ++c.tp : ++c.fn;
    }
    for (bool used : pred_used)
        if (!used) ++c.fp;

    std::vector<bool> covered(eval_mask.size(), false);
    auto cover = [&](const EventList& evs) {
        for (const Event& e : evs)
            for (std::size_t i = e.onset; i < e.onset + e.duration && i < covered.size(); ++i)
                covered[i] = true;
    };
    cover(ref_events);
    cover(pred_events);
    for (std::size_t i = 0; i < eval_mask.size(); ++i)
        if (eval_mask[i] && !covered[i]) ++c.tn;
    return c;
}

/// Matthews correlation coefficient; 0 by convention when any denominator
/// factor vanishes.
inline double mcc(const ConfusionCounts& c) {
    const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
    const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
    const double f1 = tp + fp, f2 = tp + fn, f3 = tn + fp, f4 = tn + fn;
    if (f1 == 0.0 || f2 == 0.0 || f3 == 0.0 || f4 == 0.0) return 0.0;
    return (tp * tn - fp * fn) / std::sqrt(f1 * f2 * f3 * f4);
}

struct EffectivePh {
    double minutes = 0.0;
    std::size_t tau_steps = 0;
    bool degenerate = false; // zero cross-correlation everywhere (e.g. constant prediction)
};

/// Effective prediction horizon PH - 5*tau minutes, where tau maximizes the
/// cross-correlation between the mean-removed prediction and the reference
/// delayed by tau steps (tau in [0, PH_steps], ties to the smallest tau).
inline EffectivePh effective_ph(const ForecastTrace& t) {
    std::size_t longest = 0, run = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        run = t.mask[i] ? run + 1 : 0;
        longest = std::max(longest, run);
    }
    if (longest < 100)
        throw std::invalid_argument("effective_ph: needs >= 100 contiguous unmasked samples");

    double mp = 0.0, mr = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!t.mask[i]) continue;
        mp += t.pred[i];
        mr += t.ref[i];
        ++n;
    }
    mp /= static_cast<double>(n);
    mr /= static_cast<double>(n);

    EffectivePh out;
    double best = 0.0;
    bool any_nonzero = false;
    for (std::size_t tau = 0; tau <= t.ph_steps; ++tau) {
        double s = 0.0;
        std::size_t cnt = 0;
        for (std::size_t k = tau; k < t.size(); ++k) {
            if (!t.mask[k] || !t.mask[k - tau]) continue;
            s += (t.pred[k] - mp) * (t.ref[k - tau] - mr);
            ++cnt;
        }
        const double corr = cnt ? s / static_cast<double>(cnt) : 0.0;
        if (corr != 0.0) any_nonzero = true;
        if (tau == 0 || corr > best) {
            best = corr;
            out.tau_steps = tau;
        }
    }
    if (!any_nonzero) {
        out.tau_steps = 0;
        out.degenerate = true;
    }
    out.minutes = 5.0 * static_cast<double>(t.ph_steps) -
                  5.0 * static_cast<double>(out.tau_steps);
    return out;
}

// --- report assembly ---

struct MetricsRow {
    std::string subject;
    std::string method;
    int ph_min = 30;
    double rmse = 0.0;
    double mard = 0.0;
    double mcc_hyper = 0.0;
    double mcc_hypo = 0.0;
    double ph_eff_min = 0.0;
    bool ph_eff_degenerate = false;
    std::size_t eval_count = 0;
};

struct SummaryStat {
    double mean = 0.0;
    double std = 0.0; // sample standard deviation, 0 for a single subject
};

struct SummaryGroup {
    std::string method;
    int ph_min = 0;
    std::size_t subjects = 0;
    SummaryStat rmse, mard, mcc_hyper, mcc_hypo, ph_eff;
};

inline SummaryStat mean_std(const std::vector<double>& v) {
    SummaryStat s;
    if (v.empty()) return s;
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double acc = 0.0;
        for (double x : v) acc += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(acc / static_cast<double>(v.size() - 1));
    }
    return s;
}

/// Per-(method, PH) mean +- sample std across subjects.
inline std::vector<SummaryGroup> summarize(const std::vector<MetricsRow>& rows) {
    std::map<std::pair<std::string, int>, std::vector<const MetricsRow*>> groups;
    for (const auto& r : rows) groups[{r.method, r.ph_min}].push_back(&r);
    std::vector<SummaryGroup> out;
    for (const auto& [key, members] : groups) {
        SummaryGroup g;
        g.method = key.first;
        g.ph_min = key.second;
        g.subjects = members.size();
        auto collect = [&](auto field) {
            std::vector<double> v;
            for (const MetricsRow* m : members) v.push_back(m->*field);
            return mean_std(v);
        };
        g.rmse = collect(&MetricsRow::rmse);
        g.mard = collect(&MetricsRow::mard);
        g.mcc_hyper = collect(&MetricsRow::mcc_hyper);
        g.mcc_hypo = collect(&MetricsRow::mcc_hypo);
        g.ph_eff = collect(&MetricsRow::ph_eff_min);
        out.push_back(g);
    }
    return out;
}

/// Report CSV: `subject,method,ph_min,rmse,mard,mcc_hyper,mcc_hypo,ph_eff_min`.
inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::string out = "subject,method,ph_min,rmse,mard,mcc_hyper,mcc_hypo,ph_eff_min\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%d,%.6f,%.6f,%.6f,%.6f,%.1f\n",
                      r.subject.c_str(), r.method.c_str(), r.ph_min, r.rmse, r.mard, r.mcc_hyper,
                      r.mcc_hypo, r.ph_eff_min);
        out += buf;
    }
    return out;
}

/// Aligned-text rendering: one block per PH, metric rows (RMSE, MARD,
/// MCC hyper, MCC hypo, Time) against method columns.
inline std::string summary_table_text(const std::vector<SummaryGroup>& groups) {
    std::map<int, std::vector<const SummaryGroup*>> by_ph;
    for (const auto& g : groups) by_ph[g.ph_min].push_back(&g);

    std::ostringstream os;
    char buf[96];
    for (const auto& [ph, gs] : by_ph) {
        os << "PH = " << ph << " min (" << gs.front()->subjects << " subjects)\n";
        os << "  Metric          ";
        for (const auto* g : gs) {
            std::snprintf(buf, sizeof(buf), " %-18s", g->method.c_str());
            os << buf;
        }
        os << '\n';
        auto row = [&](const char* label, SummaryStat SummaryGroup::*field) {
            std::snprintf(buf, sizeof(buf), "  %-16s", label);
            os << buf;
            for (const auto* g : gs) {
                const SummaryStat& s = g->*field;
                std::snprintf(buf, sizeof(buf), " %8.2f +- %-7.2f", s.mean, s.std);
                os << buf;
            }
            os << '\n';
        };
        row("RMSE (mg/dL)", &SummaryGroup::rmse);
        row("MARD (%)", &SummaryGroup::mard);
        row("MCC hyper", &SummaryGroup::mcc_hyper);
        row("MCC hypo", &SummaryGroup::mcc_hypo);
        row("Time (min)", &SummaryGroup::ph_eff);
        os << '\n';
    }
    return os.str();
}

} // namespace glucast
