#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "glucast/metrics.hpp"
#include "glucast/rng.hpp"

using namespace glucast;
using Catch::Approx;

namespace {

ForecastTrace make_trace(std::vector<double> ref, std::vector<double> pred,
                         std::vector<std::uint8_t> mask, std::size_t ph = 6) {
    ForecastTrace t;
    t.ph_steps = ph;
    t.ref = std::move(ref);
    t.pred = std::move(pred);
    t.mask = std::move(mask);
    t.time.resize(t.ref.size());
    for (std::size_t i = 0; i < t.time.size(); ++i) t.time[i] = static_cast<std::int64_t>(i) * 300;
    return t;
}

// Brute-force oracles, written independently of the library loops.

double rmse_brute(const ForecastTrace& t) {
    std::vector<double> errs;
    for (std::size_t i = 0; i < t.size(); ++i)
        if (t.mask[i]) errs.push_back(t.pred[i] - t.ref[i]);
    double acc = 0.0;
    for (double e : errs) acc += e * e;
    return std::sqrt(acc / static_cast<double>(errs.size()));
}

double mard_brute(const ForecastTrace& t) {
    std::vector<double> rel;
    for (std::size_t i = 0; i < t.size(); ++i)
        if (t.mask[i]) rel.push_back(std::fabs(t.pred[i] - t.ref[i]) / t.ref[i]);
    double acc = 0.0;
    for (double r : rel) acc += r;
    return 100.0 * acc / static_cast<double>(rel.size());
}

EventList detect_brute(const std::vector<double>& v, const std::vector<std::uint8_t>& mask,
                       double hypo, double hyper, std::size_t persistence) {
    EventList out;
    auto zone = [&](std::size_t i, EventKind k) {
        if (!mask[i] || !std::isfinite(v[i])) return false;
        return k == EventKind::Hypo ? v[i] < hypo : v[i] > hyper;
    };
    for (EventKind k : {EventKind::Hypo, EventKind::Hyper}) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!zone(i, k)) continue;
            if (i > 0 && zone(i - 1, k)) continue; // not a run start
            std::size_t j = i;
            while (j < v.size() && zone(j, k)) ++j;
            if (j - i >= persistence) out.push_back({i, k, j - i});
        }
    }
    std::sort(out.begin(), out.end(), [](const Event& a, const Event& b) {
        return a.onset != b.onset ? a.onset < b.onset : a.kind < b.kind;
    });
    return out;
}

std::size_t effph_tau_brute(const ForecastTrace& t) {
    double mp = 0.0, mr = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < t.size(); ++i)
        if (t.mask[i]) {
            mp += t.pred[i];
            mr += t.ref[i];
            ++n;
        }
    mp /= static_cast<double>(n);
    mr /= static_cast<double>(n);
    std::size_t best_tau = 0;
    double best = -1e300;
    for (std::size_t tau = 0; tau <= t.ph_steps; ++tau) {
        double acc = 0.0;
        std::size_t cnt = 0;
        for (std::size_t k = 0; k < t.size(); ++k) {
            if (k < tau || !t.mask[k] || !t.mask[k - tau]) continue;
            acc += (t.pred[k] - mp) * (t.ref[k - tau] - mr);
            ++cnt;
        }
        const double c = cnt ? acc / static_cast<double>(cnt) : 0.0;
        if (c > best) {
            best = c;
            best_tau = tau;
        }
    }
    return best_tau;
}

/// 600-sample non-periodic test signal rich enough for lag estimation.
std::vector<double> rich_signal(std::size_t n = 600) {
    std::vector<double> y(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double x = static_cast<double>(k);
        y[k] = 140.0 + 45.0 * std::sin(x / 7.3) + 25.0 * std::sin(x / 3.1 + 1.0) +
               12.0 * std::sin(x / 17.7 + 2.0);
    }
    return y;
}

} // namespace

TEST_CASE("rmse") {
    SECTION("perfect prediction gives zero") {
        auto t = make_trace({100, 120}, {100, 120}, {1, 1});
        REQUIRE(rmse(t) == 0.0);
    }
    SECTION("hand-computed case") {
        auto t = make_trace({100, 110}, {103, 106}, {1, 1});
        REQUIRE(rmse(t) == Approx(std::sqrt((9.0 + 16.0) / 2.0)).epsilon(1e-12));
        REQUIRE(rmse(t) == Approx(3.5355339).epsilon(1e-6));
    }
    SECTION("masking the worst index decreases rmse") {
        auto t = make_trace({100, 100, 100}, {101, 130, 99}, {1, 1, 1});
        const double all = rmse(t);
        t.mask[1] = 0;
        REQUIRE(rmse(t) < all);
    }
    SECTION("empty evaluation set is an error") {
        auto t = make_trace({100}, {100}, {0});
        REQUIRE_THROWS_AS(rmse(t), std::invalid_argument);
    }
}

TEST_CASE("mard") {
    auto t = make_trace({100}, {110}, {1});
    REQUIRE(mard(t) == Approx(10.0));
    SECTION("scale invariance") {
        auto a = make_trace({100, 150}, {90, 160}, {1, 1});
        auto b = make_trace({200, 300}, {180, 320}, {1, 1});
        REQUIRE(mard(a) == Approx(mard(b)).epsilon(1e-12));
    }
    SECTION("zero reference is an error") {
        auto z = make_trace({0.0}, {10.0}, {1});
        REQUIRE_THROWS_AS(mard(z), std::invalid_argument);
    }
}

TEST_CASE("event detection") {
    SECTION("constant 120 has no events") {
        std::vector<double> v(50, 120.0);
        std::vector<std::uint8_t> m(50, 1);
        REQUIRE(detect_events(v, m).empty());
    }
    SECTION("persistence rule at the 20-minute boundary") {
        std::vector<double> v(20, 120.0);
        std::vector<std::uint8_t> m(20, 1);
        for (int i = 5; i < 8; ++i) v[static_cast<std::size_t>(i)] = 65.0; // 15 min
        REQUIRE(detect_events(v, m).empty());
        v[8] = 65.0; // 20 min
        auto ev = detect_events(v, m);
        REQUIRE(ev.size() == 1);
        REQUIRE(ev[0].kind == EventKind::Hypo);
        REQUIRE(ev[0].onset == 5);
        REQUIRE(ev[0].duration == 4);
    }
    SECTION("hyper run length") {
        std::vector<double> v(30, 120.0);
        std::vector<std::uint8_t> m(30, 1);
        for (int i = 10; i < 20; ++i) v[static_cast<std::size_t>(i)] = 200.0;
        auto ev = detect_events(v, m);
        REQUIRE(ev.size() == 1);
        REQUIRE(ev[0].kind == EventKind::Hyper);
        REQUIRE(ev[0].duration == 10);
    }
    SECTION("masked samples split runs") {
        std::vector<double> v(12, 60.0);
        std::vector<std::uint8_t> m(12, 1);
        m[5] = 0; // runs of 5 and 6 -> both events; with persistence 6 only the tail
        auto ev = detect_events(v, m, 70, 180, 6);
        REQUIRE(ev.size() == 1);
        REQUIRE(ev[0].onset == 6);
    }
    SECTION("threshold is strict") {
        std::vector<double> v(10, 70.0);
        std::vector<std::uint8_t> m(10, 1);
        REQUIRE(detect_events(v, m).empty());
        std::vector<double> h(10, 180.0);
        REQUIRE(detect_events(h, m).empty());
    }
    SECTION("matches the brute-force enumerator on random series") {
        Rng rng(42);
        for (int rep = 0; rep < 100; ++rep) {
            const std::size_t n = 60 + rng.below(100);
            std::vector<double> v(n);
            std::vector<std::uint8_t> m(n);
            for (std::size_t i = 0; i < n; ++i) {
                v[i] = rng.uniform(40.0, 260.0);
                m[i] = rng.uniform() < 0.9 ? 1 : 0;
            }
            auto a = detect_events(v, m);
            auto b = detect_brute(v, m, 70.0, 180.0, 4);
            REQUIRE(a.size() == b.size());
            for (std::size_t i = 0; i < a.size(); ++i) {
                REQUIRE(a[i].onset == b[i].onset);
                REQUIRE(a[i].kind == b[i].kind);
                REQUIRE(a[i].duration == b[i].duration);
            }
        }
    }
}

TEST_CASE("event matching window rule") {
    std::vector<std::uint8_t> mask(200, 1);
    SECTION("identical lists are all true positives") {
        EventList ev = {{30, EventKind::Hypo, 5}, {90, EventKind::Hyper, 6}};
        auto c = match_events(ev, ev, 6, mask);
        REQUIRE(c.tp == 2);
        REQUIRE(c.fp == 0);
        REQUIRE(c.fn == 0);
    }
    SECTION("PH=6: one step late matches, two steps late does not") {
        EventList ref = {{100, EventKind::Hypo, 4}};
        auto tp = match_events({{101, EventKind::Hypo, 4}}, ref, 6, mask);
        REQUIRE(tp.tp == 1);
        auto miss = match_events({{102, EventKind::Hypo, 4}}, ref, 6, mask);
        REQUIRE(miss.tp == 0);
        REQUIRE(miss.fp == 1);
        REQUIRE(miss.fn == 1);
    }
    SECTION("PH=12: seven steps late matches, eight does not") {
        EventList ref = {{100, EventKind::Hyper, 4}};
        REQUIRE(match_events({{107, EventKind::Hyper, 4}}, ref, 12, mask).tp == 1);
        REQUIRE(match_events({{108, EventKind::Hyper, 4}}, ref, 12, mask).tp == 0);
    }
    SECTION("10-minute leading tolerance") {
        EventList ref = {{100, EventKind::Hypo, 4}};
        REQUIRE(match_events({{98, EventKind::Hypo, 4}}, ref, 6, mask).tp == 1);
        REQUIRE(match_events({{97, EventKind::Hypo, 4}}, ref, 6, mask).tp == 0);
    }
    SECTION("kinds never cross-match") {
        EventList ref = {{100, EventKind::Hypo, 4}};
        auto c = match_events({{100, EventKind::Hyper, 4}}, ref, 6, mask);
        REQUIRE(c.tp == 0);
        REQUIRE(c.fp == 1);
        REQUIRE(c.fn == 1);
    }
    SECTION("true negatives count uncovered evaluated instants") {
        EventList ref = {{10, EventKind::Hypo, 5}};
        EventList pred = {{12, EventKind::Hypo, 4}};
        std::vector<std::uint8_t> m(30, 1);
        auto c = match_events(pred, ref, 6, m);
        // covered indices: 10..15 union 12..15 -> 6 of 30
        REQUIRE(c.tn == 24);
    }
}

TEST_CASE("mcc") {
    REQUIRE(mcc({1, 0, 0, 1}) == 1.0);
    REQUIRE(mcc({2, 1, 1, 3}) == Approx(5.0 / 12.0));
    REQUIRE(mcc({5, 0, 0, 0}) == 0.0);
    SECTION("label swap negates when all counts positive") {
        Rng rng(3);
        for (int i = 0; i < 50; ++i) {
            ConfusionCounts c{static_cast<std::int64_t>(1 + rng.below(20)),
                              static_cast<std::int64_t>(1 + rng.below(20)),
                              static_cast<std::int64_t>(1 + rng.below(20)),
                              static_cast<std::int64_t>(1 + rng.below(20))};
            ConfusionCounts sw{c.fp, c.tp, c.tn, c.fn};
            REQUIRE(mcc(sw) == Approx(-mcc(c)).epsilon(1e-12));
            REQUIRE(mcc(c) >= -1.0);
            REQUIRE(mcc(c) <= 1.0);
        }
    }
}

TEST_CASE("effective prediction horizon") {
    auto y = rich_signal();
    SECTION("identity predictor recovers the full horizon") {
        for (std::size_t ph : {6u, 12u}) {
            auto t = make_trace(y, y, std::vector<std::uint8_t>(y.size(), 1), ph);
            auto e = effective_ph(t);
            REQUIRE(e.tau_steps == 0);
            REQUIRE_FALSE(e.degenerate);
            REQUIRE(e.minutes == 5.0 * static_cast<double>(ph));
        }
    }
    SECTION("a k-step delayed predictor loses 5k minutes") {
        for (std::size_t shift : {1u, 2u, 3u}) {
            std::vector<double> pred(y.size(), 0.0);
            std::vector<std::uint8_t> mask(y.size(), 0);
            for (std::size_t k = shift; k < y.size(); ++k) {
                pred[k] = y[k - shift];
                mask[k] = 1;
            }
            auto t = make_trace(y, pred, mask, 6);
            auto e = effective_ph(t);
            REQUIRE(e.tau_steps == shift);
            REQUIRE(e.minutes == 30.0 - 5.0 * static_cast<double>(shift));
            REQUIRE(effph_tau_brute(t) == shift);
        }
    }
    SECTION("constant prediction is degenerate and keeps PH by the tie rule") {
        std::vector<double> pred(y.size(), 140.0);
        auto t = make_trace(y, pred, std::vector<std::uint8_t>(y.size(), 1), 6);
        auto e = effective_ph(t);
        REQUIRE(e.degenerate);
        REQUIRE(e.tau_steps == 0);
        REQUIRE(e.minutes == 30.0);
    }
    SECTION("short trace is an error") {
        auto t = make_trace(std::vector<double>(50, 120.0), std::vector<double>(50, 120.0),
                            std::vector<std::uint8_t>(50, 1));
        REQUIRE_THROWS_AS(effective_ph(t), std::invalid_argument);
    }
    SECTION("agrees with the brute-force scan on masked random traces") {
        Rng rng(9);
        for (int rep = 0; rep < 100; ++rep) {
            const std::size_t n = 200;
            std::vector<double> ref(n), pred(n);
            std::vector<std::uint8_t> m(n, 1);
            for (std::size_t i = 0; i < n; ++i) {
                ref[i] = 120.0 + 40.0 * std::sin(static_cast<double>(i) / 5.0) + rng.uniform(-5, 5);
                pred[i] = ref[i] + rng.uniform(-10.0, 10.0);
            }
            for (int j = 0; j < 10; ++j) m[rng.below(n)] = 0;
            for (std::size_t i = 0; i < 120; ++i) m[i + 30] = 1; // keep a long run
            auto t = make_trace(ref, pred, m, 6);
            REQUIRE(effective_ph(t).tau_steps == effph_tau_brute(t));
        }
    }
}

TEST_CASE("metric oracles on random traces") {
    Rng rng(17);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n = 50 + rng.below(200);
        std::vector<double> ref(n), pred(n);
        std::vector<std::uint8_t> m(n);
        for (std::size_t i = 0; i < n; ++i) {
            ref[i] = rng.uniform(45.0, 300.0);
            pred[i] = ref[i] + rng.uniform(-30.0, 30.0);
            m[i] = rng.uniform() < 0.85 ? 1 : 0;
        }
        m[0] = 1;
        auto t = make_trace(ref, pred, m);
        REQUIRE(std::fabs(rmse(t) - rmse_brute(t)) < 1e-10);
        REQUIRE(std::fabs(mard(t) - mard_brute(t)) < 1e-10);
    }
}

TEST_CASE("metrics never read masked samples") {
    auto y = rich_signal(300);
    std::vector<double> pred = y;
    std::vector<std::uint8_t> m(y.size(), 1);
    for (std::size_t i = 0; i < y.size(); i += 7) m[i] = 0;
    for (std::size_t i = 100; i < 220; ++i) m[i] = 1;
    auto t = make_trace(y, pred, m, 6);

    const double r0 = rmse(t), md0 = mard(t);
    auto e0 = effective_ph(t);
    auto ev0 = detect_events(t.ref, t.mask);

    ForecastTrace t2 = t;
    for (std::size_t i = 0; i < t2.size(); ++i)
        if (!t2.mask[i]) {
            t2.ref[i] = 9999.0;
            t2.pred[i] = -777.0;
        }
    REQUIRE(rmse(t2) == r0);
    REQUIRE(mard(t2) == md0);
    REQUIRE(effective_ph(t2).tau_steps == e0.tau_steps);
    auto ev2 = detect_events(t2.ref, t2.mask);
    REQUIRE(ev2.size() == ev0.size());
}

TEST_CASE("summary statistics") {
    std::vector<MetricsRow> rows;
    MetricsRow a;
    a.subject = "s1";
    a.method = "crnn";
    a.ph_min = 30;
    a.rmse = 10.0;
    rows.push_back(a);
    SECTION("single subject has zero std") {
        auto groups = summarize(rows);
        REQUIRE(groups.size() == 1);
        REQUIRE(groups[0].rmse.mean == 10.0);
        REQUIRE(groups[0].rmse.std == 0.0);
    }
    SECTION("two subjects use the sample standard deviation") {
        MetricsRow b = a;
        b.subject = "s2";
        b.rmse = 14.0;
        rows.push_back(b);
        auto groups = summarize(rows);
        REQUIRE(groups[0].rmse.mean == Approx(12.0));
        REQUIRE(groups[0].rmse.std == Approx(2.8284271).epsilon(1e-6));
    }
    SECTION("csv header matches the report contract") {
        REQUIRE(metrics_csv(rows).rfind(
                    "subject,method,ph_min,rmse,mard,mcc_hyper,mcc_hypo,ph_eff_min\n", 0) == 0);
    }
    SECTION("text table carries the five metric rows") {
        auto text = summary_table_text(summarize(rows));
        for (const char* label : {"RMSE", "MARD", "MCC hyper", "MCC hypo", "Time"})
            REQUIRE(text.find(label) != std::string::npos);
    }
}
