#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "glucast/model.hpp"
#include "glucast/rng.hpp"

using namespace glucast;
using Catch::Approx;

namespace {

Array random_window(Rng& rng, std::size_t w = 24, std::size_t c = 3) {
    Array a({w, c});
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(-2.0, 2.0);
    return a;
}

/// Independent straight-line re-implementation of the full CRNN forward pass
/// using plain nested vectors; shares no code with the library kernels.
double straight_line_forward(const Model& m, const Array& window) {
    using Mat = std::vector<std::vector<double>>;
    const ModelSpec& s = m.spec;

    Mat cur(s.window, std::vector<double>(s.channels));
    for (std::size_t t = 0; t < s.window; ++t)
        for (std::size_t c = 0; c < s.channels; ++c) cur[t][c] = window.at2(t, c);

    std::size_t pi = 0;
    if (s.has_cnn()) {
        for (const auto& layer : s.conv) {
            const Array& K = m.params[pi++].value;
            const Array& b = m.params[pi++].value;
            const std::size_t pad = layer.kernel - 1;
            const std::size_t C = cur[0].size();
            Mat z(cur.size(), std::vector<double>(layer.out));
            for (std::size_t t = 0; t < cur.size(); ++t)
                for (std::size_t o = 0; o < layer.out; ++o) {
                    double acc = b[o];
                    for (std::size_t i = 0; i < layer.kernel; ++i)
                        for (std::size_t c = 0; c < C; ++c) {
                            const long src = static_cast<long>(t + i) - static_cast<long>(pad);
                            if (src < 0 || src >= static_cast<long>(cur.size())) continue;
                            acc += cur[static_cast<std::size_t>(src)][c] * K.at3(i, c, o);
                        }
                    z[t][o] = acc > 0.0 ? acc : 0.0; // relu
                }
            // max pooling
            const std::size_t L2 = (z.size() - s.pool_extent) / s.pool_stride + 1;
            Mat p(L2, std::vector<double>(layer.out));
            for (std::size_t l = 0; l < L2; ++l)
                for (std::size_t o = 0; o < layer.out; ++o) {
                    double best = z[l * s.pool_stride][o];
                    for (std::size_t i = 1; i < s.pool_extent; ++i)
                        best = std::max(best, z[l * s.pool_stride + i][o]);
                    p[l][o] = best;
                }
            cur = std::move(p);
        }
    }

    std::vector<double> vec;
    if (s.has_lstm()) {
        const std::size_t n = cur[0].size(), cells = s.lstm_cells;
        const Array& Wf = m.params[pi].value;
        const Array& Wi = m.params[pi + 1].value;
        const Array& Wo = m.params[pi + 2].value;
        const Array& Wg = m.params[pi + 3].value;
        const Array& Uf = m.params[pi + 4].value;
        const Array& Ui = m.params[pi + 5].value;
        const Array& Uo = m.params[pi + 6].value;
        const Array& Ug = m.params[pi + 7].value;
        const Array& bf = m.params[pi + 8].value;
        const Array& bi = m.params[pi + 9].value;
        const Array& bo = m.params[pi + 10].value;
        const Array& bg = m.params[pi + 11].value;
        pi += 12;
        auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
        std::vector<double> h(cells, 0.0), c(cells, 0.0);
        for (const auto& xt : cur) {
            std::vector<double> hn(cells), cn(cells);
            for (std::size_t j = 0; j < cells; ++j) {
                double af = bf[j], ai = bi[j], ao = bo[j], ag = bg[j];
                for (std::size_t k = 0; k < n; ++k) {
                    af += Wf.at2(j, k) * xt[k];
                    ai += Wi.at2(j, k) * xt[k];
                    ao += Wo.at2(j, k) * xt[k];
                    ag += Wg.at2(j, k) * xt[k];
                }
                for (std::size_t k = 0; k < cells; ++k) {
                    af += Uf.at2(j, k) * h[k];
                    ai += Ui.at2(j, k) * h[k];
                    ao += Uo.at2(j, k) * h[k];
                    ag += Ug.at2(j, k) * h[k];
                }
                const double g = std::tanh(ag);
                cn[j] = sig(af) * c[j] + sig(ai) * std::tanh(g);
                hn[j] = sig(ao) * std::tanh(cn[j]);
            }
            h = std::move(hn);
            c = std::move(cn);
        }
        vec = std::move(h);
    } else {
        for (const auto& row : cur) vec.insert(vec.end(), row.begin(), row.end());
    }

    for (std::size_t li = 0; li < s.dense.size(); ++li) {
        const Array& W = m.params[pi++].value;
        const Array& b = m.params[pi++].value;
        std::vector<double> next(s.dense[li]);
        for (std::size_t j = 0; j < s.dense[li]; ++j) {
            double acc = b[j];
            for (std::size_t k = 0; k < vec.size(); ++k) acc += W.at2(j, k) * vec[k];
            if (li + 1 < s.dense.size()) acc = acc > 0.0 ? acc : 0.0;
            next[j] = acc;
        }
        vec = std::move(next);
    }
    return vec[0];
}

} // namespace

TEST_CASE("full CRNN spec has 52441 parameters") {
    ModelSpec spec;
    REQUIRE(count_params(spec) == 52441);
    Model m = Model::build(spec, 1);
    REQUIRE(m.n_params() == 52441);
}

TEST_CASE("ablation parameter budgets") {
    ModelSpec no_lstm;
    no_lstm.ablation = Ablation::NoLstm;
    REQUIRE(no_lstm.dense_input() == 96);
    // (96+1)*256 first dense, no lstm contribution
    REQUIRE(count_params(no_lstm) == 104 + 528 + 2080 + (96 + 1) * 256 + 8224 + 33);

    ModelSpec no_cnn;
    no_cnn.ablation = Ablation::NoCnn;
    REQUIRE(no_cnn.lstm_input() == 3);
    REQUIRE(count_params(no_cnn) == LstmParams::param_count(3, 64) + 16640 + 8224 + 33);
}

TEST_CASE("build is deterministic per seed") {
    ModelSpec spec;
    Model a = Model::build(spec, 42);
    Model b = Model::build(spec, 42);
    Model c = Model::build(spec, 43);
    REQUIRE(a.params.size() == b.params.size());
    for (std::size_t i = 0; i < a.params.size(); ++i)
        REQUIRE(a.params[i].value == b.params[i].value);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.params.size(); ++i)
        if (!(a.params[i].value == c.params[i].value)) any_diff = true;
    REQUIRE(any_diff);
}

TEST_CASE("zero-weight model outputs zero and predict_bg recovers the base") {
    ModelSpec spec;
    Model m = Model::build(spec, 7);
    for (auto& p : m.params) p.value.fill(0.0);
    Rng rng(3);
    Array w = random_window(rng);
    REQUIRE(m.forward_one(w) == 0.0);
    REQUIRE(m.predict_bg(w, 150.0) == 150.0);
}

TEST_CASE("prediction minus base equals the forward output") {
    ModelSpec spec;
    Model m = Model::build(spec, 9);
    Rng rng(4);
    Array w = random_window(rng);
    const double delta = m.forward_one(w);
    REQUIRE(m.predict_bg(w, 132.5) == recover(delta, 132.5));
    REQUIRE(m.predict_bg(w, 132.5) - 132.5 == Approx(delta).margin(1e-12));
}

TEST_CASE("batched forward returns one scalar per window") {
    ModelSpec spec;
    Model m = Model::build(spec, 11);
    Rng rng(5);
    Array batch({4, 24, 3});
    for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = rng.uniform(-1.0, 1.0);
    auto out = m.forward(batch);
    REQUIRE(out.size() == 4);
    // agrees with per-window evaluation
    for (std::size_t s = 0; s < 4; ++s) {
        Array w({24, 3});
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = batch[s * 72 + i];
        REQUIRE(m.forward_one(w) == out[s]);
    }
}

TEST_CASE("forward matches an independent straight-line implementation") {
    Rng rng(6);
    for (auto abl : {Ablation::Full, Ablation::NoCnn, Ablation::NoLstm}) {
        ModelSpec spec;
        spec.ablation = abl;
        Model m = Model::build(spec, 1234 + static_cast<int>(abl));
        for (int i = 0; i < 5; ++i) {
            Array w = random_window(rng);
            const double a = m.forward_one(w);
            const double b = straight_line_forward(m, w);
            REQUIRE(std::fabs(a - b) < 1e-10);
        }
    }
}

TEST_CASE("inference is deterministic") {
    ModelSpec spec;
    Model m = Model::build(spec, 21);
    Rng rng(8);
    Array w = random_window(rng);
    REQUIRE(m.forward_one(w) == m.forward_one(w));
}

TEST_CASE("forward rejects non-finite input") {
    ModelSpec spec;
    Model m = Model::build(spec, 2);
    Array w({24, 3});
    w[5] = std::nan("");
    REQUIRE_THROWS_AS(m.forward(w), std::invalid_argument);
}

TEST_CASE("model file round trip") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "glucast_model_test.gmw").string();

    ModelSpec spec;
    Model m = Model::build(spec, 77);
    m.stats.glucose = {140.0, 35.0};
    m.stats.carbs = {1.2, 6.0};
    m.stats.insulin = {0.2, 0.9};
    save_model(m, path);

    SECTION("predictions survive the round trip bitwise") {
        Model l = load_model(path);
        REQUIRE(l.spec.hash() == m.spec.hash());
        REQUIRE(l.stats.glucose.mean == m.stats.glucose.mean);
        Rng rng(10);
        for (int i = 0; i < 100; ++i) {
            Array w = random_window(rng);
            REQUIRE(l.forward_one(w) == m.forward_one(w));
        }
    }
    SECTION("file size stays under 1 MB") {
        REQUIRE(fs::file_size(path) < 1024 * 1024);
    }
    SECTION("requested-spec mismatch is rejected") {
        ModelSpec other;
        other.lstm_cells = 32;
        REQUIRE_THROWS_WITH(load_model(path, &other),
                            Catch::Matchers::ContainsSubstring("does not match"));
    }
    SECTION("truncated file is a clean error") {
        const std::string trunc = path + ".trunc";
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::ofstream out(trunc, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 4096));
        out.close();
        REQUIRE_THROWS_WITH(load_model(trunc), Catch::Matchers::ContainsSubstring("truncated"));
        fs::remove(trunc);
    }
    fs::remove(path);
}

TEST_CASE("tiny-spec full-chain gradients match finite differences") {
    ModelSpec spec;
    spec.window = 8;
    spec.channels = 2;
    spec.conv = {{3, 4}};
    spec.lstm_cells = 4;
    spec.dense = {5, 1};
    spec.dropout = 0.0;
    REQUIRE(spec.steps_after_conv() == 4);

    Model m = Model::build(spec, 90);
    Rng rng(12);
    Array x({8, 2});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.5, 1.5);
    Array target({1}, {0.8});

    Tape t;
    Rng drop(0);
    Value out = m.forward_taped(t, t.input(x), true, drop);
    Value loss = mae_loss(t, out, target);
    Gradients g = t.backward(loss);

    auto loss_fn = [&]() {
        return std::fabs(m.forward_one(x) - target[0]);
    };

    double worst = 0.0;
    for (std::size_t p = 0; p < m.params.size(); ++p) {
        Array& a = m.params[p].value;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double keep = a[i];
            const double h = 1e-4;
            a[i] = keep + h;
            const double up = loss_fn();
            a[i] = keep - h;
            const double dn = loss_fn();
            a[i] = keep;
            const double fd = (up - dn) / (2.0 * h);
            const double ad = g[p][i];
            const double err = std::fabs(ad - fd) / std::max({std::fabs(ad), std::fabs(fd), 1e-4});
            worst = std::max(worst, err);
        }
    }
    REQUIRE(worst < 1e-4);
}
