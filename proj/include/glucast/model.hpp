#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "glucast/model_io.hpp"
#include "glucast/normalize.hpp"
#include "glucast/ops.hpp"
#include "glucast/optim.hpp"
#include "glucast/rng.hpp"
#include "glucast/windows.hpp"

namespace glucast {

enum class ModelKind { Crnn, Nnpg };
enum class Ablation { Full, NoCnn, NoLstm };

inline const char* to_string(ModelKind k) { return k == ModelKind::Crnn ? "crnn" : "nnpg"; }
inline const char* to_string(Ablation a) {
    switch (a) {
        case Ablation::Full: return "full";
        case Ablation::NoCnn: return "no_cnn";
        case Ablation::NoLstm: return "no_lstm";
    }
    return "?";
}

struct ConvLayerSpec {
    std::size_t kernel = 4;
    std::size_t out = 8;
};

/// Architecture description. The default Crnn spec is the full network:
/// [24 x 3] input, three conv layers (k=4 -> 8/16/32 filters, each followed
/// by 2/2 max pooling), a 64-cell LSTM, dense 256/32/1. The Nnpg spec is the
/// flat-input feedforward baseline and ignores the conv/lstm fields.
struct ModelSpec {
    ModelKind kind = ModelKind::Crnn;
    Ablation ablation = Ablation::Full;
    std::size_t window = 24;
    std::size_t channels = 3;
    std::vector<ConvLayerSpec> conv = {{4, 8}, {4, 16}, {4, 32}};
    std::size_t pool_extent = 2;
    std::size_t pool_stride = 2;
    std::size_t lstm_cells = 64;
    std::vector<std::size_t> dense = {256, 32, 1};
    double dropout = 0.2;
    std::size_t ph_steps = 6;

    bool has_cnn() const { return kind == ModelKind::Crnn && ablation != Ablation::NoCnn; }
    bool has_lstm() const { return kind == ModelKind::Crnn && ablation != Ablation::NoLstm; }

    /// Step count surviving the conv/pool stack.
    std::size_t steps_after_conv() const {
        std::size_t L = window;
        for (std::size_t i = 0; i < conv.size(); ++i) {
            if (L < pool_extent || (L - pool_extent) % pool_stride != 0)
                throw std::invalid_argument("ModelSpec: pooling does not divide step count");
            L = (L - pool_extent) / pool_stride + 1;
        }
        return L;
    }

    /// Width of the vector feeding the dense stack.
    std::size_t dense_input() const {
        if (kind == ModelKind::Nnpg) return window * channels;
        if (ablation == Ablation::NoLstm) return steps_after_conv() * conv.back().out;
        return lstm_cells;
    }

    std::size_t lstm_input() const {
        return ablation == Ablation::NoCnn ? channels : conv.back().out;
    }

    void validate() const {
        if (window == 0 || channels == 0) throw std::invalid_argument("ModelSpec: empty input");
        if (dense.empty() || dense.back() != 1)
            throw std::invalid_argument("ModelSpec: dense stack must end in a single output");
        if (dropout < 0.0 || dropout >= 1.0)
            throw std::invalid_argument("ModelSpec: dropout must be in [0,1)");
        if (ph_steps == 0) throw std::invalid_argument("ModelSpec: ph_steps must be positive");
        if (kind == ModelKind::Crnn) {
            if (has_cnn()) {
                if (conv.empty()) throw std::invalid_argument("ModelSpec: conv stack empty");
                steps_after_conv();
            }
            if (has_lstm() && lstm_cells == 0)
                throw std::invalid_argument("ModelSpec: lstm_cells must be positive");
            if (!has_cnn() && !has_lstm())
                throw std::invalid_argument("ModelSpec: cannot ablate both CNN and LSTM");
        }
    }

    /// Canonical architecture string; its FNV-1a hash identifies the spec in
    /// model files.
    std::string canonical() const {
        char buf[64];
        std::string s = std::string("kind=") + to_string(kind) + ";abl=" + to_string(ablation);
        std::snprintf(buf, sizeof(buf), ";in=%zux%zu", window, channels);
        s += buf;
        if (has_cnn()) {
            s += ";conv=";
            for (std::size_t i = 0; i < conv.size(); ++i) {
                std::snprintf(buf, sizeof(buf), "%s%zux%zu", i ? "," : "", conv[i].kernel,
                              conv[i].out);
                s += buf;
            }
            std::snprintf(buf, sizeof(buf), ";pool=%zu,%zu", pool_extent, pool_stride);
            s += buf;
        }
        if (has_lstm()) {
            std::snprintf(buf, sizeof(buf), ";cells=%zu", lstm_cells);
            s += buf;
        }
        s += ";dense=";
        for (std::size_t i = 0; i < dense.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%s%zu", i ? "," : "", dense[i]);
            s += buf;
        }
        std::snprintf(buf, sizeof(buf), ";dropout=%.17g;ph=%zu", dropout, ph_steps);
        s += buf;
        return s;
    }

    std::uint64_t hash() const {
        std::uint64_t h = 1469598103934665603ULL;
        for (char c : canonical()) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ULL;
        }
        return h;
    }
};

namespace detail {

enum class InitKind { Glorot, Zero, One };

struct ParamSpec {
    std::string name;
    std::vector<std::size_t> shape;
    InitKind init = InitKind::Glorot;
    std::size_t fan_in = 0, fan_out = 0;
};

inline std::vector<ParamSpec> param_specs(const ModelSpec& spec) {
    std::vector<ParamSpec> out;
    if (spec.has_cnn()) {
        std::size_t in_ch = spec.channels;
        for (std::size_t i = 0; i < spec.conv.size(); ++i) {
            const auto& c = spec.conv[i];
            const std::string base = "conv" + std::to_string(i + 1);
            out.push_back({base + ".kernel", {c.kernel, in_ch, c.out}, InitKind::Glorot,
                           c.kernel * in_ch, c.kernel * c.out});
            out.push_back({base + ".bias", {c.out}, InitKind::Zero, 0, 0});
            in_ch = c.out;
        }
    }
    if (spec.has_lstm()) {
        const std::size_t n = spec.lstm_input(), c = spec.lstm_cells;
        for (const char* g : {"f", "i", "o", "g"})
            out.push_back({std::string("lstm.W_") + g, {c, n}, InitKind::Glorot, n, c});
        for (const char* g : {"f", "i", "o", "g"})
            out.push_back({std::string("lstm.U_") + g, {c, c}, InitKind::Glorot, c, c});
        for (const char* g : {"f", "i", "o", "g"})
            out.push_back({std::string("lstm.b_") + g, {c},
                           g[0] == 'f' ? InitKind::One : InitKind::Zero, 0, 0});
    }
    std::size_t in = spec.dense_input();
    for (std::size_t i = 0; i < spec.dense.size(); ++i) {
        const std::string base = "dense" + std::to_string(i + 1);
        out.push_back({base + ".W", {spec.dense[i], in}, InitKind::Glorot, in, spec.dense[i]});
        out.push_back({base + ".b", {spec.dense[i]}, InitKind::Zero, 0, 0});
        in = spec.dense[i];
    }
    return out;
}

} // namespace detail

inline std::size_t count_params(const ModelSpec& spec) {
    std::size_t n = 0;
    for (const auto& p : detail::param_specs(spec)) {
        std::size_t s = 1;
        for (std::size_t e : p.shape) s *= e;
        n += s;
    }
    return n;
}

/// A network plus the normalization statistics it was trained with.
class Model {
public:
    ModelSpec spec;
    NormStats stats;
    std::vector<NamedParam> params;

    /// Initializes weights uniformly in +-sqrt(6/(fan_in+fan_out)) per layer
    /// (biases zero, LSTM forget bias one), deterministically per seed.
    static Model build(const ModelSpec& spec, std::uint64_t seed) {
        spec.validate();
        Model m;
        m.spec = spec;
        Rng rng(seed);
        for (const auto& ps : detail::param_specs(spec)) {
            Array a(ps.shape);
            switch (ps.init) {
                case detail::InitKind::Zero: break;
                case detail::InitKind::One: a.fill(1.0); break;
                case detail::InitKind::Glorot: {
                    const double bound =
                        std::sqrt(6.0 / static_cast<double>(ps.fan_in + ps.fan_out));
                    for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(-bound, bound);
                    break;
                }
            }
            m.params.push_back({ps.name, std::move(a)});
        }
        return m;
    }

    std::size_t n_params() const {
        std::size_t n = 0;
        for (const auto& p : params) n += p.value.size();
        return n;
    }

    std::vector<Array*> param_ptrs() {
        std::vector<Array*> out;
        out.reserve(params.size());
        for (auto& p : params) out.push_back(&p.value);
        return out;
    }

    const Array& param(const std::string& name) const {
        for (const auto& p : params)
            if (p.name == name) return p.value;
        throw std::out_of_range("Model: no parameter named " + name);
    }

    /// Inference forward pass for one window [w x c] or a batch [B x w x c].
    /// Returns the raw delta-BG outputs, one per window. Pure: no dropout,
    /// no tape, safe to share a const Model across threads.
    std::vector<double> forward(const Array& x) const {
        if (!x.all_finite()) throw std::invalid_argument("Model::forward: non-finite input");
        const bool batched = x.rank() == 3;
        if ((batched ? x.extent(1) : x.extent(0)) != spec.window ||
            (batched ? x.extent(2) : x.extent(1)) != spec.channels)
            throw std::invalid_argument("Model::forward: window shape mismatch");
        const std::size_t B = batched ? x.extent(0) : 1;

        Array cur = x;
        std::size_t pi = 0;
        if (spec.has_cnn()) {
            for (std::size_t i = 0; i < spec.conv.size(); ++i) {
                const Array& k = params[pi++].value;
                const Array& b = params[pi++].value;
                cur = kernels::relu(kernels::conv1d(cur, k, b, spec.conv[i].kernel - 1));
                cur = kernels::maxpool1d(cur, spec.pool_extent, spec.pool_stride);
            }
        }
        if (spec.has_lstm()) {
            LstmParams lp{params[pi].value,      params[pi + 1].value,  params[pi + 2].value,
                          params[pi + 3].value,  params[pi + 4].value,  params[pi + 5].value,
                          params[pi + 6].value,  params[pi + 7].value,  params[pi + 8].value,
                          params[pi + 9].value,  params[pi + 10].value, params[pi + 11].value};
            pi += 12;
            const std::size_t T = batched ? cur.extent(1) : cur.extent(0);
            const std::size_t C = batched ? cur.extent(2) : cur.extent(1);
            auto state_shape = batched ? std::vector<std::size_t>{B, spec.lstm_cells}
                                       : std::vector<std::size_t>{spec.lstm_cells};
            Array h(state_shape), c(state_shape);
            Array xt(batched ? std::vector<std::size_t>{B, C} : std::vector<std::size_t>{C});
            for (std::size_t t = 0; t < T; ++t) {
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t ch = 0; ch < C; ++ch)
                        xt[b * C + ch] = cur[(b * T + t) * C + ch];
                Array hn, cn;
                kernels::lstm_step(xt, h, c, lp, hn, cn);
                h = std::move(hn);
                c = std::move(cn);
            }
            cur = std::move(h);
        } else {
            const std::size_t flat = (batched ? cur.extent(1) * cur.extent(2)
                                              : cur.extent(0) * cur.extent(1));
            cur = Array(batched ? std::vector<std::size_t>{B, flat}
                                : std::vector<std::size_t>{flat},
                        cur.vec());
        }
        const Act hidden = spec.kind == ModelKind::Nnpg ? Act::Tanh : Act::Relu;
        for (std::size_t i = 0; i < spec.dense.size(); ++i) {
            const Array& W = params[pi++].value;
            const Array& b = params[pi++].value;
            cur = kernels::dense(cur, W, b, i + 1 == spec.dense.size() ? Act::Linear : hidden);
        }
        return cur.vec();
    }

    double forward_one(const Array& window) const { return forward(window)[0]; }

    /// Recovery step applied to the network output.
    double predict_bg(const Array& window, double base_bg) const {
        return recover(forward_one(window), base_bg);
    }

    /// Training-mode forward on a tape. Registers every parameter so the
    /// backward pass yields a gradient slot for each.
    Value forward_taped(Tape& t, Value x, bool training, Rng& dropout_rng) const {
        std::vector<Value> pv;
        pv.reserve(params.size());
        for (ParamId i = 0; i < params.size(); ++i) pv.push_back(t.param(i, params[i].value));

        const Array& xin = t.value(x);
        const bool batched = xin.rank() == 3;
        const std::size_t B = batched ? xin.extent(0) : 1;

        Value cur = x;
        std::size_t pi = 0;
        if (spec.has_cnn()) {
            for (std::size_t i = 0; i < spec.conv.size(); ++i) {
                Value k = pv[pi++], b = pv[pi++];
                cur = relu(t, conv1d(t, cur, k, b, spec.conv[i].kernel - 1));
                cur = maxpool1d(t, cur, spec.pool_extent, spec.pool_stride);
            }
        }
        if (spec.has_lstm()) {
            LstmValues lv{pv[pi],     pv[pi + 1], pv[pi + 2], pv[pi + 3],
                          pv[pi + 4], pv[pi + 5], pv[pi + 6], pv[pi + 7],
                          pv[pi + 8], pv[pi + 9], pv[pi + 10], pv[pi + 11]};
            pi += 12;
            const Array& seq = t.value(cur);
            const std::size_t T = batched ? seq.extent(1) : seq.extent(0);
            auto state_shape = batched ? std::vector<std::size_t>{B, spec.lstm_cells}
                                       : std::vector<std::size_t>{spec.lstm_cells};
            Value h = t.input(Array(state_shape));
            Value c = t.input(Array(state_shape));
            for (std::size_t step = 0; step < T; ++step) {
                auto [hn, cn] = lstm_step(t, slice_step(t, cur, step), h, c, lv);
                h = hn;
                c = cn;
            }
            cur = h;
        } else {
            cur = flatten(t, cur);
        }
        if (spec.kind == ModelKind::Crnn && spec.dropout > 0.0)
            cur = dropout(t, cur, spec.dropout, dropout_rng, training);
        const Act hidden = spec.kind == ModelKind::Nnpg ? Act::Tanh : Act::Relu;
        for (std::size_t i = 0; i < spec.dense.size(); ++i) {
            Value W = pv[pi++], b = pv[pi++];
            cur = dense(t, cur, W, b, i + 1 == spec.dense.size() ? Act::Linear : hidden);
        }
        return cur;
    }
};

// --- spec/stats (de)serialization and the model file ---

inline nlohmann::json to_json(const ModelSpec& s) {
    nlohmann::json j;
    j["kind"] = to_string(s.kind);
    j["ablation"] = to_string(s.ablation);
    j["window"] = s.window;
    j["channels"] = s.channels;
    nlohmann::json conv = nlohmann::json::array();
    for (const auto& c : s.conv) conv.push_back({{"kernel", c.kernel}, {"out", c.out}});
    j["conv"] = conv;
    j["pool_extent"] = s.pool_extent;
    j["pool_stride"] = s.pool_stride;
    j["lstm_cells"] = s.lstm_cells;
    j["dense"] = s.dense;
    j["dropout"] = s.dropout;
    j["ph_steps"] = s.ph_steps;
    return j;
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
    ModelSpec s;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "crnn")
        s.kind = ModelKind::Crnn;
    else if (kind == "nnpg")
        s.kind = ModelKind::Nnpg;
    else
        throw std::runtime_error("unknown model kind '" + kind + "'");
    const std::string abl = j.at("ablation").get<std::string>();
    if (abl == "full")
        s.ablation = Ablation::Full;
    else if (abl == "no_cnn")
        s.ablation = Ablation::NoCnn;
    else if (abl == "no_lstm")
        s.ablation = Ablation::NoLstm;
    else
        throw std::runtime_error("unknown ablation '" + abl + "'");
    s.window = j.at("window").get<std::size_t>();
    s.channels = j.at("channels").get<std::size_t>();
    s.conv.clear();
    for (const auto& c : j.at("conv"))
        s.conv.push_back({c.at("kernel").get<std::size_t>(), c.at("out").get<std::size_t>()});
    s.pool_extent = j.at("pool_extent").get<std::size_t>();
    s.pool_stride = j.at("pool_stride").get<std::size_t>();
    s.lstm_cells = j.at("lstm_cells").get<std::size_t>();
    s.dense = j.at("dense").get<std::vector<std::size_t>>();
    s.dropout = j.at("dropout").get<double>();
    s.ph_steps = j.at("ph_steps").get<std::size_t>();
    return s;
}

inline nlohmann::json to_json(const NormStats& st) {
    auto ch = [](const NormStats::Channel& c) {
        return nlohmann::json{{"mean", c.mean}, {"std", c.std}};
    };
    return nlohmann::json{{"glucose", ch(st.glucose)}, {"carbs", ch(st.carbs)},
                          {"insulin", ch(st.insulin)}};
}

inline NormStats norm_stats_from_json(const nlohmann::json& j) {
    auto ch = [](const nlohmann::json& c) {
        NormStats::Channel out;
        out.mean = c.at("mean").get<double>();
        out.std = c.at("std").get<double>();
        return out;
    };
    NormStats st;
    st.glucose = ch(j.at("glucose"));
    st.carbs = ch(j.at("carbs"));
    st.insulin = ch(j.at("insulin"));
    return st;
}

inline void save_model(const Model& m, const std::string& path) {
    nlohmann::json meta;
    meta["model"] = "network";
    meta["spec"] = to_json(m.spec);
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(m.spec.hash()));
    meta["spec_hash"] = hex;
    meta["norm_stats"] = to_json(m.stats);
    save_param_container(path, meta, m.params);
}

inline Model load_model(const std::string& path, const ModelSpec* expected = nullptr) {
    auto [meta, params] = load_param_container(path);
    if (meta.value("model", "") != "network")
        throw std::runtime_error(path + ": not a network model file");
    Model m;
    m.spec = model_spec_from_json(meta.at("spec"));
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(m.spec.hash()));
    if (meta.value("spec_hash", "") != hex)
        throw std::runtime_error(path + ": spec hash mismatch (corrupt or edited manifest)");
    if (expected && expected->hash() != m.spec.hash())
        throw std::runtime_error(path + ": model spec does not match the requested spec");
    m.stats = norm_stats_from_json(meta.at("norm_stats"));
    m.params = std::move(params);

    const auto want = detail::param_specs(m.spec);
    if (want.size() != m.params.size())
        throw std::runtime_error(path + ": parameter list does not match spec");
    for (std::size_t i = 0; i < want.size(); ++i)
        if (want[i].name != m.params[i].name || want[i].shape != m.params[i].value.shape())
            throw std::runtime_error(path + ": parameter " + want[i].name + " mismatch");
    return m;
}

} // namespace glucast
