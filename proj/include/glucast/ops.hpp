#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "glucast/array.hpp"
#include "glucast/rng.hpp"
#include "glucast/tape.hpp"

namespace glucast {

enum class Act { Linear, Relu, Sigmoid, Tanh };

/// Gate parameters of one LSTM layer. W_* act on the step input, U_* on the
/// previous hidden state, b_* are biases; gates are (f)orget, (i)nput,
/// (o)utput and the candidate (g).
struct LstmParams {
    Array W_f, W_i, W_o, W_g; // [cells x input_dim]
    Array U_f, U_i, U_o, U_g; // [cells x cells]
    Array b_f, b_i, b_o, b_g; // [cells]

    std::size_t cells() const { return b_f.extent(0); }
    std::size_t input_dim() const { return W_f.extent(1); }

    static std::size_t param_count(std::size_t input_dim, std::size_t cells) {
        return 4 * ((input_dim + cells) * cells + cells);
    }

    void validate() const {
        const std::size_t c = cells(), n = input_dim();
        for (const Array* w : {&W_f, &W_i, &W_o, &W_g})
            if (w->rank() != 2 || w->extent(0) != c || w->extent(1) != n)
                throw std::invalid_argument("LstmParams: W shape mismatch");
        for (const Array* u : {&U_f, &U_i, &U_o, &U_g})
            if (u->rank() != 2 || u->extent(0) != c || u->extent(1) != c)
                throw std::invalid_argument("LstmParams: U shape mismatch");
        for (const Array* b : {&b_f, &b_i, &b_o, &b_g})
            if (b->rank() != 1 || b->extent(0) != c)
                throw std::invalid_argument("LstmParams: bias shape mismatch");
    }
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double act_apply(Act a, double x) {
    switch (a) {
        case Act::Linear: return x;
        case Act::Relu: return x > 0.0 ? x : 0.0;
        case Act::Sigmoid: return sigmoid(x);
        case Act::Tanh: return std::tanh(x);
    }
    return x;
}

/// Derivative of the activation expressed through its output value.
inline double act_deriv_from_out(Act a, double y) {
    switch (a) {
        case Act::Linear: return 1.0;
        case Act::Relu: return y > 0.0 ? 1.0 : 0.0;
        case Act::Sigmoid: return y * (1.0 - y);
        case Act::Tanh: return 1.0 - y * y;
    }
    return 1.0;
}

// y[b,j] += sum_k x[b,k] * W[j,k]      x: BxN, W: MxN, y: BxM
inline void addmm_xWt(const double* x, std::size_t B, std::size_t n,
                      const double* W, std::size_t m, double* y) {
    for (std::size_t b = 0; b < B; ++b) {
        const double* xb = x + b * n;
        double* yb = y + b * m;
        for (std::size_t j = 0; j < m; ++j) {
            const double* wj = W + j * n;
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += xb[k] * wj[k];
            yb[j] += s;
        }
    }
}

// dx[b,k] += sum_j dy[b,j] * W[j,k]
inline void addmm_dyW(const double* dy, std::size_t B, std::size_t m,
                      const double* W, std::size_t n, double* dx) {
    for (std::size_t b = 0; b < B; ++b) {
        const double* dyb = dy + b * m;
        double* dxb = dx + b * n;
        for (std::size_t j = 0; j < m; ++j) {
            const double c = dyb[j];
            if (c == 0.0) continue;
            const double* wj = W + j * n;
            for (std::size_t k = 0; k < n; ++k) dxb[k] += c * wj[k];
        }
    }
}

// dW[j,k] += sum_b dy[b,j] * x[b,k]
inline void add_outer(const double* dy, const double* x, std::size_t B,
                      std::size_t m, std::size_t n, double* dW) {
    for (std::size_t b = 0; b < B; ++b) {
        const double* dyb = dy + b * m;
        const double* xb = x + b * n;
        for (std::size_t j = 0; j < m; ++j) {
            const double c = dyb[j];
            if (c == 0.0) continue;
            double* wj = dW + j * n;
            for (std::size_t k = 0; k < n; ++k) wj[k] += c * xb[k];
        }
    }
}

/// Interprets an array as a batch of rows: rank `base_rank` means a single
/// sample (B = 1), rank base_rank+1 carries a leading batch extent.
struct BatchDims {
    std::size_t batch;
    bool batched;
};

inline BatchDims batch_dims(const Array& x, std::size_t base_rank, const char* op) {
    if (x.rank() == base_rank) return {1, false};
    if (x.rank() == base_rank + 1) return {x.extent(0), true};
    throw std::invalid_argument(std::string(op) + ": unexpected rank for input " + x.shape_str());
}

} // namespace detail

// ---------------------------------------------------------------------------
// Plain forward kernels (tape-free; also used by the inference path).
// ---------------------------------------------------------------------------

namespace kernels {

/// Temporal convolution over [steps x ch_in] (or [B x steps x ch_in]) with
/// left zero-padding. Kernels are [k x ch_in x ch_out]. With pad_left = k-1
/// the output keeps the step count and each output depends on past samples
/// only.
inline Array conv1d(const Array& x, const Array& kern, const Array& bias, std::size_t pad_left) {
    auto bd = detail::batch_dims(x, 2, "conv1d");
    if (kern.rank() != 3) throw std::invalid_argument("conv1d: kernels must be [k x ch_in x ch_out]");
    const std::size_t B = bd.batch;
    const std::size_t T = x.extent(bd.batched ? 1 : 0);
    const std::size_t C = x.extent(bd.batched ? 2 : 1);
    const std::size_t K = kern.extent(0), KC = kern.extent(1), O = kern.extent(2);
    if (KC != C) throw std::invalid_argument("conv1d: kernel ch_in mismatch");
    if (bias.size() != O) throw std::invalid_argument("conv1d: bias size mismatch");
    if (T + pad_left < K) throw std::invalid_argument("conv1d: input shorter than kernel");
    const std::size_t TO = T + pad_left - K + 1;

    Array out(bd.batched ? std::vector<std::size_t>{B, TO, O} : std::vector<std::size_t>{TO, O});
    const double* xd = x.data();
    const double* kd = kern.data();
    double* od = out.data();
    for (std::size_t b = 0; b < B; ++b) {
        const double* xb = xd + b * T * C;
        double* ob = od + b * TO * O;
        for (std::size_t m = 0; m < TO; ++m) {
            double* orow = ob + m * O;
            for (std::size_t o = 0; o < O; ++o) orow[o] = bias[o];
            for (std::size_t i = 0; i < K; ++i) {
                const std::size_t ti = m + i; // position in padded input
                if (ti < pad_left || ti - pad_left >= T) continue;
                const double* xrow = xb + (ti - pad_left) * C;
                const double* krow = kd + i * C * O;
                for (std::size_t c = 0; c < C; ++c) {
                    const double xv = xrow[c];
                    if (xv == 0.0) continue;
                    const double* kco = krow + c * O;
                    for (std::size_t o = 0; o < O; ++o) orow[o] += xv * kco[o];
                }
            }
        }
    }
    return out;
}

/// Max pooling over the step dimension; optionally reports the flat input
/// index of each maximum (first index wins ties).
inline Array maxpool1d(const Array& x, std::size_t F, std::size_t S,
                       std::vector<std::size_t>* argmax = nullptr) {
    auto bd = detail::batch_dims(x, 2, "maxpool1d");
    const std::size_t B = bd.batch;
    const std::size_t T = x.extent(bd.batched ? 1 : 0);
    const std::size_t D = x.extent(bd.batched ? 2 : 1);
    if (F == 0 || S == 0) throw std::invalid_argument("maxpool1d: F and S must be positive");
    if (F > T) throw std::invalid_argument("maxpool1d: pool extent exceeds input length");
    if ((T - F) % S != 0) throw std::invalid_argument("maxpool1d: (L1 - F) not divisible by S");
    const std::size_t TO = (T - F) / S + 1;

    Array out(bd.batched ? std::vector<std::size_t>{B, TO, D} : std::vector<std::size_t>{TO, D});
    if (argmax) argmax->assign(out.size(), 0);
    const double* xd = x.data();
    double* od = out.data();
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t l = 0; l < TO; ++l) {
            for (std::size_t d = 0; d < D; ++d) {
                std::size_t best = (b * T + l * S) * D + d;
                double bv = xd[best];
                for (std::size_t i = 1; i < F; ++i) {
                    const std::size_t idx = (b * T + l * S + i) * D + d;
                    if (xd[idx] > bv) { bv = xd[idx]; best = idx; }
                }
                const std::size_t oidx = (b * TO + l) * D + d;
                od[oidx] = bv;
                if (argmax) (*argmax)[oidx] = best;
            }
        }
    }
    return out;
}

/// Z = act(W x + b) for a single vector [n] or a batch [B x n].
inline Array dense(const Array& x, const Array& W, const Array& b, Act act) {
    auto bd = detail::batch_dims(x, 1, "dense");
    const std::size_t B = bd.batch;
    const std::size_t n = x.extent(bd.batched ? 1 : 0);
    if (W.rank() != 2 || W.extent(1) != n)
        throw std::invalid_argument("dense: weight columns must equal input length");
    const std::size_t m = W.extent(0);
    if (b.size() != m) throw std::invalid_argument("dense: bias size mismatch");

    Array out(bd.batched ? std::vector<std::size_t>{B, m} : std::vector<std::size_t>{m});
    double* od = out.data();
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < m; ++j) od[i * m + j] = b[j];
    detail::addmm_xWt(x.data(), B, n, W.data(), m, od);
    for (std::size_t i = 0; i < out.size(); ++i) od[i] = detail::act_apply(act, od[i]);
    return out;
}

inline Array relu(const Array& x) {
    Array out = x;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (out[i] < 0.0) out[i] = 0.0;
    return out;
}

/// Gate activations saved by one LSTM step (shapes [B x cells]).
struct LstmCellSaved {
    Array f, i, o, g, tg, tc;
};

namespace lstm_detail {

// Borrowed views of the 12 gate arrays, gate order f, i, o, g.
struct ParamRefs {
    const Array* W[4];
    const Array* U[4];
    const Array* b[4];
};

inline ParamRefs refs(const LstmParams& p) {
    return {{&p.W_f, &p.W_i, &p.W_o, &p.W_g},
            {&p.U_f, &p.U_i, &p.U_o, &p.U_g},
            {&p.b_f, &p.b_i, &p.b_o, &p.b_g}};
}

inline void cell_forward(const Array& x, const Array& h_prev, const Array& c_prev,
                         const ParamRefs& p, Array& h_out, Array& c_out,
                         LstmCellSaved* saved) {
    auto bd = glucast::detail::batch_dims(x, 1, "lstm_step");
    const std::size_t B = bd.batch;
    const std::size_t n = x.extent(bd.batched ? 1 : 0);
    const std::size_t c = p.b[0]->extent(0);
    if (n != p.W[0]->extent(1)) throw std::invalid_argument("lstm_step: input dim mismatch");
    if (h_prev.size() != B * c || c_prev.size() != B * c)
        throw std::invalid_argument("lstm_step: state shape mismatch");

    auto shape = bd.batched ? std::vector<std::size_t>{B, c} : std::vector<std::size_t>{c};
    Array gate[4] = {Array(shape), Array(shape), Array(shape), Array(shape)};
    for (int gi = 0; gi < 4; ++gi) {
        Array& a = gate[gi];
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t j = 0; j < c; ++j) a[b * c + j] = (*p.b[gi])[j];
        glucast::detail::addmm_xWt(x.data(), B, n, p.W[gi]->data(), c, a.data());
        glucast::detail::addmm_xWt(h_prev.data(), B, c, p.U[gi]->data(), c, a.data());
    }

    h_out = Array(shape);
    c_out = Array(shape);
    Array tg(shape), tc(shape);
    for (std::size_t idx = 0; idx < B * c; ++idx) {
        const double f = glucast::detail::sigmoid(gate[0][idx]);
        const double i = glucast::detail::sigmoid(gate[1][idx]);
        const double o = glucast::detail::sigmoid(gate[2][idx]);
        const double g = std::tanh(gate[3][idx]);
        const double tgv = std::tanh(g);
        const double cv = f * c_prev[idx] + i * tgv;
        const double tcv = std::tanh(cv);
        c_out[idx] = cv;
        h_out[idx] = o * tcv;
        gate[0][idx] = f; gate[1][idx] = i; gate[2][idx] = o; gate[3][idx] = g;
        tg[idx] = tgv; tc[idx] = tcv;
    }
    if (saved) {
        saved->f = std::move(gate[0]);
        saved->i = std::move(gate[1]);
        saved->o = std::move(gate[2]);
        saved->g = std::move(gate[3]);
        saved->tg = std::move(tg);
        saved->tc = std::move(tc);
    }
}

} // namespace lstm_detail

/// One step of the modified LSTM cell:
///   f = sig(W_f x + U_f h + b_f)   i = sig(W_i x + U_i h + b_i)
///   o = sig(W_o x + U_o h + b_o)   g = tanh(W_g x + U_g h + b_g)
///   c' = f.c + i.tanh(g)           h' = o.tanh(c')
/// The candidate passes through tanh twice (g is already tanh-squashed and
/// the cell update applies tanh(g) again); this matches the cell update this
/// engine is built around, not the textbook LSTM.
inline void lstm_step(const Array& x, const Array& h_prev, const Array& c_prev,
                      const LstmParams& p, Array& h_out, Array& c_out,
                      LstmCellSaved* saved = nullptr) {
    lstm_detail::cell_forward(x, h_prev, c_prev, lstm_detail::refs(p), h_out, c_out, saved);
}

/// Mean absolute error; subgradient at zero is defined as 0.
inline double mae(const Array& pred, const Array& target) {
    if (pred.size() == 0) throw std::invalid_argument("mae: empty input");
    if (pred.size() != target.size()) throw std::invalid_argument("mae: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::fabs(pred[i] - target[i]);
    return s / static_cast<double>(pred.size());
}

} // namespace kernels

// ---------------------------------------------------------------------------
// Taped ops.
// ---------------------------------------------------------------------------

namespace detail {

struct Conv1dNode : Tape::Node {
    std::size_t x, k, b, out, pad;
    Conv1dNode(std::size_t x_, std::size_t k_, std::size_t b_, std::size_t out_, std::size_t pad_)
        : x(x_), k(k_), b(b_), out(out_), pad(pad_) {}

    void backward(Tape& t) override {
        const Array* dz = t.adjoint_if(out);
        if (!dz) return;
        const Array& xv = t.value(Value{x});
        const Array& kv = t.value(Value{k});
        auto bd = batch_dims(xv, 2, "conv1d");
        const std::size_t B = bd.batch;
        const std::size_t T = xv.extent(bd.batched ? 1 : 0);
        const std::size_t C = xv.extent(bd.batched ? 2 : 1);
        const std::size_t K = kv.extent(0), O = kv.extent(2);
        const std::size_t TO = T + pad - K + 1;

        Array& dx = t.adjoint_acc(x);
        Array& dk = t.adjoint_acc(k);
        Array& db = t.adjoint_acc(b);
        const double* dzd = dz->data();
        const double* xd = xv.data();
        const double* kd = kv.data();
        for (std::size_t bi = 0; bi < B; ++bi) {
            const double* xb = xd + bi * T * C;
            double* dxb = dx.data() + bi * T * C;
            for (std::size_t m = 0; m < TO; ++m) {
                const double* dzrow = dzd + (bi * TO + m) * O;
                for (std::size_t o = 0; o < O; ++o) db[o] += dzrow[o];
                for (std::size_t i = 0; i < K; ++i) {
                    const std::size_t ti = m + i;
                    if (ti < pad || ti - pad >= T) continue;
                    const std::size_t tin = ti - pad;
                    for (std::size_t c = 0; c < C; ++c) {
                        const double* kco = kd + (i * C + c) * O;
                        double* dkco = dk.data() + (i * C + c) * O;
                        const double xv2 = xb[tin * C + c];
                        double s = 0.0;
                        for (std::size_t o = 0; o < O; ++o) {
                            s += dzrow[o] * kco[o];
                            dkco[o] += dzrow[o] * xv2;
                        }
                        dxb[tin * C + c] += s;
                    }
                }
            }
        }
    }
};

struct MaxPoolNode : Tape::Node {
    std::size_t x, out;
    std::vector<std::size_t> argmax;
    MaxPoolNode(std::size_t x_, std::size_t out_, std::vector<std::size_t> am)
        : x(x_), out(out_), argmax(std::move(am)) {}

    void backward(Tape& t) override {
        const Array* dy = t.adjoint_if(out);
        if (!dy) return;
        Array& dx = t.adjoint_acc(x);
        for (std::size_t i = 0; i < dy->size(); ++i) dx[argmax[i]] += (*dy)[i];
    }
};

struct DenseNode : Tape::Node {
    std::size_t x, W, b, out;
    Act act;
    DenseNode(std::size_t x_, std::size_t W_, std::size_t b_, std::size_t out_, Act a)
        : x(x_), W(W_), b(b_), out(out_), act(a) {}

    void backward(Tape& t) override {
        const Array* dyp = t.adjoint_if(out);
        if (!dyp) return;
        const Array& y = t.value(Value{out});
        const Array& xv = t.value(Value{x});
        const Array& Wv = t.value(Value{W});
        auto bd = batch_dims(xv, 1, "dense");
        const std::size_t B = bd.batch;
        const std::size_t n = Wv.extent(1), m = Wv.extent(0);

        Array da(y.shape());
        for (std::size_t i = 0; i < y.size(); ++i)
            da[i] = (*dyp)[i] * act_deriv_from_out(act, y[i]);

        Array& dx = t.adjoint_acc(x);
        Array& dW = t.adjoint_acc(W);
        Array& db = t.adjoint_acc(b);
        addmm_dyW(da.data(), B, m, Wv.data(), n, dx.data());
        add_outer(da.data(), xv.data(), B, m, n, dW.data());
        for (std::size_t bi = 0; bi < B; ++bi)
            for (std::size_t j = 0; j < m; ++j) db[j] += da[bi * m + j];
    }
};

struct ReluNode : Tape::Node {
    std::size_t x, out;
    ReluNode(std::size_t x_, std::size_t out_) : x(x_), out(out_) {}

    void backward(Tape& t) override {
        const Array* dy = t.adjoint_if(out);
        if (!dy) return;
        const Array& y = t.value(Value{out});
        Array& dx = t.adjoint_acc(x);
        for (std::size_t i = 0; i < y.size(); ++i)
            if (y[i] > 0.0) dx[i] += (*dy)[i];
    }
};

struct DropoutNode : Tape::Node {
    std::size_t x, out;
    Array mask; // per-entry scale: 0 or 1/(1-rate)
    DropoutNode(std::size_t x_, std::size_t out_, Array m)
        : x(x_), out(out_), mask(std::move(m)) {}

    void backward(Tape& t) override {
        const Array* dy = t.adjoint_if(out);
        if (!dy) return;
        Array& dx = t.adjoint_acc(x);
        for (std::size_t i = 0; i < mask.size(); ++i) dx[i] += (*dy)[i] * mask[i];
    }
};

struct MaeNode : Tape::Node {
    std::size_t pred, out;
    Array sign; // sign(pred - target), 0 at ties
    MaeNode(std::size_t pred_, std::size_t out_, Array s)
        : pred(pred_), out(out_), sign(std::move(s)) {}

    void backward(Tape& t) override {
        const Array* dy = t.adjoint_if(out);
        if (!dy) return;
        const double scale = (*dy)[0] / static_cast<double>(sign.size());
        Array& dp = t.adjoint_acc(pred);
        for (std::size_t i = 0; i < sign.size(); ++i) dp[i] += scale * sign[i];
    }
};

struct SliceStepNode : Tape::Node {
    std::size_t x, out, step;
    SliceStepNode(std::size_t x_, std::size_t out_, std::size_t t_) : x(x_), out(out_), step(t_) {}

    void backward(Tape& t) override {
        const Array* dy = t.adjoint_if(out);
        if (!dy) return;
        const Array& xv = t.value(Value{x});
        auto bd = batch_dims(xv, 2, "slice_step");
        const std::size_t B = bd.batch;
        const std::size_t T = xv.extent(bd.batched ? 1 : 0);
        const std::size_t C = xv.extent(bd.batched ? 2 : 1);
        Array& dx = t.adjoint_acc(x);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c)
                dx[(b * T + step) * C + c] += (*dy)[b * C + c];
    }
};

struct ReshapeNode : Tape::Node {
    std::size_t x, out;
    ReshapeNode(std::size_t x_, std::size_t out_) : x(x_), out(out_) {}

    void backward(Tape& t) override {
        const Array* dy = t.adjoint_if(out);
        if (!dy) return;
        Array& dx = t.adjoint_acc(x);
        for (std::size_t i = 0; i < dy->size(); ++i) dx[i] += (*dy)[i];
    }
};

struct LstmStepNode : Tape::Node {
    std::size_t x, h_prev, c_prev;
    std::size_t Wf, Wi, Wo, Wg, Uf, Ui, Uo, Ug, bf, bi_, bo, bg;
    std::size_t h_out, c_out;
    kernels::LstmCellSaved saved;

    void backward(Tape& t) override {
        const Array* dh = t.adjoint_if(h_out);
        const Array* dc_out = t.adjoint_if(c_out);
        if (!dh && !dc_out) return;

        const Array& xv = t.value(Value{x});
        const Array& hv = t.value(Value{h_prev});
        const Array& cv = t.value(Value{c_prev});
        auto bd = batch_dims(xv, 1, "lstm_step");
        const std::size_t B = bd.batch;
        const std::size_t n = xv.extent(bd.batched ? 1 : 0);
        const std::size_t c = saved.f.size() / B;

        // dc = dc_out + dh . o . tanh'(c')
        Array dc(saved.f.shape());
        for (std::size_t i = 0; i < dc.size(); ++i) {
            double v = dc_out ? (*dc_out)[i] : 0.0;
            if (dh) v += (*dh)[i] * saved.o[i] * (1.0 - saved.tc[i] * saved.tc[i]);
            dc[i] = v;
        }
        Array daf(dc.shape()), dai(dc.shape()), dao(dc.shape()), dag(dc.shape());
        for (std::size_t i = 0; i < dc.size(); ++i) {
            const double f = saved.f[i], ig = saved.i[i], o = saved.o[i], g = saved.g[i];
            const double tg = saved.tg[i];
            daf[i] = dc[i] * cv[i] * f * (1.0 - f);
            dai[i] = dc[i] * tg * ig * (1.0 - ig);
            dao[i] = dh ? (*dh)[i] * saved.tc[i] * o * (1.0 - o) : 0.0;
            dag[i] = dc[i] * ig * (1.0 - tg * tg) * (1.0 - g * g);
        }

        Array& dcp = t.adjoint_acc(c_prev);
        for (std::size_t i = 0; i < dc.size(); ++i) dcp[i] += dc[i] * saved.f[i];

        Array& dx = t.adjoint_acc(x);
        Array& dhp = t.adjoint_acc(h_prev);
        const std::size_t Ws[4] = {Wf, Wi, Wo, Wg};
        const std::size_t Us[4] = {Uf, Ui, Uo, Ug};
        const std::size_t bs[4] = {bf, bi_, bo, bg};
        const Array* das[4] = {&daf, &dai, &dao, &dag};
        for (int gate = 0; gate < 4; ++gate) {
            const Array& da = *das[gate];
            const Array& W = t.value(Value{Ws[gate]});
            const Array& U = t.value(Value{Us[gate]});
            addmm_dyW(da.data(), B, c, W.data(), n, dx.data());
            addmm_dyW(da.data(), B, c, U.data(), c, dhp.data());
            add_outer(da.data(), xv.data(), B, c, n, t.adjoint_acc(Ws[gate]).data());
            add_outer(da.data(), hv.data(), B, c, c, t.adjoint_acc(Us[gate]).data());
            Array& db = t.adjoint_acc(bs[gate]);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t j = 0; j < c; ++j) db[j] += da[b * c + j];
        }
    }
};

} // namespace detail

/// Tape values of the 12 LSTM parameter arrays.
struct LstmValues {
    Value W_f, W_i, W_o, W_g, U_f, U_i, U_o, U_g, b_f, b_i, b_o, b_g;
};

inline Value conv1d(Tape& t, Value x, Value kern, Value bias, std::size_t pad_left) {
    Array out = kernels::conv1d(t.value(x), t.value(kern), t.value(bias), pad_left);
    Value v = t.new_value(std::move(out));
    t.push_node(std::make_unique<detail::Conv1dNode>(x.id, kern.id, bias.id, v.id, pad_left));
    return v;
}

inline Value maxpool1d(Tape& t, Value x, std::size_t F, std::size_t S) {
    std::vector<std::size_t> argmax;
    Array out = kernels::maxpool1d(t.value(x), F, S, &argmax);
    Value v = t.new_value(std::move(out));
    t.push_node(std::make_unique<detail::MaxPoolNode>(x.id, v.id, std::move(argmax)));
    return v;
}

inline Value dense(Tape& t, Value x, Value W, Value b, Act act) {
    Array out = kernels::dense(t.value(x), t.value(W), t.value(b), act);
    Value v = t.new_value(std::move(out));
    t.push_node(std::make_unique<detail::DenseNode>(x.id, W.id, b.id, v.id, act));
    return v;
}

inline Value relu(Tape& t, Value x) {
    Array out = kernels::relu(t.value(x));
    Value v = t.new_value(std::move(out));
    t.push_node(std::make_unique<detail::ReluNode>(x.id, v.id));
    return v;
}

/// Inverted dropout: zero with probability `rate`, scale survivors by
/// 1/(1-rate). Identity when not training or rate == 0.
inline Value dropout(Tape& t, Value x, double rate, Rng& rng, bool training) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
    if (!training || rate == 0.0) return x;
    const Array& xv = t.value(x);
    Array mask(xv.shape());
    const double keep = 1.0 - rate;
    for (std::size_t i = 0; i < mask.size(); ++i)
        mask[i] = rng.uniform() < rate ? 0.0 : 1.0 / keep;
    Array out(xv.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
    Value v = t.new_value(std::move(out));
    t.push_node(std::make_unique<detail::DropoutNode>(x.id, v.id, std::move(mask)));
    return v;
}

inline Value mae_loss(Tape& t, Value pred, const Array& target) {
    const Array& p = t.value(pred);
    const double loss = kernels::mae(p, target);
    Array sign(p.shape());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] - target[i];
        sign[i] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    }
    Value v = t.new_value(Array::scalar(loss));
    t.push_node(std::make_unique<detail::MaeNode>(pred.id, v.id, std::move(sign)));
    return v;
}

/// Select one time step: [B x T x C] -> [B x C] (or [T x C] -> [C]).
inline Value slice_step(Tape& t, Value x, std::size_t step) {
    const Array& xv = t.value(x);
    auto bd = detail::batch_dims(xv, 2, "slice_step");
    const std::size_t B = bd.batch;
    const std::size_t T = xv.extent(bd.batched ? 1 : 0);
    const std::size_t C = xv.extent(bd.batched ? 2 : 1);
    if (step >= T) throw std::invalid_argument("slice_step: step out of range");
    Array out(bd.batched ? std::vector<std::size_t>{B, C} : std::vector<std::size_t>{C});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) out[b * C + c] = xv[(b * T + step) * C + c];
    Value v = t.new_value(std::move(out));
    t.push_node(std::make_unique<detail::SliceStepNode>(x.id, v.id, step));
    return v;
}

/// Collapse trailing dims: [B x T x C] -> [B x T*C], [T x C] -> [T*C].
inline Value flatten(Tape& t, Value x) {
    const Array& xv = t.value(x);
    auto bd = detail::batch_dims(xv, 2, "flatten");
    Array out = xv;
    if (bd.batched)
        out = Array({xv.extent(0), xv.extent(1) * xv.extent(2)}, xv.vec());
    else
        out = Array({xv.extent(0) * xv.extent(1)}, xv.vec());
    Value v = t.new_value(std::move(out));
    t.push_node(std::make_unique<detail::ReshapeNode>(x.id, v.id));
    return v;
}

inline std::pair<Value, Value> lstm_step(Tape& t, Value x, Value h_prev, Value c_prev,
                                         const LstmValues& p) {
    auto node = std::make_unique<detail::LstmStepNode>();
    Array h, c;
    {
        kernels::lstm_detail::ParamRefs refs{
            {&t.value(p.W_f), &t.value(p.W_i), &t.value(p.W_o), &t.value(p.W_g)},
            {&t.value(p.U_f), &t.value(p.U_i), &t.value(p.U_o), &t.value(p.U_g)},
            {&t.value(p.b_f), &t.value(p.b_i), &t.value(p.b_o), &t.value(p.b_g)}};
        kernels::lstm_detail::cell_forward(t.value(x), t.value(h_prev), t.value(c_prev), refs, h,
                                           c, &node->saved);
    }
    Value hv = t.new_value(std::move(h));
    Value cv = t.new_value(std::move(c));
    node->x = x.id;
    node->h_prev = h_prev.id;
    node->c_prev = c_prev.id;
    node->Wf = p.W_f.id; node->Wi = p.W_i.id; node->Wo = p.W_o.id; node->Wg = p.W_g.id;
    node->Uf = p.U_f.id; node->Ui = p.U_i.id; node->Uo = p.U_o.id; node->Ug = p.U_g.id;
    node->bf = p.b_f.id; node->bi_ = p.b_i.id; node->bo = p.b_o.id; node->bg = p.b_g.id;
    node->h_out = hv.id;
    node->c_out = cv.id;
    t.push_node(std::move(node));
    return {hv, cv};
}

} // namespace glucast
