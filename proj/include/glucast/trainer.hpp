#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "glucast/model.hpp"
#include "glucast/ops.hpp"
#include "glucast/optim.hpp"
#include "glucast/windows.hpp"

namespace glucast {

struct TrainConfig {
    std::size_t batch = 128;
    int max_epochs = 200;
    double lr = 1e-3;
    double rho = 0.9;
    double eps = 1e-8;
    double dropout = 0.2;
    int patience = 10;
    double val_fraction = 0.1;
    std::uint64_t seed = 0;
    std::size_t ph_steps = 6;

    void validate() const {
        if (batch < 1) throw std::invalid_argument("TrainConfig: batch must be >= 1");
        if (!(val_fraction > 0.0 && val_fraction < 0.5))
            throw std::invalid_argument("TrainConfig: validation fraction must be in (0, 0.5)");
        if (max_epochs < 1) throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
        if (patience < 1) throw std::invalid_argument("TrainConfig: patience must be >= 1");
    }
};

struct TrainHistory {
    struct Epoch {
        double train_mae = 0.0;
        double val_mae = 0.0;
        double seconds = 0.0;
    };
    std::vector<Epoch> epochs;
    int best_epoch = -1; // index into epochs
    bool diverged = false;
};

struct SplitSamples {
    std::vector<WindowSample> train, validation, test;
};

/// Chronological split: the first `train_fraction` of the samples is the
/// training period (its tail of `val_fraction` becomes validation), the rest
/// is the test period. No shuffling across the boundary.
inline SplitSamples split(const std::vector<WindowSample>& samples, double train_fraction,
                          double val_fraction = 0.1) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("split: train_fraction must be in (0, 1)");
    if (!(val_fraction > 0.0 && val_fraction < 0.5))
        throw std::invalid_argument("split: val_fraction must be in (0, 0.5)");
    const std::size_t n = samples.size();
    const std::size_t n_train_period =
        static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_fraction));
    const std::size_t n_val =
        static_cast<std::size_t>(std::llround(static_cast<double>(n_train_period) * val_fraction));
    if (n_train_period == 0 || n_val == 0 || n_train_period - n_val == 0 ||
        n_train_period >= n)
        throw std::invalid_argument("split: too few samples for the requested fractions");

    SplitSamples out;
    out.train.assign(samples.begin(), samples.begin() + (n_train_period - n_val));
    out.validation.assign(samples.begin() + (n_train_period - n_val),
                          samples.begin() + n_train_period);
    out.test.assign(samples.begin() + n_train_period, samples.end());
    return out;
}

/// Mean absolute delta error of the model on a sample set (inference mode).
inline double delta_mae(const Model& m, const std::vector<WindowSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("delta_mae: empty sample set");
    const std::size_t chunk = 256;
    double err = 0.0;
    for (std::size_t at = 0; at < samples.size(); at += chunk) {
        const std::size_t B = std::min(chunk, samples.size() - at);
        Array X({B, m.spec.window, m.spec.channels});
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < samples[at + b].input.size(); ++i)
                X[b * samples[at + b].input.size() + i] = samples[at + b].input[i];
        auto pred = m.forward(X);
        for (std::size_t b = 0; b < B; ++b)
            err += std::fabs(pred[b] - samples[at + b].target_delta);
    }
    return err / static_cast<double>(samples.size());
}

/// Mini-batch RMSprop training against the MAE of the delta targets.
/// Batches are reshuffled every epoch (seeded); training stops after
/// `patience` epochs without validation improvement; the model keeps the
/// best-validation weights, never the last ones. A non-finite loss aborts
/// the run (diverged flag) with the history collected so far.
inline TrainHistory train(Model& model, const std::vector<WindowSample>& train_samples,
                          const std::vector<WindowSample>& val_samples,
                          const TrainConfig& cfg) {
    cfg.validate();
    if (train_samples.empty()) throw std::invalid_argument("train: empty training set");
    if (val_samples.empty()) throw std::invalid_argument("train: empty validation set");

    model.spec.dropout = cfg.dropout;
    Rng seed_rng(cfg.seed);
    Rng shuffle_rng = seed_rng.fork(1);
    Rng dropout_rng = seed_rng.fork(2);

    RmspropState opt(cfg.lr, cfg.rho, cfg.eps);
    TrainHistory hist;
    std::vector<NamedParam> best_params = model.params;
    double best_val = std::numeric_limits<double>::infinity();
    int bad_epochs = 0;

    const std::size_t n = train_samples.size();
    const std::size_t in_sz = model.spec.window * model.spec.channels;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        bool finite = true;
        for (std::size_t at = 0; at < n && finite; at += cfg.batch) {
            const std::size_t B = std::min(cfg.batch, n - at);
            Array X({B, model.spec.window, model.spec.channels});
            Array Y({B, 1});
            for (std::size_t b = 0; b < B; ++b) {
                const WindowSample& w = train_samples[order[at + b]];
                for (std::size_t i = 0; i < in_sz; ++i) X[b * in_sz + i] = w.input[i];
                Y[b] = w.target_delta;
            }
            Tape tape;
            Value out = model.forward_taped(tape, tape.input(std::move(X)), true, dropout_rng);
            Value loss = mae_loss(tape, out, Y);
            const double lval = tape.value(loss)[0];
            if (!std::isfinite(lval)) {
                finite = false;
                break;
            }
            Gradients g = tape.backward(loss);
            opt.step(model.param_ptrs(), g);
            loss_sum += lval * static_cast<double>(B);
        }
        if (!finite) {
            hist.diverged = true;
            break;
        }

        TrainHistory::Epoch e;
        e.train_mae = loss_sum / static_cast<double>(n);
        e.val_mae = delta_mae(model, val_samples);
        e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        hist.epochs.push_back(e);
        if (!std::isfinite(e.val_mae)) {
            hist.diverged = true;
            break;
        }

        if (e.val_mae < best_val) {
            best_val = e.val_mae;
            best_params = model.params;
            hist.best_epoch = epoch;
            bad_epochs = 0;
        } else if (++bad_epochs >= cfg.patience) {
            break;
        }
    }

    model.params = std::move(best_params);
    return hist;
}

/// Spec-signature convenience: carve the validation tail out of `samples`.
inline TrainHistory train(Model& model, const std::vector<WindowSample>& samples,
                          const TrainConfig& cfg) {
    cfg.validate();
    const std::size_t n = samples.size();
    const std::size_t n_val =
        static_cast<std::size_t>(std::llround(static_cast<double>(n) * cfg.val_fraction));
    if (n_val == 0 || n_val >= n) throw std::invalid_argument("train: too few samples");
    std::vector<WindowSample> tr(samples.begin(), samples.begin() + (n - n_val));
    std::vector<WindowSample> va(samples.begin() + (n - n_val), samples.end());
    return train(model, tr, va, cfg);
}

/// History export: `epoch,train_mae,val_mae,seconds`.
inline void write_history_csv(const std::string& path, const TrainHistory& h) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "epoch,train_mae,val_mae,seconds\n";
    char buf[128];
    for (std::size_t i = 0; i < h.epochs.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.3f\n", i, h.epochs[i].train_mae,
                      h.epochs[i].val_mae, h.epochs[i].seconds);
        out << buf;
    }
}

} // namespace glucast
