#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "glucast/trainer.hpp"

namespace glucast {

/// Flat key-value run configuration covering every tunable. Unknown keys are
/// rejected; every key has a documented default; the fully-resolved config is
/// echoed into each run's output directory.
struct RunConfig {
    std::uint64_t seed = 1;
    int ph_min = 30; // 30 or 60
    std::string variant = "crnn";

    // trainer
    std::size_t batch_size = 128;
    int max_epochs = 200;
    double learning_rate = 1e-3;
    double rho = 0.9;
    double epsilon = 1e-8;
    double dropout_rate = 0.2;
    int patience = 10;
    double val_fraction = 0.1;
    double train_fraction = 0.5;
    int train_days = 0; // 0 = the whole training half; N = its most recent N days

    // datapipe
    double smooth_sigma_steps = 0.0;
    double spike_threshold_mgdl = 40.0;
    int max_interp_gap_samples = 6;

    // metrics
    double hypo_threshold_mgdl = 70.0;
    double hyper_threshold_mgdl = 180.0;
    int event_persistence_samples = 4;

    // simulator
    int sim_subjects = 10;
    int sim_days = 360;
    double cgm_noise_sd = 2.0;
    double cgm_noise_ar1 = 0.0;

    int jobs = 1;

    std::size_t ph_steps() const { return static_cast<std::size_t>(ph_min / 5); }

    void validate() const {
        if (ph_min != 30 && ph_min != 60)
            throw std::invalid_argument("config: ph_min must be 30 or 60");
        if (variant != "crnn" && variant != "crnn-no-cnn" && variant != "crnn-no-lstm" &&
            variant != "arx" && variant != "nnpg")
            throw std::invalid_argument("config: unknown variant '" + variant + "'");
        if (!(train_fraction > 0.0 && train_fraction < 1.0))
            throw std::invalid_argument("config: train_fraction must be in (0,1)");
        if (jobs < 1) throw std::invalid_argument("config: jobs must be >= 1");
        TrainConfig t = trainer();
        t.validate();
    }

    TrainConfig trainer() const {
        TrainConfig t;
        t.batch = batch_size;
        t.max_epochs = max_epochs;
        t.lr = learning_rate;
        t.rho = rho;
        t.eps = epsilon;
        t.dropout = dropout_rate;
        t.patience = patience;
        t.val_fraction = val_fraction;
        t.seed = seed;
        t.ph_steps = ph_steps();
        return t;
    }

    /// Every key in declaration order with its current value.
    std::vector<std::pair<std::string, std::string>> items() const {
        auto num = [](double v) {
            char buf[40];
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            return std::string(buf);
        };
        return {
            {"seed", std::to_string(seed)},
            {"ph_min", std::to_string(ph_min)},
            {"variant", variant},
            {"batch_size", std::to_string(batch_size)},
            {"max_epochs", std::to_string(max_epochs)},
            {"learning_rate", num(learning_rate)},
            {"rho", num(rho)},
            {"epsilon", num(epsilon)},
            {"dropout_rate", num(dropout_rate)},
            {"patience", std::to_string(patience)},
            {"val_fraction", num(val_fraction)},
            {"train_fraction", num(train_fraction)},
            {"train_days", std::to_string(train_days)},
            {"smooth_sigma_steps", num(smooth_sigma_steps)},
            {"spike_threshold_mgdl", num(spike_threshold_mgdl)},
            {"max_interp_gap_samples", std::to_string(max_interp_gap_samples)},
            {"hypo_threshold_mgdl", num(hypo_threshold_mgdl)},
            {"hyper_threshold_mgdl", num(hyper_threshold_mgdl)},
            {"event_persistence_samples", std::to_string(event_persistence_samples)},
            {"sim_subjects", std::to_string(sim_subjects)},
            {"sim_days", std::to_string(sim_days)},
            {"cgm_noise_sd", num(cgm_noise_sd)},
            {"cgm_noise_ar1", num(cgm_noise_ar1)},
            {"jobs", std::to_string(jobs)},
        };
    }

    void set(const std::string& key, const std::string& value) {
        auto as_u64 = [&] { return std::stoull(value); };
        auto as_int = [&] { return std::stoi(value); };
        auto as_dbl = [&] { return std::stod(value); };
        if (key == "seed") seed = as_u64();
        else if (key == "ph_min") ph_min = as_int();
        else if (key == "variant") variant = value;
        else if (key == "batch_size") batch_size = static_cast<std::size_t>(as_u64());
        else if (key == "max_epochs") max_epochs = as_int();
        else if (key == "learning_rate") learning_rate = as_dbl();
        else if (key == "rho") rho = as_dbl();
        else if (key == "epsilon") epsilon = as_dbl();
        else if (key == "dropout_rate") dropout_rate = as_dbl();
        else if (key == "patience") patience = as_int();
        else if (key == "val_fraction") val_fraction = as_dbl();
        else if (key == "train_fraction") train_fraction = as_dbl();
        else if (key == "train_days") train_days = as_int();
        else if (key == "smooth_sigma_steps") smooth_sigma_steps = as_dbl();
        else if (key == "spike_threshold_mgdl") spike_threshold_mgdl = as_dbl();
        else if (key == "max_interp_gap_samples") max_interp_gap_samples = as_int();
        else if (key == "hypo_threshold_mgdl") hypo_threshold_mgdl = as_dbl();
        else if (key == "hyper_threshold_mgdl") hyper_threshold_mgdl = as_dbl();
        else if (key == "event_persistence_samples") event_persistence_samples = as_int();
        else if (key == "sim_subjects") sim_subjects = as_int();
        else if (key == "sim_days") sim_days = as_int();
        else if (key == "cgm_noise_sd") cgm_noise_sd = as_dbl();
        else if (key == "cgm_noise_ar1") cgm_noise_ar1 = as_dbl();
        else if (key == "jobs") jobs = as_int();
        else throw std::invalid_argument("config: unknown key '" + key + "'");
    }

    /// Parses `key = value` lines; '#' starts a comment.
    void load(std::istream& in, const std::string& name) {
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::size_t eq = line.find('=');
            std::string key = detail::trim(eq == std::string::npos ? line : line.substr(0, eq));
            if (key.empty()) continue;
            if (eq == std::string::npos)
                throw std::runtime_error(name + ":" + std::to_string(lineno) +
                                         ": expected 'key = value'");
            std::string value = detail::trim(line.substr(eq + 1));
            try {
                set(key, value);
            } catch (const std::invalid_argument& e) {
                throw std::runtime_error(name + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
    }

    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config file " + path);
        load(in, path);
    }

    std::string resolved_text() const {
        std::ostringstream os;
        for (const auto& [k, v] : items()) os << k << " = " << v << "\n";
        return os.str();
    }

    void echo_to(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write " + path);
        out << resolved_text();
    }
};

} // namespace glucast
