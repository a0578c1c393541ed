// glucast: simulate synthetic T1D cohorts, preprocess CGM records, train
// glucose forecasters (CRNN, ablations, ARX, NNPG), and evaluate them with
// the clinical metric suite.

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "glucast/glucast.hpp"

namespace fs = std::filesystem;
using namespace glucast;

namespace {

void ensure_out_dir(const std::string& dir, bool force) {
    if (fs::exists(dir) && !fs::is_empty(dir) && !force)
        throw std::runtime_error("output directory '" + dir +
                                 "' exists and is not empty (use --force to overwrite)");
    fs::create_directories(dir);
}

// GLUCAST_VERBOSE=1 prints every pipeline warning instead of the first few.
bool verbose() {
    const char* v = std::getenv("GLUCAST_VERBOSE");
    return v && v[0] == '1';
}

void print_warnings(const std::vector<std::string>& warnings) {
    const std::size_t cap = verbose() ? warnings.size() : 10;
    std::size_t shown = 0;
    for (const auto& w : warnings) {
        if (++shown > cap) {
            std::cerr << "  ... " << warnings.size() - cap << " more warnings\n";
            break;
        }
        std::cerr << "  warning: " << w << "\n";
    }
}

int cmd_simulate(const RunConfig& cfg, const std::string& out_dir, bool force) {
    ensure_out_dir(out_dir, force);
    if (cfg.sim_subjects < 1) throw CLI::ValidationError("--subjects must be >= 1");
    DayProtocol proto;
    auto paths = generate_cohort(cfg.sim_subjects, cfg.sim_days, cfg.seed, out_dir, proto,
                                 cfg.cgm_noise_sd, cfg.cgm_noise_ar1);
    cfg.echo_to((fs::path(out_dir) / "config_resolved.txt").string());
    std::cout << "wrote " << paths.size() << " subject files + manifest.json to " << out_dir
              << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& data, const std::string& out_dir,
              bool force) {
    ensure_out_dir(out_dir, force);
    std::vector<std::string> warnings;
    auto records = parse_records_csv(data);
    AlignedSeries series = prepare_series(records, cfg, &warnings);
    PreparedSubject ps = prepare_subject(std::move(series), cfg, &warnings);
    print_warnings(warnings);
    std::cout << "training " << cfg.variant << " (PH " << cfg.ph_min << " min) on "
              << ps.train.size() << " windows, validating on " << ps.validation.size() << "\n";

    TrainedVariant tv = train_variant(ps, cfg, fs::path(data).stem().string());
    const std::string model_path = (fs::path(out_dir) / "model.gmw").string();
    if (tv.arx) {
        save_arx(*tv.arx, ps.stats, model_path);
    } else {
        save_model(*tv.model, model_path);
        write_history_csv((fs::path(out_dir) / "history.csv").string(), tv.history);
    }
    cfg.echo_to((fs::path(out_dir) / "config_resolved.txt").string());
    if (!tv.ok) {
        std::cerr << "error: " << tv.error << "\n";
        return 1;
    }
    if (tv.model) {
        const auto& ep = tv.history.epochs;
        std::cout << "trained " << ep.size() << " epochs, best validation MAE "
                  << (tv.history.best_epoch >= 0
                          ? ep[static_cast<std::size_t>(tv.history.best_epoch)].val_mae
                          : 0.0)
                  << " mg/dL\n";
    }
    std::cout << "model written to " << model_path << "\n";
    return 0;
}

int cmd_evaluate(const RunConfig& cfg_in, const std::string& model_path, const std::string& data,
                 const std::string& out_dir, bool force, bool svg, int ph_flag) {
    ensure_out_dir(out_dir, force);
    RunConfig cfg = cfg_in;

    TrainedVariant tv;
    nlohmann::json meta = peek_model_meta(model_path);
    const std::string kind = meta.value("model", "");
    NormStats stats;
    bool have_stats = false;
    if (kind == "network") {
        tv.model = load_model(model_path);
        cfg.ph_min = static_cast<int>(tv.model->spec.ph_steps * 5);
        stats = tv.model->stats;
        have_stats = true;
        cfg.variant = std::string(to_string(tv.model->spec.kind));
        if (tv.model->spec.kind == ModelKind::Crnn && tv.model->spec.ablation != Ablation::Full)
            cfg.variant += tv.model->spec.ablation == Ablation::NoCnn ? "-no-cnn" : "-no-lstm";
    } else if (kind == "arx") {
        tv.arx = load_arx(model_path);
        cfg.ph_min = static_cast<int>(tv.arx->ph_steps * 5);
        cfg.variant = "arx";
    } else {
        throw std::runtime_error(model_path + ": unknown model kind '" + kind + "'");
    }
    if (ph_flag != 0 && ph_flag != cfg.ph_min)
        throw std::runtime_error("requested PH " + std::to_string(ph_flag) +
                                 " does not match the model's PH " + std::to_string(cfg.ph_min));

    std::vector<std::string> warnings;
    auto records = parse_records_csv(data);
    AlignedSeries series = prepare_series(records, cfg, &warnings);
    PreparedSubject ps =
        prepare_subject(std::move(series), cfg, &warnings, have_stats ? &stats : nullptr);
    print_warnings(warnings);

    auto level_pred = predict_levels(tv, ps);
    ForecastTrace trace = build_trace(ps, level_pred, cfg.ph_steps());
    const std::string subject = fs::path(data).stem().string();
    MetricsRow row = score_trace(trace, cfg, subject, cfg.variant);

    write_trace_csv((fs::path(out_dir) / "trace.csv").string(), trace);
    std::ofstream rep(fs::path(out_dir) / "metrics.csv");
    rep << metrics_csv({row});
    rep.close();
    cfg.echo_to((fs::path(out_dir) / "config_resolved.txt").string());
    if (svg)
        write_day_overlay_svg((fs::path(out_dir) / "day_overlay.svg").string(), trace,
                              subject + " " + cfg.variant + " PH=" + std::to_string(cfg.ph_min));

    std::size_t masked = 0;
    for (std::size_t i = 0; i < trace.size(); ++i)
        if (std::isfinite(trace.pred[i]) && !trace.mask[i]) ++masked;
    std::printf("%s  PH %d min  rmse %.2f mg/dL  mard %.2f%%  mcc_hyper %.2f  mcc_hypo %.2f  "
                "ph_eff %.1f min%s\n",
                cfg.variant.c_str(), cfg.ph_min, row.rmse, row.mard, row.mcc_hyper, row.mcc_hypo,
                row.ph_eff_min, row.ph_eff_degenerate ? " (degenerate)" : "");
    std::printf("evaluated %zu instants, skipped %zu masked predictions\n", row.eval_count,
                masked);
    return 0;
}

int cmd_compare(const RunConfig& cfg_in, const std::string& cohort_dir,
                const std::string& methods_csv, const std::string& phs_csv,
                const std::string& out_dir, bool force) {
    ensure_out_dir(out_dir, force);

    std::vector<std::string> methods;
    for (std::size_t at = 0; at < methods_csv.size();) {
        std::size_t comma = methods_csv.find(',', at);
        if (comma == std::string::npos) comma = methods_csv.size();
        methods.push_back(methods_csv.substr(at, comma - at));
        at = comma + 1;
    }
    std::vector<int> phs;
    for (std::size_t at = 0; at < phs_csv.size();) {
        std::size_t comma = phs_csv.find(',', at);
        if (comma == std::string::npos) comma = phs_csv.size();
        phs.push_back(std::stoi(phs_csv.substr(at, comma - at)));
        at = comma + 1;
    }

    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(cohort_dir))
        if (e.path().extension() == ".csv") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no subject CSVs in " + cohort_dir);

    struct Cell {
        std::string file, subject, method;
        int ph;
    };
    std::vector<Cell> cells;
    for (const auto& f : files)
        for (const auto& m : methods)
            for (int ph : phs) cells.push_back({f, fs::path(f).stem().string(), m, ph});

    std::vector<MetricsRow> rows;
    std::vector<std::string> failures;
    std::mutex mu;
    std::atomic<std::size_t> next{0};

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            const Cell& cell = cells[i];
            RunConfig cfg = cfg_in;
            cfg.variant = cell.method;
            cfg.ph_min = cell.ph;
            try {
                cfg.validate();
                auto records = parse_records_csv(cell.file);
                AlignedSeries series = prepare_series(records, cfg);
                PreparedSubject ps = prepare_subject(std::move(series), cfg);
                CellResult res = run_cell(ps, cfg, cell.subject);

                const fs::path cell_dir = fs::path(out_dir) / cell.subject /
                                          (cell.method + "_ph" + std::to_string(cell.ph));
                fs::create_directories(cell_dir);
                if (res.model) {
                    save_model(*res.model, (cell_dir / "model.gmw").string());
                    write_history_csv((cell_dir / "history.csv").string(), res.history);
                }
                if (res.arx) save_arx(*res.arx, ps.stats, (cell_dir / "model.gmw").string());
                write_trace_csv((cell_dir / "trace.csv").string(), res.trace);

                std::lock_guard<std::mutex> lock(mu);
                if (!res.trained_ok)
                    failures.push_back(cell.subject + "/" + cell.method + "/ph" +
                                       std::to_string(cell.ph) + ": " + res.error);
                rows.push_back(res.row);
                std::printf("  %-12s %-14s ph%-3d rmse %6.2f  mard %5.2f  ph_eff %4.1f\n",
                            cell.subject.c_str(), cell.method.c_str(), cell.ph, res.row.rmse,
                            res.row.mard, res.row.ph_eff_min);
                std::fflush(stdout);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(mu);
                failures.push_back(cell.subject + "/" + cell.method + "/ph" +
                                   std::to_string(cell.ph) + ": " + e.what());
                std::fprintf(stderr, "  %s %s ph%d FAILED: %s\n", cell.subject.c_str(),
                             cell.method.c_str(), cell.ph, e.what());
            }
        }
    };

    const int jobs = std::max(1, cfg_in.jobs);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    std::sort(rows.begin(), rows.end(), [](const MetricsRow& a, const MetricsRow& b) {
        return std::tie(a.subject, a.method, a.ph_min) < std::tie(b.subject, b.method, b.ph_min);
    });
    std::ofstream sum(fs::path(out_dir) / "summary.csv");
    sum << metrics_csv(rows);
    sum.close();
    const std::string table = summary_table_text(summarize(rows));
    std::ofstream tab(fs::path(out_dir) / "summary.txt");
    tab << table;
    tab.close();
    cfg_in.echo_to((fs::path(out_dir) / "config_resolved.txt").string());
    std::cout << "\n" << table;

    if (!failures.empty()) {
        std::ofstream fl(fs::path(out_dir) / "failures.txt");
        for (const auto& f : failures) fl << f << "\n";
        std::cerr << failures.size() << " cell(s) failed; see failures.txt\n";
        return 1;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"glucast: glucose forecasting engine (CRNN + baselines + clinical metrics)"};
    app.require_subcommand(1);

    std::string config_path, out_dir, data_path, model_path, cohort_dir;
    std::string methods = "crnn,arx";
    std::string phs = "30";
    bool force = false, svg = false;
    int subjects_flag = -1, days_flag = -1, ph_flag = 0, jobs_flag = 0;
    long long seed_flag = -1;
    std::string variant_flag;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key = value config file");
        cmd->add_option("--seed", seed_flag, "override the config seed");
        cmd->add_option("--out", out_dir, "output directory")->required();
        cmd->add_flag("--force", force, "allow writing into a non-empty output directory");
    };

    CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic T1D cohort");
    add_common(sim);
    sim->add_option("--subjects", subjects_flag, "number of subjects");
    sim->add_option("--days", days_flag, "days of data per subject");

    CLI::App* tr = app.add_subcommand("train", "train one forecaster on one subject CSV");
    add_common(tr);
    tr->add_option("--data", data_path, "subject records CSV")->required();
    tr->add_option("--ph", ph_flag, "prediction horizon in minutes (30 or 60)");
    tr->add_option("--variant", variant_flag,
                   "crnn | crnn-no-cnn | crnn-no-lstm | arx | nnpg");

    CLI::App* ev = app.add_subcommand("evaluate", "evaluate a trained model on a subject CSV");
    add_common(ev);
    ev->add_option("--model", model_path, "model file")->required();
    ev->add_option("--data", data_path, "subject records CSV")->required();
    ev->add_option("--ph", ph_flag, "expected prediction horizon (must match the model)");
    ev->add_flag("--svg", svg, "emit a one-day overlay plot");

    CLI::App* cmp = app.add_subcommand("compare", "train/evaluate a cohort across methods");
    add_common(cmp);
    cmp->add_option("--cohort", cohort_dir, "directory of subject CSVs")->required();
    cmp->add_option("--methods", methods, "comma-separated method list");
    cmp->add_option("--ph", phs, "comma-separated PH list (minutes)");
    cmp->add_option("--jobs", jobs_flag, "parallel cells (default from config)");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg.load_file(config_path);
        if (seed_flag >= 0) cfg.seed = static_cast<std::uint64_t>(seed_flag);
        if (subjects_flag >= 0) cfg.sim_subjects = subjects_flag;
        if (days_flag >= 0) cfg.sim_days = days_flag;
        if (!variant_flag.empty()) cfg.variant = variant_flag;
        if (jobs_flag > 0) cfg.jobs = jobs_flag;

        if (sim->parsed()) {
            cfg.validate();
            return cmd_simulate(cfg, out_dir, force);
        }
        if (tr->parsed()) {
            if (ph_flag != 0) cfg.ph_min = ph_flag;
            cfg.validate();
            return cmd_train(cfg, data_path, out_dir, force);
        }
        if (ev->parsed()) {
            return cmd_evaluate(cfg, model_path, data_path, out_dir, force, svg, ph_flag);
        }
        if (cmp->parsed()) {
            return cmd_compare(cfg, cohort_dir, methods, phs, out_dir, force);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
