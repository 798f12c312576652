// clover: experiment runner and interval calibration from the command line.
//
//   clover bench --config configs/desk.cfg --out report.json
//   clover simulate --setting heterosc --p 1 --methods locart,loforest,reg-split --alpha 0.1 --seed 42 --out report.json
//   clover calibrate --train train.csv --cal cal.csv --method loforest --model-out m.json
//   clover predict --model m.json --in test.csv --out intervals.csv

#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "clover/clover.hpp"

namespace {

std::string format_for(const std::string& path, const std::string& requested) {
    if (!requested.empty()) return requested;
    return path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0 ? "csv" : "json";
}

void print_summary(const clover::ExperimentReport& report) {
    std::cout << "method        amc      smis       ccad     width    n_inf\n";
    for (const auto& a : report.aggregates) {
        std::printf("%-12s %7.4f %9.4f %10s %9.4f %8zu\n", a.method.c_str(), a.amc_mean, a.smis_mean,
                    a.ccad_mean ? std::to_string(*a.ccad_mean).substr(0, 8).c_str() : "-", a.width_mean,
                    a.n_infinite_total);
    }
}

void emit(const clover::ExperimentReport& report, const std::string& out, const std::string& format, bool canonical) {
    if (!out.empty()) clover::write_report(report, out, format_for(out, format), canonical);
    print_summary(report);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Locally adaptive conformal prediction intervals"};
    app.require_subcommand(1);

    // bench
    auto* bench = app.add_subcommand("bench", "run an experiment described by a key = value config file");
    std::string config_path, bench_out, bench_format;
    bool bench_canonical = false;
    unsigned bench_threads = 0;
    bench->add_option("--config", config_path, "config file")->required()->check(CLI::ExistingFile);
    bench->add_option("--out", bench_out, "report path (.json or .csv)");
    bench->add_option("--format", bench_format, "json or csv (default: from extension)");
    bench->add_flag("--canonical", bench_canonical, "zero wall-time fields");
    bench->add_option("--threads", bench_threads, "worker threads (0 = CLOVER_THREADS or all cores)");

    // simulate
    auto* sim = app.add_subcommand("simulate", "run a simulated benchmark from command-line options");
    clover::ExperimentConfig sc;
    std::string methods = "locart,loforest,reg-split", sim_out, sim_format;
    bool sim_canonical = false;
    sim->add_option("--setting", sc.setting, "homosc, heterosc, asym, asym2, t_residuals, noncorr_heterosc, "
                                             "laplace_beta, mixture_constvar")
        ->capture_default_str();
    sim->add_option("--p", sc.p, "relevant features")->capture_default_str();
    sim->add_option("--d", sc.d, "total features")->capture_default_str();
    sim->add_option("--methods", methods, "comma-separated method keys")->capture_default_str();
    sim->add_option("--alpha", sc.alpha, "miscoverage level")->capture_default_str();
    sim->add_option("--seed", sc.seed)->capture_default_str();
    sim->add_option("--replications", sc.replications)->capture_default_str();
    sim->add_option("--n-train", sc.n_train)->capture_default_str();
    sim->add_option("--n-cal", sc.n_cal)->capture_default_str();
    sim->add_option("--n-test", sc.n_test)->capture_default_str();
    sim->add_option("--b-y", sc.b_y, "conditional draws per test point for CCAD (0 skips)")->capture_default_str();
    sim->add_option("--base-model", sc.base_model, "forest or oracle")->capture_default_str();
    sim->add_option("--base-trees", sc.base_trees)->capture_default_str();
    sim->add_option("--loforest-trees", sc.loforest_trees)->capture_default_str();
    sim->add_option("--min-samples-leaf", sc.min_samples_leaf, "calibration trees")->capture_default_str();
    sim->add_option("--bins", sc.mondrian_bins, "Mondrian bins")->capture_default_str();
    sim->add_flag("--augment-mad", sc.augment_mad, "add the MAD estimate to A-variants");
    sim->add_flag("--inner-split", sc.inner_split, "grow and populate partitions on disjoint halves");
    sim->add_option("--threads", sc.threads)->capture_default_str();
    sim->add_option("--out", sim_out, "report path (.json or .csv)");
    sim->add_option("--format", sim_format, "json or csv (default: from extension)");
    sim->add_flag("--canonical", sim_canonical, "zero wall-time fields");

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "fit a base forest and a calibrator from CSV files");
    clover::CalibrateOptions co;
    std::string train_path, cal_path, target, model_out;
    cal->add_option("--train", train_path)->required()->check(CLI::ExistingFile);
    cal->add_option("--cal", cal_path)->required()->check(CLI::ExistingFile);
    cal->add_option("--target", target, "target column (default: last column)");
    cal->add_option("--method", co.method)->capture_default_str();
    cal->add_option("--alpha", co.alpha)->capture_default_str();
    cal->add_option("--seed", co.seed)->capture_default_str();
    cal->add_option("--base-trees", co.base_trees)->capture_default_str();
    cal->add_option("--loforest-trees", co.loforest_trees)->capture_default_str();
    cal->add_option("--min-samples-split", co.min_samples_split)->capture_default_str();
    cal->add_option("--min-samples-leaf", co.min_samples_leaf)->capture_default_str();
    cal->add_option("--bins", co.mondrian_bins, "Mondrian bins")->capture_default_str();
    cal->add_flag("--augment-mad", co.augment_mad, "add the MAD estimate to A-variants");
    cal->add_option("--threads", co.threads);
    cal->add_option("--model-out", model_out)->required();

    // predict
    auto* pred = app.add_subcommand("predict", "write intervals for the rows of a CSV file");
    std::string model_path, in_path, out_path;
    pred->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
    pred->add_option("--in", in_path)->required()->check(CLI::ExistingFile);
    pred->add_option("--out", out_path)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*bench) {
            auto config = clover::load_config(config_path);
            if (bench_threads) config.threads = bench_threads;
            emit(clover::run_experiment(config), bench_out, bench_format, bench_canonical);
        } else if (*sim) {
            sc.methods = clover::detail::split_list(methods);
            emit(clover::run_experiment(sc), sim_out, sim_format, sim_canonical);
        } else if (*cal) {
            const auto train = clover::load_csv(train_path, target);
            const auto calib = clover::load_csv(cal_path, target.empty() ? train.target_name : target);
            if (calib.feature_names != train.feature_names)
                throw clover::Error("train and calibration files have different feature columns");
            const auto bundle = clover::calibrate(train, calib, co);
            clover::save_model(bundle, model_out);
            std::cout << "wrote " << model_out << " (" << co.method << ", " << calib.size() << " calibration rows)\n";
        } else if (*pred) {
            const auto bundle = clover::load_model(model_path);
            const auto X = clover::load_feature_csv(in_path, bundle.feature_names);
            const auto base = bundle.base_models();
            const auto intervals = clover::predict_intervals(bundle.calibrator, base, X);
            std::string text = "lower,upper,center,infinite\n";
            for (const auto& c : intervals) {
                if (c.infinite()) {
                    text += "-inf,inf,";
                } else {
                    clover::detail::append_double(text, c.lower);
                    text += ',';
                    clover::detail::append_double(text, c.upper);
                    text += ',';
                }
                clover::detail::append_double(text, c.center);
                text += c.infinite() ? ",1\n" : ",0\n";
            }
            clover::write_text_file(out_path, text);
            std::cout << "wrote " << intervals.size() << " intervals to " << out_path << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
