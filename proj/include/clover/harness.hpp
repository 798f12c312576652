#pragma once

/// Experiment runner: configuration, replication loop, method fitting and
/// evaluation, report serialisation, and the model bundle used by the CLI.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "clover/conformal.hpp"
#include "clover/data.hpp"
#include "clover/forest.hpp"
#include "clover/metrics.hpp"
#include "clover/parallel.hpp"
#include "clover/serialize.hpp"
#include "clover/simgen.hpp"

namespace clover {

inline const std::vector<std::string>& method_keys() {
    static const std::vector<std::string> keys = {"reg-split", "w-reg-split", "mondrian",   "locart",
                                                  "a-locart",  "loforest",    "a-loforest", "w-loforest"};
    return keys;
}

inline bool needs_mad(const std::string& method, bool augment_mad) {
    if (method == "w-reg-split" || method == "w-loforest") return true;
    return augment_mad && (method == "a-locart" || method == "a-loforest");
}

struct ExperimentConfig {
    // Data source: a simulated setting, or a CSV file when `dataset` is set.
    std::string setting = "heterosc";
    std::size_t p = 1;
    std::size_t d = 20;
    std::string dataset;
    std::string target;
    double train_fraction = 0.4;
    double cal_fraction = 0.4;
    double test_fraction = 0.2;

    std::size_t n_train = 2000;
    std::size_t n_cal = 2000;
    std::size_t n_test = 2000;
    double alpha = 0.1;
    std::size_t replications = 20;
    std::vector<std::string> methods = {"reg-split", "locart", "loforest"};
    std::uint64_t seed = 42;

    std::string base_model = "forest";  // "forest", or "oracle" (true conditional mean, simulated data only)
    std::size_t base_trees = 100;
    std::size_t min_samples_split = 100;
    std::size_t min_samples_leaf = 25;  // calibration trees only
    std::size_t loforest_trees = 100;
    std::size_t mondrian_bins = 30;
    std::size_t b_y = 1000;  // 0 skips CCAD
    bool augment_mad = false;
    bool inner_split = false;
    double inner_fraction = 0.5;
    bool post_prune = true;
    unsigned threads = 0;  // 0 = CLOVER_THREADS or hardware concurrency

    bool simulated() const { return dataset.empty(); }

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0)) throw Error("config: alpha must lie in (0, 1)");
        if (replications < 1) throw Error("config: replications must be at least 1");
        if (methods.empty()) throw Error("config: no methods requested");
        for (const auto& m : methods)
            if (std::find(method_keys().begin(), method_keys().end(), m) == method_keys().end())
                throw Error("unknown method key '" + m + "'");
        if (simulated()) {
            SimSetting::from_key(setting, p, d);
            if (n_train < 1 || n_cal < 1 || n_test < 1) throw Error("config: sample sizes must be positive");
        }
        if (base_model != "forest" && base_model != "oracle") throw Error("config: base_model must be forest or oracle");
        if (base_model == "oracle" && !simulated()) throw Error("config: oracle base model needs a simulated setting");
        if (base_trees < 1 || loforest_trees < 1 || mondrian_bins < 1) throw Error("config: counts must be positive");
    }

    SimSetting sim_setting() const { return SimSetting::from_key(setting, p, d); }
};

// ---------------------------------------------------------------------------
// Flat key = value config files

namespace detail {

inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw Error("config: expected a boolean, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    for (auto cell : split_commas(v))
        if (!cell.empty()) out.emplace_back(cell);
    return out;
}

}  // namespace detail

/// Applies one key/value pair; unknown keys are an error.
inline void apply_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
    auto to_size = [&](const std::string& v) {
        std::size_t pos = 0;
        const auto n = std::stoull(v, &pos);
        if (pos != v.size()) throw Error("config: bad integer for '" + key + "'");
        return static_cast<std::size_t>(n);
    };
    auto to_double = [&](const std::string& v) { return parse_cell(v, 0, key); };
    if (key == "preset") {
        if (value == "desk") {
            c.n_train = c.n_cal = c.n_test = 2000;
            c.replications = 20;
        } else if (value == "full") {
            c.n_train = c.n_cal = 10000;
            c.n_test = 5000;
            c.replications = 100;
        } else {
            throw Error("config: unknown preset '" + value + "'");
        }
    } else if (key == "setting") c.setting = value;
    else if (key == "p") c.p = to_size(value);
    else if (key == "d") c.d = to_size(value);
    else if (key == "dataset") c.dataset = value;
    else if (key == "target") c.target = value;
    else if (key == "train_fraction") c.train_fraction = to_double(value);
    else if (key == "cal_fraction") c.cal_fraction = to_double(value);
    else if (key == "test_fraction") c.test_fraction = to_double(value);
    else if (key == "n_train") c.n_train = to_size(value);
    else if (key == "n_cal") c.n_cal = to_size(value);
    else if (key == "n_test") c.n_test = to_size(value);
    else if (key == "alpha") c.alpha = to_double(value);
    else if (key == "replications") c.replications = to_size(value);
    else if (key == "methods") c.methods = detail::split_list(value);
    else if (key == "seed") c.seed = to_size(value);
    else if (key == "base_model") c.base_model = value;
    else if (key == "base_trees") c.base_trees = to_size(value);
    else if (key == "min_samples_split") c.min_samples_split = to_size(value);
    else if (key == "min_samples_leaf") c.min_samples_leaf = to_size(value);
    else if (key == "loforest_trees") c.loforest_trees = to_size(value);
    else if (key == "mondrian_bins") c.mondrian_bins = to_size(value);
    else if (key == "b_y") c.b_y = to_size(value);
    else if (key == "augment_mad") c.augment_mad = detail::parse_bool(value);
    else if (key == "inner_split") c.inner_split = detail::parse_bool(value);
    else if (key == "inner_fraction") c.inner_fraction = to_double(value);
    else if (key == "post_prune") c.post_prune = detail::parse_bool(value);
    else if (key == "threads") c.threads = static_cast<unsigned>(to_size(value));
    else throw Error("config: unknown key '" + key + "'");
}

/// Lines of `key = value`; '#' starts a comment.
inline ExperimentConfig parse_config(std::istream& in, ExperimentConfig base = {}) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto t = detail::trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string_view::npos) throw Error("config line " + std::to_string(lineno) + ": expected key = value");
        try {
            apply_config_value(base, std::string(detail::trim(t.substr(0, eq))), std::string(detail::trim(t.substr(eq + 1))));
        } catch (const std::logic_error&) {
            throw Error("config line " + std::to_string(lineno) + ": bad value");
        }
    }
    base.validate();
    return base;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    return parse_config(in);
}

inline json to_json(const ExperimentConfig& c) {
    json j = {{"alpha", c.alpha},
              {"replications", c.replications},
              {"methods", c.methods},
              {"seed", c.seed},
              {"base_model", c.base_model},
              {"base_trees", c.base_trees},
              {"min_samples_split", c.min_samples_split},
              {"min_samples_leaf", c.min_samples_leaf},
              {"loforest_trees", c.loforest_trees},
              {"mondrian_bins", c.mondrian_bins},
              {"b_y", c.b_y},
              {"augment_mad", c.augment_mad},
              {"inner_split", c.inner_split},
              {"inner_fraction", c.inner_fraction},
              {"post_prune", c.post_prune}};
    if (c.simulated()) {
        j["setting"] = c.setting;
        j["p"] = c.p;
        j["d"] = c.d;
        j["n_train"] = c.n_train;
        j["n_cal"] = c.n_cal;
        j["n_test"] = c.n_test;
    } else {
        j["dataset"] = c.dataset;
        j["target"] = c.target;
        j["fractions"] = {c.train_fraction, c.cal_fraction, c.test_fraction};
    }
    return j;
}

// ---------------------------------------------------------------------------
// Reports

struct ReplicationRow {
    std::string method;
    std::size_t replication = 0;
    double amc = 0.0;
    double smis = 0.0;  // over finite intervals
    std::optional<double> ccad;
    double mean_width = 0.0;  // over finite intervals
    std::size_t n_infinite = 0;
    std::size_t cells = 0;  // leaves, bins or 1; for forests the mean leaf count rounded down
    double fit_seconds = 0.0;
    double predict_seconds = 0.0;
};

struct Aggregate {
    std::string method;
    std::size_t replications = 0;
    double amc_mean = 0.0, amc_2se = 0.0;
    double smis_mean = 0.0, smis_2se = 0.0;
    std::optional<double> ccad_mean, ccad_2se;
    double width_mean = 0.0, width_2se = 0.0;
    std::size_t n_infinite_total = 0;
};

struct ExperimentReport {
    ExperimentConfig config;
    std::vector<ReplicationRow> rows;  // ordered by (replication, method order in config)
    std::vector<Aggregate> aggregates;

    std::vector<const ReplicationRow*> rows_for(const std::string& method) const {
        std::vector<const ReplicationRow*> out;
        for (const auto& r : rows)
            if (r.method == method) out.push_back(&r);
        return out;
    }

    const Aggregate& aggregate(const std::string& method) const {
        for (const auto& a : aggregates)
            if (a.method == method) return a;
        throw Error("no aggregate for method '" + method + "'");
    }
};

/// Mean and two standard errors (sample sd / sqrt(R)), summed in replication order.
inline std::pair<double, double> mean_and_2se(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    double sum = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    return {mean, 2.0 * sd / std::sqrt(static_cast<double>(v.size()))};
}

inline Aggregate aggregate_rows(const std::string& method, const std::vector<const ReplicationRow*>& rows) {
    Aggregate a;
    a.method = method;
    a.replications = rows.size();
    std::vector<double> amc, smis_v, width, ccad_v;
    for (const auto* r : rows) {
        amc.push_back(r->amc);
        smis_v.push_back(r->smis);
        width.push_back(r->mean_width);
        if (r->ccad) ccad_v.push_back(*r->ccad);
        a.n_infinite_total += r->n_infinite;
    }
    std::tie(a.amc_mean, a.amc_2se) = mean_and_2se(amc);
    std::tie(a.smis_mean, a.smis_2se) = mean_and_2se(smis_v);
    std::tie(a.width_mean, a.width_2se) = mean_and_2se(width);
    if (!ccad_v.empty() && ccad_v.size() == rows.size()) {
        const auto [m, se] = mean_and_2se(ccad_v);
        a.ccad_mean = m;
        a.ccad_2se = se;
    }
    return a;
}

inline constexpr const char* kReportSchema = "clover.report/1";

/// With `canonical`, wall-time fields are zeroed so identical configs give identical bytes.
inline json to_json(const ExperimentReport& r, bool canonical = false) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json rows = json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"method", row.method},
                        {"replication", row.replication},
                        {"amc", row.amc},
                        {"smis", row.smis},
                        {"ccad", opt(row.ccad)},
                        {"mean_width", row.mean_width},
                        {"n_infinite", row.n_infinite},
                        {"cells", row.cells},
                        {"fit_seconds", canonical ? 0.0 : row.fit_seconds},
                        {"predict_seconds", canonical ? 0.0 : row.predict_seconds}});
    json aggs = json::array();
    for (const auto& a : r.aggregates)
        aggs.push_back({{"method", a.method},
                        {"replications", a.replications},
                        {"amc_mean", a.amc_mean},
                        {"amc_2se", a.amc_2se},
                        {"smis_mean", a.smis_mean},
                        {"smis_2se", a.smis_2se},
                        {"ccad_mean", opt(a.ccad_mean)},
                        {"ccad_2se", opt(a.ccad_2se)},
                        {"width_mean", a.width_mean},
                        {"width_2se", a.width_2se},
                        {"n_infinite_total", a.n_infinite_total}});
    return {{"schema", kReportSchema}, {"canonical", canonical}, {"config", to_json(r.config)}, {"rows", rows},
            {"aggregates", aggs}};
}

inline std::string report_csv(const ExperimentReport& r, bool canonical = false) {
    std::string out = "method,replication,amc,smis,ccad,mean_width,n_infinite,cells,fit_seconds,predict_seconds\n";
    auto num = [&](double v) { detail::append_double(out, v); };
    for (const auto& row : r.rows) {
        out += row.method + "," + std::to_string(row.replication) + ",";
        num(row.amc);
        out += ",";
        num(row.smis);
        out += ",";
        if (row.ccad) num(*row.ccad);
        out += ",";
        num(row.mean_width);
        out += "," + std::to_string(row.n_infinite) + "," + std::to_string(row.cells) + ",";
        num(canonical ? 0.0 : row.fit_seconds);
        out += ",";
        num(canonical ? 0.0 : row.predict_seconds);
        out += "\n";
    }
    return out;
}

inline void write_report(const ExperimentReport& r, const std::string& path, const std::string& format,
                         bool canonical = false) {
    if (format == "json")
        write_text_file(path, to_json(r, canonical).dump(2) + "\n");
    else if (format == "csv")
        write_text_file(path, report_csv(r, canonical));
    else
        throw Error("unknown report format '" + format + "'");
}

// ---------------------------------------------------------------------------
// Running

/// Per-method random stream, keyed by the method name so results do not depend
/// on which other methods are requested.
inline std::uint64_t method_stream_id(const std::string& method) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : method) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Data and base predictors shared by all methods within one replication.
struct ReplicationContext {
    Dataset train, cal, test;
    std::shared_ptr<const RandomForestRegressor> base_forest;
    std::shared_ptr<const RandomForestRegressor> mad_forest;
    BaseModels base;  // closures share ownership of the forests
};

struct FittedMethod {
    CalibratorModel model;
    std::size_t cells = 1;
};

inline FittedMethod fit_method(const std::string& method, const ExperimentConfig& c, const ReplicationContext& ctx,
                               RngStream rng, unsigned threads) {
    const auto& X = ctx.cal.features;
    const auto& y = ctx.cal.targets;
    const InnerSplit inner{c.inner_split, c.inner_fraction};
    std::vector<Augmentor> aug{Augmentor::forest_variance};
    if (c.augment_mad) aug.push_back(Augmentor::mad);
    TreeParams tp;
    tp.min_samples_split = c.min_samples_split;
    tp.min_samples_leaf = c.min_samples_leaf;

    if (method == "reg-split") return {fit_reg_split(ctx.base, X, y, c.alpha), 1};
    if (method == "w-reg-split") return {fit_weighted_reg_split(ctx.base, X, y, c.alpha), 1};
    if (method == "mondrian") {
        auto m = fit_mondrian(ctx.base, X, y, c.alpha, c.mondrian_bins);
        const auto cells = m.edges.size();
        return {std::move(m), cells};
    }
    if (method == "locart" || method == "a-locart") {
        LocartParams lp;
        lp.tree = tp;
        lp.post_prune = c.post_prune;
        lp.inner = inner;
        if (method == "a-locart") lp.augmentation = aug;
        auto m = fit_locart(ctx.base, X, y, c.alpha, lp, rng);
        const auto cells = m.tree.leaf_count();
        return {std::move(m), cells};
    }
    LoforestParams fp;
    fp.n_trees = c.loforest_trees;
    fp.tree = tp;
    fp.inner = inner;
    if (method == "a-loforest") fp.augmentation = aug;
    if (method == "w-loforest") fp.score = ScoreKind::weighted_residual;
    if (method != "loforest" && method != "a-loforest" && method != "w-loforest")
        throw Error("unknown method key '" + method + "'");
    auto m = fit_loforest(ctx.base, X, y, c.alpha, fp, rng, threads);
    std::size_t leaves = 0;
    for (const auto& t : m.trees) leaves += t.leaf_count();
    const std::size_t cells = leaves / m.trees.size();
    return {std::move(m), cells};
}

/// Draws or splits the data and fits the base predictors for replication `r`.
inline ReplicationContext prepare_replication(const ExperimentConfig& c, std::size_t r, unsigned threads,
                                              const Dataset* csv_data) {
    const RngStream rep(c.seed, r);
    ReplicationContext ctx;
    if (c.simulated()) {
        const auto setting = c.sim_setting();
        RngStream data_rng = rep.derive(1);
        auto all = sample(setting, c.n_train + c.n_cal + c.n_test, data_rng);
        std::vector<std::size_t> tr(c.n_train), ca(c.n_cal), te(c.n_test);
        std::iota(tr.begin(), tr.end(), std::size_t{0});
        std::iota(ca.begin(), ca.end(), c.n_train);
        std::iota(te.begin(), te.end(), c.n_train + c.n_cal);
        ctx.train = all.subset(tr);
        ctx.cal = all.subset(ca);
        ctx.test = all.subset(te);
    } else {
        RngStream split_rng = rep.derive(1);
        const auto s = split_indices(csv_data->size(), {c.train_fraction, c.cal_fraction, c.test_fraction}, {},
                                     split_rng);
        ctx.train = csv_data->subset(s.train);
        ctx.cal = csv_data->subset(s.cal);
        ctx.test = csv_data->subset(s.test);
    }

    if (c.base_model == "oracle") {
        const auto setting = c.sim_setting();
        ctx.base.mean = [setting](std::span<const double> x) { return setting.conditional_mean(x); };
        ctx.base.variance = [](std::span<const double>) { return 0.0; };
    } else {
        ForestParams fp;
        fp.n_estimators = c.base_trees;
        auto f = std::make_shared<const RandomForestRegressor>(
            fit_forest(ctx.train.features, ctx.train.targets, fp, rep.derive(2), threads));
        ctx.base_forest = f;
        ctx.base.mean = [f](std::span<const double> x) { return f->predict(x); };
        ctx.base.variance = [f](std::span<const double> x) { return f->prediction_variance(x); };
    }

    const bool want_mad = std::any_of(c.methods.begin(), c.methods.end(),
                                      [&](const std::string& m) { return needs_mad(m, c.augment_mad); });
    if (want_mad) {
        std::vector<double> resid(ctx.train.size());
        for (std::size_t i = 0; i < resid.size(); ++i)
            resid[i] = std::abs(ctx.train.targets[i] - ctx.base.mean(ctx.train.features.row(i)));
        ForestParams fp;
        fp.n_estimators = c.base_trees;
        auto m = std::make_shared<const RandomForestRegressor>(
            fit_forest(ctx.train.features, resid, fp, rep.derive(3), threads));
        ctx.mad_forest = m;
        ctx.base.mad = [m](std::span<const double> x) { return m->predict(x); };
    }
    return ctx;
}

namespace detail {

/// Wraps each statistic so rows of the given matrices are looked up from values
/// computed once; any other point falls through to the original function.
inline Statistic cache_rows(const Statistic& f, const std::vector<const Matrix*>& matrices) {
    if (!f) return f;
    struct Block {
        const double* begin;
        std::size_t cols, rows;
        std::vector<double> values;
    };
    auto blocks = std::make_shared<std::vector<Block>>();
    for (const auto* m : matrices) {
        if (m->empty() || m->cols() == 0) continue;
        Block b{m->data().data(), m->cols(), m->rows(), std::vector<double>(m->rows())};
        for (std::size_t i = 0; i < m->rows(); ++i) b.values[i] = f(m->row(i));
        blocks->push_back(std::move(b));
    }
    return [f, blocks](std::span<const double> x) {
        for (const auto& b : *blocks) {
            if (x.size() != b.cols || x.data() < b.begin || x.data() >= b.begin + b.rows * b.cols) continue;
            const auto offset = static_cast<std::size_t>(x.data() - b.begin);
            if (offset % b.cols == 0) return b.values[offset / b.cols];
        }
        return f(x);
    };
}

inline BaseModels cache_rows(const BaseModels& base, const std::vector<const Matrix*>& matrices) {
    return {cache_rows(base.mean, matrices), cache_rows(base.mad, matrices), cache_rows(base.variance, matrices)};
}

}  // namespace detail

inline std::vector<ReplicationRow> run_replication(const ExperimentConfig& c, std::size_t r, unsigned threads,
                                                   const Dataset* csv_data) {
    using clock = std::chrono::steady_clock;
    const RngStream rep(c.seed, r);
    auto ctx = prepare_replication(c, r, threads, csv_data);
    ctx.base = detail::cache_rows(ctx.base, {&ctx.cal.features, &ctx.test.features});

    ConditionalSampler sampler;
    if (c.simulated() && c.b_y > 0) {
        const auto setting = c.sim_setting();
        sampler = [setting](std::span<const double> x, std::size_t n, RngStream& g, std::vector<double>& out) {
            conditional_sample(setting, x, n, g, out);
        };
    }

    std::vector<ReplicationRow> rows;
    for (const auto& method : c.methods) {
        ReplicationRow row;
        row.method = method;
        row.replication = r;
        const auto t0 = clock::now();
        const auto fitted = fit_method(method, c, ctx, rep.derive(method_stream_id(method)), threads);
        const auto t1 = clock::now();
        const auto intervals = predict_intervals(fitted.model, ctx.base, ctx.test.features);
        const auto t2 = clock::now();
        row.fit_seconds = std::chrono::duration<double>(t1 - t0).count();
        row.predict_seconds = std::chrono::duration<double>(t2 - t1).count();
        row.cells = fitted.cells;
        row.amc = marginal_coverage(intervals, ctx.test.targets);
        const auto summary = smis_summary(intervals, ctx.test.targets, c.alpha);
        row.smis = summary.smis_finite;
        row.mean_width = summary.mean_width_finite;
        row.n_infinite = summary.n_infinite;
        if (sampler) row.ccad = ccad(intervals, sampler, ctx.test.features, c.alpha, c.b_y, rep.derive(4));
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Replications run in parallel; each derives its own stream from (seed, r) and
/// rows are merged by replication index, so the report does not depend on the
/// worker count.
inline ExperimentReport run_experiment(const ExperimentConfig& config) {
    config.validate();
    std::optional<Dataset> csv_data;
    if (!config.simulated()) csv_data = load_csv(config.dataset, config.target);

    const unsigned threads = resolve_threads(config.threads);
    const unsigned outer = static_cast<unsigned>(std::min<std::size_t>(threads, config.replications));
    const unsigned inner = std::max(1u, threads / std::max(1u, outer));

    std::vector<std::vector<ReplicationRow>> per_rep(config.replications);
    parallel_for(config.replications, outer, [&](std::size_t r) {
        per_rep[r] = run_replication(config, r, inner, csv_data ? &*csv_data : nullptr);
    });

    ExperimentReport report;
    report.config = config;
    for (auto& rows : per_rep)
        for (auto& row : rows) report.rows.push_back(std::move(row));
    for (const auto& m : config.methods) report.aggregates.push_back(aggregate_rows(m, report.rows_for(m)));
    return report;
}

// ---------------------------------------------------------------------------
// Model bundle: base forest, optional MAD forest and one calibrator

struct ModelBundle {
    std::string method;
    std::vector<std::string> feature_names;
    std::string target_name;
    RandomForestRegressor base;
    std::optional<RandomForestRegressor> mad;
    CalibratorModel calibrator;

    BaseModels base_models() const { return BaseModels::from_forest(base, mad ? &*mad : nullptr); }
};

inline json to_json(const ModelBundle& b) {
    return {{"schema", kModelSchema},
            {"method", b.method},
            {"feature_names", b.feature_names},
            {"target", b.target_name},
            {"base", to_json(b.base)},
            {"mad", b.mad ? to_json(*b.mad) : json(nullptr)},
            {"calibrator", to_json(b.calibrator, b.method)}};
}

inline ModelBundle bundle_from_json(const json& j) {
    detail::expect_schema(j, kModelSchema);
    try {
        ModelBundle b;
        b.method = j.at("method").get<std::string>();
        b.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        b.target_name = j.at("target").get<std::string>();
        b.base = forest_from_json(j.at("base"));
        if (!j.at("mad").is_null()) b.mad = forest_from_json(j.at("mad"));
        b.calibrator = calibrator_from_json(j.at("calibrator"));
        return b;
    } catch (const json::exception& e) {
        throw Error(std::string("malformed model: ") + e.what());
    }
}

inline void save_model(const ModelBundle& b, const std::string& path) { write_text_file(path, to_json(b).dump() + "\n"); }

inline ModelBundle load_model(const std::string& path) { return bundle_from_json(read_json_file(path)); }

struct CalibrateOptions {
    std::string method = "loforest";
    double alpha = 0.1;
    std::size_t base_trees = 100;
    std::size_t min_samples_split = 100;
    std::size_t min_samples_leaf = 25;
    std::size_t loforest_trees = 100;
    std::size_t mondrian_bins = 30;
    bool augment_mad = false;
    bool inner_split = false;
    std::uint64_t seed = 42;
    unsigned threads = 0;
};

/// Fits the base forest on `train` and the requested calibrator on `cal`.
inline ModelBundle calibrate(const Dataset& train, const Dataset& cal, const CalibrateOptions& o) {
    if (train.dim() != cal.dim()) throw Error("train and calibration files have different feature counts");
    ExperimentConfig c;
    c.dataset = "<in-memory>";
    c.alpha = o.alpha;
    c.methods = {o.method};
    c.base_trees = o.base_trees;
    c.min_samples_split = o.min_samples_split;
    c.min_samples_leaf = o.min_samples_leaf;
    c.loforest_trees = o.loforest_trees;
    c.mondrian_bins = o.mondrian_bins;
    c.augment_mad = o.augment_mad;
    c.inner_split = o.inner_split;
    c.seed = o.seed;
    c.validate();

    const unsigned threads = resolve_threads(o.threads);
    const RngStream root(o.seed, 0);
    ReplicationContext ctx;
    ctx.cal = cal;
    ForestParams fp;
    fp.n_estimators = o.base_trees;
    ModelBundle b;
    b.method = o.method;
    b.feature_names = train.feature_names;
    b.target_name = train.target_name;
    b.base = fit_forest(train.features, train.targets, fp, root.derive(2), threads);
    if (needs_mad(o.method, o.augment_mad)) {
        std::vector<double> resid(train.size());
        for (std::size_t i = 0; i < resid.size(); ++i)
            resid[i] = std::abs(train.targets[i] - b.base.predict(train.features.row(i)));
        b.mad = fit_forest(train.features, resid, fp, root.derive(3), threads);
    }
    ctx.base = b.base_models();
    b.calibrator = fit_method(o.method, c, ctx, root.derive(method_stream_id(o.method)), threads).model;
    return b;
}

}  // namespace clover
