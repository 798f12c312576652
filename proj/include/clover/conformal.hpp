#pragma once

/// Interval calibrators around a fitted point regressor: split conformal,
/// locally weighted split, Mondrian bins, Locart (a regression tree of
/// conformity scores with per-leaf conformal cutoffs), Loforest (bootstrap
/// ensemble of such trees with averaged cutoffs) and their feature-augmented
/// and weighted-score variants.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "clover/data.hpp"
#include "clover/forest.hpp"
#include "clover/parallel.hpp"
#include "clover/rng.hpp"
#include "clover/tree.hpp"

namespace clover {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class ScoreKind { regression_residual, weighted_residual };

/// Extra statistic appended as a feature column by the augmented variants.
enum class Augmentor { forest_variance, mad };

using Statistic = std::function<double(std::span<const double>)>;

/// The fitted point predictor and the optional per-point statistics that some
/// calibrators consume: `mad` normalises weighted scores, `variance` is the
/// Mondrian difficulty and the default augmentation column.
struct BaseModels {
    Statistic mean;
    Statistic mad;
    Statistic variance;

    static BaseModels from_forest(const RandomForestRegressor& forest, const RandomForestRegressor* mad_forest = nullptr) {
        BaseModels b;
        b.mean = [&forest](std::span<const double> x) { return forest.predict(x); };
        b.variance = [&forest](std::span<const double> x) { return forest.prediction_variance(x); };
        if (mad_forest) b.mad = [mad_forest](std::span<const double> x) { return mad_forest->predict(x); };
        return b;
    }
};

struct PredictionInterval {
    double lower = 0.0;
    double upper = 0.0;
    double center = 0.0;

    bool infinite() const noexcept { return !std::isfinite(lower) || !std::isfinite(upper); }
    double width() const noexcept { return upper - lower; }
    bool contains(double y) const noexcept { return lower <= y && y <= upper; }
};

struct LeafCutoff {
    double cutoff = kInf;  // +inf for an empty cell or a corrected level above 1
    std::size_t count = 0;

    friend bool operator==(const LeafCutoff&, const LeafCutoff&) = default;
};

/// Indexed by leaf id.
using CutoffTable = std::vector<LeafCutoff>;

// ---------------------------------------------------------------------------
// Scores and cutoffs

inline std::vector<double> compute_scores(const BaseModels& base, const Matrix& X, std::span<const double> y,
                                          ScoreKind kind) {
    if (X.rows() != y.size()) throw Error("compute_scores: feature rows and target length differ");
    if (kind == ScoreKind::weighted_residual && !base.mad) throw Error("weighted scores need a MAD predictor");
    std::vector<double> s(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const auto x = X.row(i);
        s[i] = std::abs(y[i] - base.mean(x));
        if (kind == ScoreKind::weighted_residual) {
            const double rho = base.mad(x);
            if (!(rho > 0.0)) throw Error("degenerate MAD");
            s[i] /= rho;
        }
    }
    return s;
}

/// Rank of the split-conformal order statistic, ceil((m + 1)(1 - alpha)), with
/// a relative 1e-12 allowance for rounding in the product. Values above m mean
/// the cutoff is +inf.
inline std::size_t conformal_rank(std::size_t m, double alpha) {
    const double x = static_cast<double>(m + 1) * (1.0 - alpha);
    const double k = std::ceil(x - 1e-12 * x);
    return static_cast<std::size_t>(std::max(1.0, k));
}

/// Empirical (1 + 1/m)(1 - alpha) quantile of the scores, +inf when m = 0 or the
/// level exceeds 1.
inline double conformal_cutoff(std::span<const double> scores, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error("invalid level");
    const std::size_t m = scores.size();
    if (m == 0) return kInf;
    const std::size_t k = conformal_rank(m, alpha);
    if (k > m) return kInf;
    std::vector<double> buf(scores.begin(), scores.end());
    std::nth_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(k - 1), buf.end());
    return buf[k - 1];
}

/// Cutoff per cell from each score's cell label.
inline std::vector<LeafCutoff> cell_cutoffs(std::span<const double> scores, std::span<const std::size_t> cell,
                                            std::size_t n_cells, double alpha) {
    std::vector<std::vector<double>> groups(n_cells);
    for (std::size_t i = 0; i < scores.size(); ++i) groups[cell[i]].push_back(scores[i]);
    std::vector<LeafCutoff> out(n_cells);
    for (std::size_t c = 0; c < n_cells; ++c) out[c] = {conformal_cutoff(groups[c], alpha), groups[c].size()};
    return out;
}

// ---------------------------------------------------------------------------
// Feature augmentation

inline Matrix augment_features(const Matrix& X, std::span<const Statistic> stats) {
    if (stats.empty()) return X;
    const std::size_t d = X.cols();
    Matrix out(X.rows(), d + stats.size());
    for (std::size_t i = 0; i < X.rows(); ++i) {
        const auto src = X.row(i);
        auto dst = out.row(i);
        std::copy(src.begin(), src.end(), dst.begin());
        for (std::size_t j = 0; j < stats.size(); ++j) dst[d + j] = stats[j](src);
    }
    return out;
}

inline std::vector<Statistic> resolve_augmentors(std::span<const Augmentor> kinds, const BaseModels& base) {
    std::vector<Statistic> stats;
    for (auto k : kinds) {
        const Statistic& s = k == Augmentor::forest_variance ? base.variance : base.mad;
        if (!s) throw Error(k == Augmentor::forest_variance ? "augmentation needs a variance statistic"
                                                            : "augmentation needs a MAD predictor");
        stats.push_back(s);
    }
    return stats;
}

/// Writes x followed by the augmentation statistics into `out`.
inline std::span<const double> augmented_point(std::span<const double> x, std::span<const Statistic> stats,
                                               std::vector<double>& out) {
    if (stats.empty()) return x;
    out.assign(x.begin(), x.end());
    for (const auto& s : stats) out.push_back(s(x));
    return out;
}

// ---------------------------------------------------------------------------
// Fitted calibrators

/// Single global cutoff: regression split (residual scores) or the locally
/// weighted split (MAD-normalised scores).
struct SplitCalibrator {
    double alpha = 0.1;
    ScoreKind score = ScoreKind::regression_residual;
    LeafCutoff cutoff;
};

struct MondrianCalibrator {
    double alpha = 0.1;
    ScoreKind score = ScoreKind::regression_residual;
    std::vector<double> edges;  // strictly increasing upper bin edges
    std::vector<LeafCutoff> bins;

    std::size_t bin_of(double difficulty) const noexcept {
        const auto it = std::lower_bound(edges.begin(), edges.end(), difficulty);
        if (it == edges.end()) return edges.size() - 1;
        return static_cast<std::size_t>(it - edges.begin());
    }
};

struct LocartModel {
    double alpha = 0.1;
    ScoreKind score = ScoreKind::regression_residual;
    std::vector<Augmentor> augmentation;
    RegressionTree tree;
    CutoffTable cutoffs;
};

struct LoforestModel {
    double alpha = 0.1;
    ScoreKind score = ScoreKind::regression_residual;
    std::vector<Augmentor> augmentation;
    std::vector<RegressionTree> trees;
    std::vector<CutoffTable> cutoffs;
};

using CalibratorModel = std::variant<SplitCalibrator, MondrianCalibrator, LocartModel, LoforestModel>;

// ---------------------------------------------------------------------------
// Fitting

inline void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must lie in (0, 1)");
}

inline SplitCalibrator fit_reg_split(const BaseModels& base, const Matrix& X_cal, std::span<const double> y_cal,
                                     double alpha) {
    check_alpha(alpha);
    const auto s = compute_scores(base, X_cal, y_cal, ScoreKind::regression_residual);
    return {alpha, ScoreKind::regression_residual, {conformal_cutoff(s, alpha), s.size()}};
}

inline SplitCalibrator fit_weighted_reg_split(const BaseModels& base, const Matrix& X_cal,
                                              std::span<const double> y_cal, double alpha) {
    check_alpha(alpha);
    const auto s = compute_scores(base, X_cal, y_cal, ScoreKind::weighted_residual);
    return {alpha, ScoreKind::weighted_residual, {conformal_cutoff(s, alpha), s.size()}};
}

/// Bins calibration difficulty at its empirical quantiles 1/k, ..., (k-1)/k, 1
/// (duplicate edges merge bins) and calibrates each bin separately.
inline MondrianCalibrator fit_mondrian(const BaseModels& base, std::span<const double> difficulty_cal,
                                       const Matrix& X_cal, std::span<const double> y_cal, double alpha,
                                       std::size_t k) {
    check_alpha(alpha);
    if (k == 0) throw Error("mondrian: bin count must be at least 1");
    if (difficulty_cal.size() != y_cal.size()) throw Error("mondrian: difficulty length differs from calibration size");
    if (y_cal.empty()) throw Error("mondrian: empty calibration set");
    const auto s = compute_scores(base, X_cal, y_cal, ScoreKind::regression_residual);

    std::vector<double> sorted(difficulty_cal.begin(), difficulty_cal.end());
    std::sort(sorted.begin(), sorted.end());
    MondrianCalibrator m;
    m.alpha = alpha;
    for (std::size_t j = 1; j <= k; ++j) {
        const double phi = j == k ? 1.0 : static_cast<double>(j) / static_cast<double>(k);
        const double edge = sorted[quantile_rank(sorted.size(), phi) - 1];
        if (m.edges.empty() || edge > m.edges.back()) m.edges.push_back(edge);
    }
    std::vector<std::size_t> cell(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) cell[i] = m.bin_of(difficulty_cal[i]);
    m.bins = cell_cutoffs(s, cell, m.edges.size(), alpha);
    return m;
}

inline MondrianCalibrator fit_mondrian(const BaseModels& base, const Matrix& X_cal, std::span<const double> y_cal,
                                       double alpha, std::size_t k) {
    if (!base.variance) throw Error("mondrian needs a difficulty statistic");
    std::vector<double> diff(X_cal.rows());
    for (std::size_t i = 0; i < X_cal.rows(); ++i) diff[i] = base.variance(X_cal.row(i));
    return fit_mondrian(base, diff, X_cal, y_cal, alpha, k);
}

/// Leaves below (1 - alpha) / alpha rows get an infinite cutoff, and bootstrap
/// duplicates make in-bag counts overstate distinct rows, so calibration trees
/// keep at least 25 rows per leaf.
inline constexpr TreeParams kCalibrationTree{.min_samples_split = 100, .min_samples_leaf = 25};

struct LocartParams {
    TreeParams tree = kCalibrationTree;
    bool post_prune = true;
    double validation_fraction = 0.25;
    InnerSplit inner;
    std::vector<Augmentor> augmentation;
    ScoreKind score = ScoreKind::regression_residual;
};

struct LoforestParams {
    std::size_t n_trees = 100;
    bool bootstrap = true;
    TreeParams tree = kCalibrationTree;
    InnerSplit inner;
    std::vector<Augmentor> augmentation;
    ScoreKind score = ScoreKind::regression_residual;
};

namespace detail {

/// Positions (within the calibration set) used to grow the partition and to
/// populate it. Consumes randomness only when the inner split is enabled.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> part_and_cut(std::size_t n_cal,
                                                                                  const InnerSplit& inner,
                                                                                  RngStream& rng) {
    auto all = all_rows(n_cal);
    if (!inner.enabled) return {all, all};
    if (!(inner.part_fraction > 0 && inner.part_fraction < 1))
        throw Error("inner split fraction must lie in (0, 1)");
    return random_bipartition(all, inner.part_fraction, rng);
}

inline CutoffTable build_cutoff_table(const RegressionTree& tree, const Matrix& Z, std::span<const double> scores,
                                      std::span<const std::size_t> cut, double alpha) {
    std::vector<double> cut_scores;
    std::vector<std::size_t> cell;
    cut_scores.reserve(cut.size());
    cell.reserve(cut.size());
    for (auto i : cut) {
        cut_scores.push_back(scores[i]);
        cell.push_back(tree.leaf_of(Z.row(i)));
    }
    return cell_cutoffs(cut_scores, cell, tree.leaf_count(), alpha);
}

}  // namespace detail

inline LocartModel fit_locart(const BaseModels& base, const Matrix& X_cal, std::span<const double> y_cal,
                              double alpha, const LocartParams& params, RngStream& rng) {
    check_alpha(alpha);
    if (y_cal.empty()) throw Error("locart: empty calibration set");
    const auto scores = compute_scores(base, X_cal, y_cal, params.score);
    const auto stats = resolve_augmentors(params.augmentation, base);
    const Matrix Z = augment_features(X_cal, stats);
    auto [part, cut] = detail::part_and_cut(y_cal.size(), params.inner, rng);

    LocartModel model;
    model.alpha = alpha;
    model.score = params.score;
    model.augmentation = params.augmentation;
    if (params.post_prune && part.size() >= 2) {
        auto [grow, validate] = random_bipartition(part, 1.0 - params.validation_fraction, rng);
        if (grow.empty() || validate.empty()) {
            model.tree = fit_tree(Z, scores, params.tree, part);
        } else {
            const RegressionTree full = fit_tree(Z, scores, params.tree, grow);
            const Matrix Zv = Z.select_rows(validate);
            std::vector<double> sv;
            sv.reserve(validate.size());
            for (auto i : validate) sv.push_back(scores[i]);
            model.tree = select_pruned_tree(full, Zv, sv);
        }
    } else {
        model.tree = fit_tree(Z, scores, params.tree, part);
    }
    model.cutoffs = detail::build_cutoff_table(model.tree, Z, scores, cut, alpha);
    return model;
}

/// Tree k grows on a bootstrap of the partitioning rows drawn from
/// rng.derive(k); every tree's cells are populated by all cutoff rows.
inline LoforestModel fit_loforest(const BaseModels& base, const Matrix& X_cal, std::span<const double> y_cal,
                                  double alpha, const LoforestParams& params, RngStream& rng, unsigned threads = 1) {
    check_alpha(alpha);
    if (y_cal.empty()) throw Error("loforest: empty calibration set");
    if (params.n_trees == 0) throw Error("loforest: n_trees must be at least 1");
    const auto scores = compute_scores(base, X_cal, y_cal, params.score);
    const auto stats = resolve_augmentors(params.augmentation, base);
    const Matrix Z = augment_features(X_cal, stats);
    auto [part, cut] = detail::part_and_cut(y_cal.size(), params.inner, rng);
    const RngStream tree_streams = rng.derive(0x4c6f666f72657374ULL);

    LoforestModel model;
    model.alpha = alpha;
    model.score = params.score;
    model.augmentation = params.augmentation;
    model.trees.resize(params.n_trees);
    model.cutoffs.resize(params.n_trees);
    parallel_for(params.n_trees, threads, [&](std::size_t k) {
        std::vector<std::size_t> rows;
        if (params.bootstrap) {
            RngStream local = tree_streams.derive(k);
            for (auto pos : bootstrap_sample(part.size(), local)) rows.push_back(part[pos]);
        } else {
            rows = part;
        }
        model.trees[k] = fit_tree(Z, scores, params.tree, rows);
        model.cutoffs[k] = detail::build_cutoff_table(model.trees[k], Z, scores, cut, alpha);
    });
    return model;
}

// ---------------------------------------------------------------------------
// Prediction

inline double locart_cutoff(const LocartModel& m, std::span<const double> z) {
    return m.cutoffs[m.tree.assign_leaf(z)].cutoff;
}

/// Plain mean of the per-tree cutoffs (order-invariant); +inf if any tree's cell is +inf.
inline double loforest_cutoff(const LoforestModel& m, std::span<const double> z) {
    thread_local std::vector<double> buf;
    buf.resize(m.trees.size());
    for (std::size_t k = 0; k < m.trees.size(); ++k) {
        buf[k] = m.cutoffs[k][m.trees[k].assign_leaf(z)].cutoff;
        if (!std::isfinite(buf[k])) return kInf;
    }
    return order_invariant_moments(buf).mean;
}

/// Cutoff t(x) of any calibrator at raw features x.
inline double cutoff_at(const CalibratorModel& model, const BaseModels& base, std::span<const double> x) {
    thread_local std::vector<double> zbuf;
    return std::visit(
        [&](const auto& m) -> double {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, SplitCalibrator>) {
                return m.cutoff.cutoff;
            } else if constexpr (std::is_same_v<M, MondrianCalibrator>) {
                if (!base.variance) throw Error("mondrian needs a difficulty statistic");
                return m.bins[m.bin_of(base.variance(x))].cutoff;
            } else {
                const auto stats = resolve_augmentors(m.augmentation, base);
                const auto z = augmented_point(x, stats, zbuf);
                if constexpr (std::is_same_v<M, LocartModel>)
                    return locart_cutoff(m, z);
                else
                    return loforest_cutoff(m, z);
            }
        },
        model);
}

inline ScoreKind score_kind(const CalibratorModel& model) {
    return std::visit([](const auto& m) { return m.score; }, model);
}

inline double model_alpha(const CalibratorModel& model) {
    return std::visit([](const auto& m) { return m.alpha; }, model);
}

/// mu(x) -/+ t(x), with t(x) scaled by rho(x) for weighted scores. An infinite
/// cutoff yields the whole real line.
inline PredictionInterval predict_interval(const CalibratorModel& model, const BaseModels& base,
                                           std::span<const double> x) {
    const double center = base.mean(x);
    double half = cutoff_at(model, base, x);
    if (std::isfinite(half) && score_kind(model) == ScoreKind::weighted_residual) {
        if (!base.mad) throw Error("weighted calibrator needs a MAD predictor");
        half *= base.mad(x);
    }
    if (!std::isfinite(half)) return {-kInf, kInf, center};
    return {center - half, center + half, center};
}

inline std::vector<PredictionInterval> predict_intervals(const CalibratorModel& model, const BaseModels& base,
                                                         const Matrix& X) {
    std::vector<PredictionInterval> out(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) out[i] = predict_interval(model, base, X.row(i));
    return out;
}

}  // namespace clover
