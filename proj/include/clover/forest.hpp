#pragma once

/// Bagged regression trees. Serves as the point regressor and as the source of
/// per-tree prediction variance used as a difficulty estimate.

#include <algorithm>
#include <span>
#include <utility>
#include <vector>

#include "clover/parallel.hpp"
#include "clover/rng.hpp"
#include "clover/tree.hpp"

namespace clover {

struct ForestParams {
    std::size_t n_estimators = 100;
    TreeParams tree{.min_samples_split = 2, .min_samples_leaf = 1, .max_depth = kUnbounded};
    bool bootstrap = true;  // false fits every tree on the full sample (test hook)

    friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

struct MeanVariance {
    double mean = 0.0;
    double variance = 0.0;
};

/// Mean and population variance of `values`, sorted in place first so the result
/// does not depend on the order the values arrived in. Identical inputs give
/// exactly that value and zero variance.
inline MeanVariance order_invariant_moments(std::span<double> values) {
    if (values.empty()) return {};
    std::sort(values.begin(), values.end());
    const double base = values.front();
    double shift = 0.0;
    for (double v : values) shift += v - base;
    const auto n = static_cast<double>(values.size());
    const double mean = base + shift / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, ss / n};
}

/// Bootstrap multiset of size n (sorted), drawn with replacement.
inline std::vector<std::size_t> bootstrap_sample(std::size_t n, RngStream& rng) {
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) r = static_cast<std::size_t>(rng.below(n));
    std::sort(rows.begin(), rows.end());
    return rows;
}

class RandomForestRegressor {
public:
    RandomForestRegressor() = default;
    RandomForestRegressor(ForestParams params, std::vector<RegressionTree> trees,
                          std::vector<std::vector<std::size_t>> bootstrap_indices = {})
        : params_(params), trees_(std::move(trees)), bootstrap_indices_(std::move(bootstrap_indices)) {
        if (trees_.empty()) throw Error("forest needs at least one tree");
    }

    const ForestParams& params() const noexcept { return params_; }
    const std::vector<RegressionTree>& trees() const noexcept { return trees_; }
    const std::vector<std::vector<std::size_t>>& bootstrap_indices() const noexcept { return bootstrap_indices_; }
    std::size_t n_features() const { return trees_.front().n_features(); }

    void tree_predictions(std::span<const double> x, std::vector<double>& out) const {
        if (x.size() != n_features()) throw Error("feature dimension mismatch");
        out.resize(trees_.size());
        for (std::size_t k = 0; k < trees_.size(); ++k) out[k] = trees_[k].nodes()[trees_[k].descend(x)].value;
    }

    MeanVariance moments(std::span<const double> x) const {
        thread_local std::vector<double> buf;
        tree_predictions(x, buf);
        return order_invariant_moments(buf);
    }

    double predict(std::span<const double> x) const { return moments(x).mean; }

    /// Population variance of the per-tree predictions; 0 for a single tree.
    double prediction_variance(std::span<const double> x) const { return moments(x).variance; }

    std::vector<double> predict(const Matrix& X) const {
        std::vector<double> out(X.rows());
        for (std::size_t i = 0; i < X.rows(); ++i) out[i] = predict(X.row(i));
        return out;
    }

private:
    ForestParams params_;
    std::vector<RegressionTree> trees_;
    std::vector<std::vector<std::size_t>> bootstrap_indices_;
};

/// Tree k is fit on a bootstrap drawn from rng.derive(k), so the forest is the
/// same for any worker count.
inline RandomForestRegressor fit_forest(const Matrix& X, std::span<const double> y, const ForestParams& params,
                                        const RngStream& rng, unsigned threads = 1) {
    if (X.rows() == 0) throw Error("fit_forest: empty dataset");
    if (params.n_estimators == 0) throw Error("fit_forest: n_estimators must be at least 1");
    const std::size_t n = X.rows();
    std::vector<RegressionTree> trees(params.n_estimators);
    std::vector<std::vector<std::size_t>> samples(params.n_estimators);
    parallel_for(params.n_estimators, threads, [&](std::size_t k) {
        if (params.bootstrap) {
            RngStream local = rng.derive(k);
            samples[k] = bootstrap_sample(n, local);
        } else {
            samples[k] = detail::all_rows(n);
        }
        trees[k] = fit_tree(X, y, params.tree, samples[k]);
    });
    return RandomForestRegressor(params, std::move(trees), std::move(samples));
}

}  // namespace clover
