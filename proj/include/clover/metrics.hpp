#pragma once

/// Coverage and sharpness diagnostics: average marginal coverage, interval
/// score / SMIS, and conditional coverage absolute deviation (CCAD).

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "clover/conformal.hpp"
#include "clover/rng.hpp"

namespace clover {

/// Pairwise summation; the result depends only on the order of `v`.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t h = v.size() / 2;
    return pairwise_sum(v.first(h)) + pairwise_sum(v.subspan(h));
}

inline double pairwise_mean(std::span<const double> v) {
    return v.empty() ? 0.0 : pairwise_sum(v) / static_cast<double>(v.size());
}

/// Fraction of labels inside their closed intervals; infinite intervals cover.
inline double marginal_coverage(std::span<const PredictionInterval> intervals, std::span<const double> y) {
    if (intervals.size() != y.size()) throw Error("marginal_coverage: size mismatch");
    if (y.empty()) throw Error("marginal_coverage: empty test set");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < y.size(); ++i) hit += intervals[i].contains(y[i]) ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(y.size());
}

inline double interval_score(const PredictionInterval& c, double y, double alpha) {
    if (c.infinite()) return kInf;
    double s = c.upper - c.lower;
    if (y < c.lower) s += 2.0 / alpha * (c.lower - y);
    if (y > c.upper) s += 2.0 / alpha * (y - c.upper);
    return s;
}

inline double smis(std::span<const PredictionInterval> intervals, std::span<const double> y, double alpha) {
    if (intervals.size() != y.size()) throw Error("smis: size mismatch");
    std::vector<double> s(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) s[i] = interval_score(intervals[i], y[i], alpha);
    return pairwise_mean(s);
}

/// SMIS restricted to finite intervals, with the count of infinite ones, so a
/// single whole-line interval does not swamp the average.
struct SmisSummary {
    double smis_finite = 0.0;
    std::size_t n_infinite = 0;
    double mean_width_finite = 0.0;
};

inline SmisSummary smis_summary(std::span<const PredictionInterval> intervals, std::span<const double> y,
                                double alpha) {
    if (intervals.size() != y.size()) throw Error("smis: size mismatch");
    std::vector<double> scores, widths;
    SmisSummary out;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (intervals[i].infinite()) {
            ++out.n_infinite;
            continue;
        }
        scores.push_back(interval_score(intervals[i], y[i], alpha));
        widths.push_back(intervals[i].width());
    }
    out.smis_finite = pairwise_mean(scores);
    out.mean_width_finite = pairwise_mean(widths);
    return out;
}

/// Draws `count` responses from Y | X = x.
using ConditionalSampler = std::function<void(std::span<const double> x, std::size_t count, RngStream& rng,
                                              std::vector<double>& out)>;
using IntervalFn = std::function<PredictionInterval(std::span<const double> x)>;

/// Monte Carlo conditional coverage delta(x_i): the fraction of B_y draws from
/// Y | X = x_i inside C(x_i). Point i draws from rng.derive(i), so every method
/// evaluated with the same rng sees the same responses.
inline std::vector<double> conditional_coverages(std::span<const PredictionInterval> intervals,
                                                 const ConditionalSampler& sampler, const Matrix& X_test,
                                                 std::size_t B_y, const RngStream& rng) {
    if (!sampler) throw Error("ccad: no conditional sampler available for this data");
    if (B_y == 0) throw Error("ccad: B_y must be at least 1");
    if (intervals.size() != X_test.rows()) throw Error("ccad: size mismatch");
    std::vector<double> delta(X_test.rows());
    std::vector<double> draws;
    for (std::size_t i = 0; i < X_test.rows(); ++i) {
        RngStream local = rng.derive(i);
        sampler(X_test.row(i), B_y, local, draws);
        std::size_t hit = 0;
        for (double v : draws) hit += intervals[i].contains(v) ? 1 : 0;
        delta[i] = static_cast<double>(hit) / static_cast<double>(B_y);
    }
    return delta;
}

inline double ccad_from_coverages(std::span<const double> delta, double alpha) {
    std::vector<double> dev(delta.size());
    for (std::size_t i = 0; i < delta.size(); ++i) dev[i] = std::abs(delta[i] - (1.0 - alpha));
    return pairwise_mean(dev);
}

/// CCAD = mean over test points of |delta(x_i) - (1 - alpha)|.
inline double ccad(std::span<const PredictionInterval> intervals, const ConditionalSampler& sampler,
                   const Matrix& X_test, double alpha, std::size_t B_y, const RngStream& rng) {
    if (X_test.rows() == 0) throw Error("ccad: empty test set");
    return ccad_from_coverages(conditional_coverages(intervals, sampler, X_test, B_y, rng), alpha);
}

inline double ccad(const IntervalFn& interval, const ConditionalSampler& sampler, const Matrix& X_test, double alpha,
                   std::size_t B_y, const RngStream& rng) {
    std::vector<PredictionInterval> intervals(X_test.rows());
    for (std::size_t i = 0; i < X_test.rows(); ++i) intervals[i] = interval(X_test.row(i));
    return ccad(intervals, sampler, X_test, alpha, B_y, rng);
}

struct MetricReport {
    double amc = 0.0;
    double smis = 0.0;
    std::optional<double> ccad;
    std::size_t n_test = 0;
};

}  // namespace clover
