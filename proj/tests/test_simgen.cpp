#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "clover/simgen.hpp"
#include "oracles.hpp"

using namespace clover;

namespace {

struct Moments {
    double mean, var, se_mean;
};

Moments moments(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    const double n = static_cast<double>(v.size());
    const double m = s / n;
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    const double var = ss / (n - 1);
    return {m, var, std::sqrt(var / n)};
}

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0;
    while (i < a.size() && j < b.size()) {
        const double t = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= t) ++i;
        while (j < b.size() && b[j] <= t) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
    }
    return d;
}

const std::vector<std::string> kKeys = {"homosc",      "heterosc",         "asym",         "asym2",
                                        "t_residuals", "noncorr_heterosc", "laplace_beta", "mixture_constvar"};

}  // namespace

TEST(Settings, KeysRoundTripAndShapes) {
    for (const auto& k : kKeys) {
        const auto s = SimSetting::from_key(k, 3, 20);
        EXPECT_EQ(s.key(), k);
        RngStream r(1);
        const auto ds = sample(s, 300, r);
        EXPECT_EQ(ds.size(), 300u);
        EXPECT_EQ(ds.dim(), s.d);
        for (std::size_t i = 0; i < ds.size(); ++i)
            for (double v : ds.features.row(i)) {
                ASSERT_GE(v, s.feature_low());
                ASSERT_LT(v, s.feature_high());
            }
    }
    EXPECT_EQ(SimSetting::from_key("laplace_beta", 3, 20).d, 1u);
    EXPECT_THROW(SimSetting::from_key("nope"), Error);
    EXPECT_THROW(SimSetting::from_key("homosc", 5, 3), Error);
}

TEST(Settings, Deterministic) {
    for (const auto& k : kKeys) {
        const auto s = SimSetting::from_key(k, 1, 4);
        RngStream a(9, 2), b(9, 2);
        const auto x = sample(s, 100, a), y = sample(s, 100, b);
        EXPECT_EQ(x.features, y.features);
        EXPECT_EQ(x.targets, y.targets);
    }
}

TEST(Settings, HomoscedasticMean) {
    const auto s = SimSetting::from_key("homosc", 1, 20);
    std::vector<double> x(20, 0.0);
    x[0] = 0.7;
    RngStream r(2);
    const auto m = moments(conditional_sample(s, x, 100000, r));
    EXPECT_NEAR(m.mean, 1.4, 3 * m.se_mean);
}

TEST(Settings, HeteroscedasticSdAtZero) {
    const auto s = SimSetting::from_key("heterosc", 1, 20);
    const std::vector<double> x(20, 0.0);
    RngStream r(3);
    const auto v = conditional_sample(s, x, 100000, r);
    const auto m = moments(v);
    // SE of the sample sd for a normal is sd / sqrt(2(n - 1)).
    EXPECT_NEAR(std::sqrt(m.var), 0.5, 3 * 0.5 / std::sqrt(2.0 * 99999));
}

TEST(Settings, HeteroscedasticUsesOnlyRelevantFeatures) {
    const auto s = SimSetting::from_key("heterosc", 3, 20);
    std::vector<double> x(20, 1.4);
    x[0] = 0.3, x[1] = -0.6, x[2] = 0.9;
    EXPECT_NEAR(s.conditional_mean(x), 0.4, 1e-12);
}

TEST(Settings, AsymmetricMeanIsShifted) {
    // Gamma(shape = rate = a) has mean 1 and variance 1 / a.
    const auto s = SimSetting::from_key("asym", 1, 2);
    const std::vector<double> x{1.0, 0.0};
    RngStream r(4);
    const auto m = moments(conditional_sample(s, x, 100000, r));
    EXPECT_NEAR(m.mean, 3.0, 3 * m.se_mean);
    EXPECT_NEAR(m.var, 1 / 1.6, 0.02);
}

TEST(Settings, MarginalMatchesPooledConditionals) {
    for (const auto& k : {"heterosc", "asym2", "mixture_constvar"}) {
        const auto s = SimSetting::from_key(k, 1, 2);
        RngStream r1(5), r2(6);
        const auto ds = sample(s, 10000, r1);
        std::vector<double> pooled;
        std::vector<double> x(s.d), one;
        for (int i = 0; i < 10000; ++i) {
            s.draw_features(x, r2);
            conditional_sample(s, x, 1, r2, one);
            pooled.push_back(one[0]);
        }
        // 1% critical value: 1.628 * sqrt(2 / n).
        EXPECT_LT(ks_statistic(ds.targets, pooled), 1.628 * std::sqrt(2.0 / 10000)) << k;
    }
}

TEST(Settings, TResidualsSymmetric) {
    const auto s = SimSetting::from_key("t_residuals", 1, 2);
    const std::vector<double> x{0.4, 0.0};
    RngStream r(7);
    auto v = conditional_sample(s, x, 100000, r);
    for (auto& y : v) y -= 0.8;
    // t_4 has infinite kurtosis, so symmetry is checked through quantiles.
    std::sort(v.begin(), v.end());
    EXPECT_NEAR(v[50000], 0.0, 0.02);
    EXPECT_NEAR(v[10000] + v[90000], 0.0, 0.04);
    EXPECT_NEAR(v[90000], 1.5332, 0.04);
}

TEST(Settings, NoncorrMeanIsOne) {
    const auto s = SimSetting::from_key("noncorr_heterosc", 1, 2);
    const std::vector<double> x{-1.2, 0.0};
    RngStream r(8);
    const auto m = moments(conditional_sample(s, x, 100000, r));
    EXPECT_NEAR(m.mean, 1.0, 3 * m.se_mean);
    EXPECT_NEAR(m.var, 0.25 + 2.4, 0.05);
}

TEST(OracleCutoff, HomoscedasticPerfectPredictor) {
    const auto s = SimSetting::from_key("homosc", 1, 2);
    const double z = oracle::abs_normal_quantile(0.9);
    for (double x0 : {-1.2, 0.0, 0.9}) {
        const std::vector<double> x{x0, 0.3};
        RngStream r(9);
        EXPECT_NEAR(oracle_cutoff(s, x, 0.1, s.conditional_mean(x), 100000, r), z, 0.03);
    }
}

TEST(OracleCutoff, LocationFamilyIsFlat) {
    const auto s = SimSetting::from_key("t_residuals", 1, 2);
    double lo = 1e9, hi = -1e9;
    for (int i = 0; i < 10; ++i) {
        const std::vector<double> x{-1.4 + 0.3 * i, 0.0};
        RngStream r(10, static_cast<std::uint64_t>(i));
        const double c = oracle_cutoff(s, x, 0.1, s.conditional_mean(x), 100000, r);
        lo = std::min(lo, c);
        hi = std::max(hi, c);
    }
    EXPECT_LT(hi - lo, 0.06);
}

TEST(Adversary, MixtureConstantVarianceMovingQuantiles) {
    const auto s = SimSetting::from_key("mixture_constvar", 1, 1);
    // Variance is s^2 everywhere.
    for (double x0 : {0.0, 0.5, 1.0}) {
        RngStream r(11);
        const auto m = moments(conditional_sample(s, std::vector<double>{x0}, 200000, r));
        const double se_var = m.var * std::sqrt(2.0 / 200000) * 1.2;
        EXPECT_NEAR(m.var, 4.0, 3 * se_var) << x0;
    }
    // Quantiles of |Y| move with x only slightly: the median rises by about
    // 0.024 across the box and the 0.9 quantile is flat.
    double prev = -1;
    for (int i = 0; i <= 10; ++i) {
        const double c = oracle::abs_mixture_quantile(0.5, i / 10.0, 2.0);
        EXPECT_GT(c, prev) << i;
        prev = c;
    }
    EXPECT_NEAR(oracle::abs_mixture_quantile(0.5, 0.0, 2.0), 2 * 0.6744897501960817, 1e-9);
    EXPECT_NEAR(oracle::abs_mixture_quantile(0.9, 0.0, 2.0), oracle::abs_mixture_quantile(0.9, 1.0, 2.0), 0.005);
    for (double x0 : {0.0, 0.5, 1.0})
        for (double alpha : {0.1, 0.5}) {
            RngStream r(12, static_cast<std::uint64_t>(x0 * 10));
            EXPECT_NEAR(oracle_cutoff(s, std::vector<double>{x0}, alpha, 0.0, 400000, r),
                        oracle::abs_mixture_quantile(1 - alpha, x0, 2.0), 0.012)
                << x0 << " " << alpha;
        }
}

TEST(Adversary, LaplaceBetaEqualMadDifferentQuantiles) {
    const auto s = SimSetting::from_key("laplace_beta", 1, 1);
    auto mad_at = [&](double x0, std::uint64_t seed) {
        RngStream r(seed);
        auto v = conditional_sample(s, std::vector<double>{x0}, 200000, r);
        const double mu = s.conditional_mean(std::vector<double>{x0});
        for (auto& y : v) y = std::abs(y - mu);
        return moments(v);
    };
    const auto left = mad_at(0.5, 15), right = mad_at(1.5, 16);
    EXPECT_NEAR(left.mean, beta_mad(2, 2), 3 * left.se_mean);
    EXPECT_NEAR(right.mean, beta_mad(2, 2), 3 * right.se_mean);
    EXPECT_NEAR(left.mean, right.mean, 3 * std::hypot(left.se_mean, right.se_mean));

    RngStream a(17), b(18);
    const double ql = oracle_cutoff(s, std::vector<double>{0.5}, 0.1, 0.0, 100000, a);
    const double qr = oracle_cutoff(s, std::vector<double>{1.5}, 0.1, 0.5, 100000, b);
    EXPECT_NEAR(ql, beta_mad(2, 2) * std::log(10.0), 0.01);  // Laplace: M ln(1 / alpha)
    EXPECT_GT(ql - qr, 0.05);
}

TEST(Adversary, BetaMadClosedForm) { EXPECT_DOUBLE_EQ(beta_mad(2, 2), 0.1875); }
