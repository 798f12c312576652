#include <gtest/gtest.h>

#include <algorithm>

#include "clover/forest.hpp"

using namespace clover;

namespace {

struct Sample {
    Matrix X;
    std::vector<double> y;
};

Sample noisy_line(std::size_t n, std::uint64_t seed) {
    RngStream r(seed);
    Sample s{Matrix(n, 3), std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < 3; ++j) s.X(i, j) = r.uniform(-1, 1);
        s.y[i] = 3 * s.X(i, 0) + r.normal();
    }
    return s;
}

std::vector<std::vector<double>> probe_grid() {
    std::vector<std::vector<double>> g;
    for (int i = 0; i < 25; ++i) g.push_back({-1 + i / 12.0, 0.3, -0.2});
    return g;
}

}  // namespace

TEST(Forest, SingleTreeWithoutBootstrapEqualsTree) {
    const auto s = noisy_line(300, 1);
    ForestParams p{.n_estimators = 1, .tree = {.min_samples_split = 10}, .bootstrap = false};
    const auto f = fit_forest(s.X, s.y, p, RngStream(4));
    const auto t = fit_tree(s.X, s.y, p.tree);
    for (const auto& x : probe_grid()) {
        EXPECT_EQ(f.predict(x), t.predict(x));
        EXPECT_EQ(f.prediction_variance(x), 0.0);
    }
}

TEST(Forest, ConstantResponse) {
    auto s = noisy_line(200, 2);
    std::fill(s.y.begin(), s.y.end(), 2.5);
    const auto f = fit_forest(s.X, s.y, {.n_estimators = 20}, RngStream(1));
    for (const auto& x : probe_grid()) {
        EXPECT_EQ(f.predict(x), 2.5);
        EXPECT_EQ(f.prediction_variance(x), 0.0);
    }
}

TEST(Forest, DeterministicAcrossRunsAndThreads) {
    const auto s = noisy_line(400, 3);
    ForestParams p{.n_estimators = 12};
    const auto a = fit_forest(s.X, s.y, p, RngStream(9), 1);
    const auto b = fit_forest(s.X, s.y, p, RngStream(9), 1);
    const auto c = fit_forest(s.X, s.y, p, RngStream(9), 4);
    for (const auto& x : probe_grid()) {
        EXPECT_EQ(a.predict(x), b.predict(x));
        EXPECT_EQ(a.predict(x), c.predict(x));
        EXPECT_EQ(a.prediction_variance(x), c.prediction_variance(x));
    }
    const auto d = fit_forest(s.X, s.y, p, RngStream(10), 1);
    EXPECT_NE(a.predict(probe_grid()[3]), d.predict(probe_grid()[3]));
}

TEST(Forest, BootstrapShape) {
    const auto s = noisy_line(150, 4);
    const auto f = fit_forest(s.X, s.y, {.n_estimators = 5}, RngStream(2));
    ASSERT_EQ(f.bootstrap_indices().size(), 5u);
    for (const auto& idx : f.bootstrap_indices()) {
        EXPECT_EQ(idx.size(), 150u);
        EXPECT_TRUE(std::all_of(idx.begin(), idx.end(), [](std::size_t i) { return i < 150; }));
    }
    EXPECT_NE(f.bootstrap_indices()[0], f.bootstrap_indices()[1]);
}

TEST(Forest, EmptyDataThrows) {
    Matrix X(0, 2);
    std::vector<double> y;
    EXPECT_THROW(fit_forest(X, y, {}, RngStream(1)), Error);
}

TEST(Moments, TwoValueVariance) {
    std::vector<double> v{1.0, 3.0};
    const auto m = order_invariant_moments(v);
    EXPECT_EQ(m.mean, 2.0);
    EXPECT_EQ(m.variance, 1.0);
}

TEST(Moments, PermutationInvariantAndNonNegative) {
    RngStream r(5);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> v(1 + r.below(100));
        for (auto& x : v) x = r.normal() * 1e3 + 7;
        auto w = v;
        std::shuffle(w.begin(), w.end(), r);
        const auto a = order_invariant_moments(v);
        const auto b = order_invariant_moments(w);
        EXPECT_EQ(a.mean, b.mean);
        EXPECT_EQ(a.variance, b.variance);
        EXPECT_GE(a.variance, 0.0);
    }
    std::vector<double> same(17, 0.1);
    EXPECT_EQ(order_invariant_moments(same).variance, 0.0);
    EXPECT_EQ(order_invariant_moments(same).mean, 0.1);
}

TEST(Forest, TreeOrderDoesNotMatter) {
    const auto s = noisy_line(300, 6);
    const auto f = fit_forest(s.X, s.y, {.n_estimators = 9}, RngStream(3));
    auto trees = f.trees();
    std::reverse(trees.begin(), trees.end());
    const RandomForestRegressor g(f.params(), trees);
    for (const auto& x : probe_grid()) {
        EXPECT_EQ(f.predict(x), g.predict(x));
        EXPECT_EQ(f.prediction_variance(x), g.prediction_variance(x));
    }
}
