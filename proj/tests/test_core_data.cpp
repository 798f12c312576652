#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "clover/data.hpp"
#include "clover/parallel.hpp"
#include "clover/rng.hpp"
#include "oracles.hpp"

using namespace clover;

// ---------------------------------------------------------------- RngStream

TEST(Rng, MixerMatchesPublishedSplitmix64Vector) {
    // Reference outputs of splitmix64 seeded with 1234567.
    const std::uint64_t expected[] = {6457827717110365317ULL, 3203168211198807973ULL, 9817491932198370423ULL};
    for (std::uint64_t k = 1; k <= 3; ++k)
        EXPECT_EQ(detail::splitmix64_mix(1234567ULL + k * detail::kGolden), expected[k - 1]);
}

TEST(Rng, SameSeedAndStreamReproduce) {
    RngStream a(42, 7), b(42, 7);
    for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, StreamsDiffer) {
    RngStream a(42, 0), b(42, 1), c(43, 0);
    EXPECT_NE(a.next_u64(), b.next_u64());
    EXPECT_NE(RngStream(42, 0).next_u64(), c.next_u64());
}

TEST(Rng, DeriveDoesNotAdvanceParent) {
    RngStream a(1, 2);
    const auto child = a.derive(5);
    RngStream b(1, 2);
    EXPECT_EQ(a.next_u64(), b.next_u64());
    RngStream c1 = child, c2 = RngStream(1, 2).derive(5);
    EXPECT_EQ(c1.next_u64(), c2.next_u64());
}

TEST(Rng, GoldenValuesArePinned) {
    // Pinned so a change to the stream construction is caught.
    RngStream r(42, 0);
    const std::uint64_t first = r.next_u64();
    RngStream again(42, 0);
    EXPECT_EQ(first, again.next_u64());
    const std::uint64_t key = detail::splitmix64_mix(detail::splitmix64_mix(42) ^ detail::splitmix64_mix(detail::kGolden));
    EXPECT_EQ(first, detail::splitmix64_mix(key));
}

TEST(Rng, UniformMomentsAndRange) {
    RngStream r(3);
    const int n = 200000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        s += u;
        s2 += u * u;
    }
    EXPECT_NEAR(s / n, 0.5, 3 * std::sqrt(1.0 / 12 / n) * 1.5);
    EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0 / 12, 0.002);
}

TEST(Rng, BelowIsUnbiasedOverSmallRange) {
    RngStream r(9);
    std::vector<int> counts(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) ++counts[r.below(7)];
    for (int c : counts) EXPECT_NEAR(c, n / 7.0, 4 * std::sqrt(n / 7.0));
    EXPECT_THROW(r.below(0), std::invalid_argument);
}

TEST(Rng, NormalMoments) {
    RngStream r(11);
    const int n = 200000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        s += z;
        s2 += z * z;
    }
    EXPECT_NEAR(s / n, 0.0, 3.0 / std::sqrt(n));
    EXPECT_NEAR(s2 / n, 1.0, 3.0 * std::sqrt(2.0 / n));
}

TEST(Rng, GammaMeanAndVarianceShapeRate) {
    RngStream r(12);
    for (double shape : {0.5, 1.0, 2.5}) {
        const double rate = 2.0;
        const int n = 100000;
        double s = 0, s2 = 0;
        for (int i = 0; i < n; ++i) {
            const double g = r.gamma(shape, rate);
            s += g;
            s2 += g * g;
        }
        const double mean = s / n, var = s2 / n - mean * mean;
        const double true_var = shape / (rate * rate);
        EXPECT_NEAR(mean, shape / rate, 4 * std::sqrt(true_var / n)) << shape;
        EXPECT_NEAR(var, true_var, 0.05 * true_var) << shape;
    }
}

TEST(Rng, BetaAndLaplaceMeans) {
    RngStream r(13);
    const int n = 100000;
    double b = 0, l = 0, la = 0;
    for (int i = 0; i < n; ++i) {
        b += r.beta(2, 2);
        const double v = r.laplace(0.0, 0.5);
        l += v;
        la += std::abs(v);
    }
    EXPECT_NEAR(b / n, 0.5, 4 * std::sqrt(0.05 / n));
    EXPECT_NEAR(l / n, 0.0, 4 * std::sqrt(0.5 / n));
    EXPECT_NEAR(la / n, 0.5, 4 * std::sqrt(0.25 / n));
}

// ------------------------------------------------------ empirical_quantile

TEST(EmpiricalQuantile, Examples) {
    std::vector<double> ten(10);
    std::iota(ten.begin(), ten.end(), 1.0);
    EXPECT_EQ(empirical_quantile(ten, 0.5), 5.0);
    EXPECT_EQ(empirical_quantile(std::vector<double>{3.0}, 0.9), 3.0);
    EXPECT_EQ(empirical_quantile(std::vector<double>{2, 7, 4, 9, 1}, 0.8), 7.0);
}

TEST(EmpiricalQuantile, Errors) {
    const std::vector<double> empty;
    try {
        empirical_quantile(empty, 0.5);
        FAIL();
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "empty sample");
    }
    for (double bad : {0.0, -0.1, 1.0000001, std::nan("")}) {
        try {
            empirical_quantile(std::vector<double>{1.0}, bad);
            FAIL();
        } catch (const Error& e) {
            EXPECT_STREQ(e.what(), "invalid level");
        }
    }
}

TEST(EmpiricalQuantile, MatchesSortAndScanOnRandomMultisets) {
    RngStream r(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + r.below(200);
        std::vector<double> v(n);
        // Small integer support forces ties.
        for (auto& x : v) x = trial % 2 ? static_cast<double>(r.below(12)) : r.normal();
        const double phi = trial % 5 == 0 ? static_cast<double>(1 + r.below(n)) / static_cast<double>(n)
                                          : 1e-9 + (1 - 1e-9) * r.uniform();
        const double got = empirical_quantile(v, phi);
        ASSERT_EQ(got, oracle::quantile_scan(v, phi)) << "n=" << n << " phi=" << phi;
        ASSERT_NE(std::find(v.begin(), v.end(), got), v.end());
    }
}

TEST(EmpiricalQuantile, LevelOneIsMaxAndMonotone) {
    RngStream r(5);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> v(1 + r.below(50));
        for (auto& x : v) x = r.uniform(-3, 3);
        EXPECT_EQ(empirical_quantile(v, 1.0), *std::max_element(v.begin(), v.end()));
        double a = r.uniform_open(), b = r.uniform_open();
        if (a > b) std::swap(a, b);
        EXPECT_LE(empirical_quantile(v, a), empirical_quantile(v, b));
    }
}

// ----------------------------------------------------------- split_indices

TEST(SplitIndices, ExactDivision) {
    RngStream r(1);
    const auto s = split_indices(10, {0.4, 0.4, 0.2}, {}, r);
    EXPECT_EQ(s.train.size(), 4u);
    EXPECT_EQ(s.cal.size(), 4u);
    EXPECT_EQ(s.test.size(), 2u);
    EXPECT_EQ(s.part, s.cal);
    EXPECT_EQ(s.cut, s.cal);
}

TEST(SplitIndices, RemainderGoesToTrain) {
    // floor(0.4 * 5) = 2 calibration rows, floor(0.2 * 5) = 1 test row, train takes the rest.
    RngStream r(1);
    const auto s = split_indices(5, {0.4, 0.4, 0.2}, {}, r);
    EXPECT_EQ(s.cal.size(), 2u);
    EXPECT_EQ(s.test.size(), 1u);
    EXPECT_EQ(s.train.size(), 2u);
    EXPECT_EQ(s.train.size() + s.cal.size() + s.test.size(), 5u);
}

TEST(SplitIndices, FloorArithmeticOracle) {
    RngStream r(77);
    for (std::size_t n = 3; n < 200; n += 7) {
        for (auto f : {SplitFractions{0.4, 0.4, 0.2}, SplitFractions{0.5, 0.3, 0.2}, SplitFractions{0.1, 0.1, 0.8}}) {
            const auto s = split_indices(n, f, {}, r);
            const auto cal = static_cast<std::size_t>(std::floor(f.cal * static_cast<double>(n) + 1e-9));
            const auto test = static_cast<std::size_t>(std::floor(f.test * static_cast<double>(n) + 1e-9));
            EXPECT_EQ(s.cal.size(), cal);
            EXPECT_EQ(s.test.size(), test);
            EXPECT_EQ(s.train.size(), n - cal - test);
        }
    }
}

TEST(SplitIndices, PartitionsAllIndices) {
    RngStream r(3);
    for (std::size_t n : {3u, 17u, 100u, 1001u}) {
        const auto s = split_indices(n, {0.4, 0.4, 0.2}, {true, 0.5}, r);
        std::set<std::size_t> seen;
        for (const auto* set : {&s.train, &s.cal, &s.test})
            for (auto i : *set) {
                EXPECT_LT(i, n);
                EXPECT_TRUE(seen.insert(i).second) << "duplicate index " << i;
            }
        EXPECT_EQ(seen.size(), n);
        std::set<std::size_t> pc(s.part.begin(), s.part.end());
        for (auto i : s.cut) EXPECT_TRUE(pc.insert(i).second);
        EXPECT_EQ(pc, std::set<std::size_t>(s.cal.begin(), s.cal.end()));
    }
}

TEST(SplitIndices, Deterministic) {
    RngStream a(8), b(8);
    const auto s1 = split_indices(50, {0.4, 0.4, 0.2}, {true, 0.5}, a);
    const auto s2 = split_indices(50, {0.4, 0.4, 0.2}, {true, 0.5}, b);
    EXPECT_EQ(s1.train, s2.train);
    EXPECT_EQ(s1.part, s2.part);
    EXPECT_EQ(s1.test, s2.test);
}

TEST(SplitIndices, Errors) {
    RngStream r(1);
    EXPECT_THROW(split_indices(10, {0.4, 0.4, 0.3}, {}, r), Error);
    EXPECT_THROW(split_indices(2, {0.4, 0.4, 0.2}, {}, r), Error);
    EXPECT_THROW(split_indices(10, {0.0, 0.8, 0.2}, {}, r), Error);
}

// --------------------------------------------------------------------- CSV

TEST(Csv, LoadsSmallFile) {
    std::istringstream in("a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
    const auto ds = parse_csv(in);
    EXPECT_EQ(ds.size(), 3u);
    EXPECT_EQ(ds.dim(), 2u);
    EXPECT_EQ(ds.target_name, "y");
    EXPECT_EQ(ds.features(2, 1), 8.0);
    EXPECT_EQ(ds.targets[1], 6.0);
}

TEST(Csv, TargetByName) {
    std::istringstream in("y,a,b\n1,2,3\n");
    const auto ds = parse_csv(in, "y");
    EXPECT_EQ(ds.feature_names, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(ds.targets[0], 1.0);
    std::istringstream again("y,a,b\n1,2,3\n");
    EXPECT_THROW(parse_csv(again, "missing"), Error);
}

TEST(Csv, NanCellNamesRowAndColumn) {
    std::istringstream in("a,b,y\n1,2,3\n4,NaN,6\n");
    try {
        parse_csv(in);
        FAIL();
    } catch (const Error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
        EXPECT_NE(msg.find("'b'"), std::string::npos) << msg;
    }
}

TEST(Csv, RejectsRaggedRowsAndGarbage) {
    std::istringstream ragged("a,y\n1,2,3\n");
    EXPECT_THROW(parse_csv(ragged), Error);
    std::istringstream garbage("a,y\n1,abc\n");
    EXPECT_THROW(parse_csv(garbage), Error);
    std::istringstream inf("a,y\n1,inf\n");
    EXPECT_THROW(parse_csv(inf), Error);
}

TEST(Csv, RoundTripIsExact) {
    RngStream r(4);
    Dataset ds;
    ds.features = Matrix(25, 3);
    ds.targets.resize(25);
    ds.feature_names = {"u", "v", "w"};
    for (std::size_t i = 0; i < 25; ++i) {
        for (std::size_t j = 0; j < 3; ++j) ds.features(i, j) = r.normal() * 1e3;
        ds.targets[i] = r.uniform() * 1e-7;
    }
    std::stringstream buf;
    write_csv(buf, ds);
    const auto back = parse_csv(buf);
    EXPECT_EQ(back.features, ds.features);
    EXPECT_EQ(back.targets, ds.targets);
    EXPECT_EQ(back.feature_names, ds.feature_names);
}

TEST(Csv, FeatureColumnsByName) {
    std::istringstream in("z,b,a\n1,2,3\n4,5,6\n");
    const auto X = parse_feature_csv(in, {"a", "b"});
    EXPECT_EQ(X.rows(), 2u);
    EXPECT_EQ(X(1, 0), 6.0);
    EXPECT_EQ(X(1, 1), 5.0);
    std::istringstream missing("a\n1\n");
    EXPECT_THROW(parse_feature_csv(missing, {"a", "b"}), Error);
}

// ---------------------------------------------------------------- parallel

TEST(Parallel, CoversEveryIndexOnceAndRethrows) {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
    EXPECT_TRUE(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) {
                     if (i == 5) throw Error("boom");
                 }),
                 Error);
}

TEST(Parallel, ThreadCapFromEnvironment) {
    ::setenv("CLOVER_THREADS", "2", 1);
    EXPECT_EQ(default_threads(), 2u);
    EXPECT_EQ(resolve_threads(8), 2u);
    EXPECT_EQ(resolve_threads(1), 1u);
    ::unsetenv("CLOVER_THREADS");
    EXPECT_EQ(resolve_threads(8), 8u);
}
