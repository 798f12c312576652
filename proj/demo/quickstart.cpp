// Fit a forest, calibrate three interval methods on held-out data and compare
// their coverage and width on a heteroscedastic sample.

#include <cstdio>

#include "clover/clover.hpp"

int main() {
    using namespace clover;
    const auto setting = SimSetting::from_key("heterosc", 1, 5);
    RngStream data(1);
    const auto train = sample(setting, 2000, data);
    const auto cal = sample(setting, 2000, data);
    const auto test = sample(setting, 2000, data);

    const auto forest = fit_forest(train.features, train.targets, {.n_estimators = 50}, RngStream(2));
    const auto base = BaseModels::from_forest(forest);

    RngStream r1(3), r2(4);
    const std::vector<std::pair<const char*, CalibratorModel>> methods = {
        {"reg-split", fit_reg_split(base, cal.features, cal.targets, 0.1)},
        {"locart", fit_locart(base, cal.features, cal.targets, 0.1, {}, r1)},
        {"loforest", fit_loforest(base, cal.features, cal.targets, 0.1, {.n_trees = 50}, r2)},
    };

    const auto sampler = [&](std::span<const double> x, std::size_t n, RngStream& r, std::vector<double>& out) {
        conditional_sample(setting, x, n, r, out);
    };
    std::printf("%-10s %8s %8s %8s\n", "method", "amc", "width", "ccad");
    for (const auto& [name, model] : methods) {
        const auto iv = predict_intervals(model, base, test.features);
        const auto s = smis_summary(iv, test.targets, 0.1);
        std::printf("%-10s %8.4f %8.4f %8.4f\n", name, marginal_coverage(iv, test.targets), s.mean_width_finite,
                    ccad(iv, sampler, test.features, 0.1, 500, RngStream(5)));
    }

    const auto x = test.features.row(0);
    const auto c = predict_interval(methods[2].second, base, x);
    std::printf("x1 = %.3f: [%.3f, %.3f]\n", x[0], c.lower, c.upper);
}
