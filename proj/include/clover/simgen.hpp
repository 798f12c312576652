#pragma once

/// Synthetic data-generating processes with known conditional laws, used for
/// benchmarking and as ground truth for conditional-coverage checks.
///
/// Settings (x̄ is the mean of the first p coordinates, features i.i.d.
/// Uniform(-1.5, 1.5) unless noted):
///   homosc            Y ~ N(2x̄, 1)
///   heterosc          Y ~ N(2x̄, 0.25 + 2|x̄|)              (second argument is the variance)
///   asym / asym2      Y = 2x̄ + Gamma(shape = rate = 1 + γ|x̄|), γ = 0.6 / 1.5
///   t_residuals       Y = 2x̄ + t_4
///   noncorr_heterosc  Y ~ N(1, 0.25 + |2x̄|)
///   laplace_beta      d = 1, x ~ U(0, 2): Laplace(0, M) on [0, 1), Beta(2, 2) on [1, 2]
///   mixture_constvar  d = 1, x ~ U(0, 1): 0.5 N(-x, s² - x²) + 0.5 N(x, s² - x²)

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "clover/data.hpp"
#include "clover/rng.hpp"

namespace clover {

enum class SettingKind {
    homoscedastic,
    heteroscedastic,
    asymmetric,
    t_residuals,
    noncorr_heteroscedastic,
    laplace_beta,
    mixture_constvar,
};

/// Mean absolute deviation of Beta(a, b) about its mean; Laplace(0, M) with this
/// scale has the same MAD.
inline double beta_mad(double a, double b) {
    const double beta_fn = std::exp(std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
    return 2.0 * std::pow(a, a) * std::pow(b, b) / (beta_fn * std::pow(a + b, a + b + 1.0));
}

struct SimSetting {
    SettingKind kind = SettingKind::homoscedastic;
    std::size_t d = 20;
    std::size_t p = 1;
    double gamma = 0.6;   // asymmetric only
    double s = 2.0;       // mixture_constvar only
    double t_dof = 4.0;   // t_residuals only

    static SimSetting from_key(const std::string& key, std::size_t p = 1, std::size_t d = 20) {
        SimSetting st;
        st.p = p;
        st.d = d;
        if (key == "homosc")
            st.kind = SettingKind::homoscedastic;
        else if (key == "heterosc")
            st.kind = SettingKind::heteroscedastic;
        else if (key == "asym") {
            st.kind = SettingKind::asymmetric;
            st.gamma = 0.6;
        } else if (key == "asym2") {
            st.kind = SettingKind::asymmetric;
            st.gamma = 1.5;
        } else if (key == "t_residuals")
            st.kind = SettingKind::t_residuals;
        else if (key == "noncorr_heterosc")
            st.kind = SettingKind::noncorr_heteroscedastic;
        else if (key == "laplace_beta")
            st.kind = SettingKind::laplace_beta;
        else if (key == "mixture_constvar")
            st.kind = SettingKind::mixture_constvar;
        else
            throw Error("unknown setting '" + key + "'");
        if (st.univariate()) st.d = st.p = 1;
        st.validate();
        return st;
    }

    std::string key() const {
        switch (kind) {
            case SettingKind::homoscedastic: return "homosc";
            case SettingKind::heteroscedastic: return "heterosc";
            case SettingKind::asymmetric: return gamma == 1.5 ? "asym2" : "asym";
            case SettingKind::t_residuals: return "t_residuals";
            case SettingKind::noncorr_heteroscedastic: return "noncorr_heterosc";
            case SettingKind::laplace_beta: return "laplace_beta";
            case SettingKind::mixture_constvar: return "mixture_constvar";
        }
        return {};
    }

    bool univariate() const { return kind == SettingKind::laplace_beta || kind == SettingKind::mixture_constvar; }

    void validate() const {
        if (p < 1 || p > d) throw Error("setting needs 1 <= p <= d");
        if (univariate() && d != 1) throw Error("setting '" + key() + "' is univariate");
        if (kind == SettingKind::mixture_constvar && !(s > 1.0)) throw Error("mixture needs s > 1");
    }

    double feature_low() const {
        return kind == SettingKind::laplace_beta || kind == SettingKind::mixture_constvar ? 0.0 : -1.5;
    }
    double feature_high() const {
        if (kind == SettingKind::laplace_beta) return 2.0;
        if (kind == SettingKind::mixture_constvar) return 1.0;
        return 1.5;
    }

    double relevant_mean(std::span<const double> x) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < p; ++i) acc += x[i];
        return acc / static_cast<double>(p);
    }

    /// E[Y | X = x].
    double conditional_mean(std::span<const double> x) const {
        const double xb = relevant_mean(x);
        switch (kind) {
            case SettingKind::homoscedastic:
            case SettingKind::heteroscedastic:
            case SettingKind::t_residuals: return 2.0 * xb;
            case SettingKind::asymmetric: return 2.0 * xb + 1.0;
            case SettingKind::noncorr_heteroscedastic: return 1.0;
            case SettingKind::laplace_beta: return x[0] < 1.0 ? 0.0 : 0.5;
            case SettingKind::mixture_constvar: return 0.0;
        }
        return 0.0;
    }

    double draw(std::span<const double> x, RngStream& rng) const {
        const double xb = relevant_mean(x);
        switch (kind) {
            case SettingKind::homoscedastic: return rng.normal(2.0 * xb, 1.0);
            case SettingKind::heteroscedastic: return rng.normal(2.0 * xb, std::sqrt(0.25 + 2.0 * std::abs(xb)));
            case SettingKind::asymmetric: {
                const double a = 1.0 + gamma * std::abs(xb);
                return 2.0 * xb + rng.gamma(a, a);
            }
            case SettingKind::t_residuals: return 2.0 * xb + rng.student_t(t_dof);
            case SettingKind::noncorr_heteroscedastic: return rng.normal(1.0, std::sqrt(0.25 + std::abs(2.0 * xb)));
            case SettingKind::laplace_beta:
                return x[0] < 1.0 ? rng.laplace(0.0, beta_mad(2.0, 2.0)) : rng.beta(2.0, 2.0);
            case SettingKind::mixture_constvar: {
                const double c = x[0];
                const double sd = std::sqrt(s * s - c * c);
                const double centre = rng.uniform() < 0.5 ? -c : c;
                return rng.normal(centre, sd);
            }
        }
        return 0.0;
    }

    void draw_features(std::span<double> x, RngStream& rng) const {
        for (auto& v : x) v = rng.uniform(feature_low(), feature_high());
    }
};

/// n i.i.d. rows: features first, then the response from the conditional law.
inline Dataset sample(const SimSetting& setting, std::size_t n, RngStream& rng) {
    setting.validate();
    Dataset ds;
    ds.features = Matrix(n, setting.d);
    ds.targets.resize(n);
    ds.feature_names = default_feature_names(setting.d);
    for (std::size_t i = 0; i < n; ++i) {
        auto x = ds.features.row(i);
        setting.draw_features(x, rng);
        ds.targets[i] = setting.draw(x, rng);
    }
    return ds;
}

inline void conditional_sample(const SimSetting& setting, std::span<const double> x, std::size_t count,
                               RngStream& rng, std::vector<double>& out) {
    out.resize(count);
    for (auto& v : out) v = setting.draw(x, rng);
}

inline std::vector<double> conditional_sample(const SimSetting& setting, std::span<const double> x,
                                              std::size_t count, RngStream& rng) {
    std::vector<double> out;
    conditional_sample(setting, x, count, rng, out);
    return out;
}

/// Monte Carlo stand-in for the oracle cutoff at x: the empirical (1 - alpha)
/// quantile of |Y - prediction| over B_y conditional draws.
inline double oracle_cutoff(const SimSetting& setting, std::span<const double> x, double alpha, double prediction,
                            std::size_t B_y, RngStream& rng) {
    auto draws = conditional_sample(setting, x, B_y, rng);
    for (auto& v : draws) v = std::abs(v - prediction);
    return empirical_quantile(draws, 1.0 - alpha);
}

}  // namespace clover
