#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "somno/data.hpp"
#include "somno/errors.hpp"

// Spectral features and the classical classifiers they feed.

namespace somno::baselines {

struct PsdEstimate {
    std::vector<double> frequencies;  // Hz, ascending, one-sided
    std::vector<double> power;        // density, same length
};

// Welch periodogram average: periodic Hann window, per-segment mean removal,
// one-sided density scaling. overlap is a fraction of segment_len.
PsdEstimate welch_psd(const std::vector<double>& signal, double sample_rate, int segment_len,
                      double overlap);

struct BandPowerFeatures {
    double delta = 0.0;  // [1, 4) Hz
    double theta = 0.0;  // [4, 8)
    double alpha = 0.0;  // [8, 12)
    double beta = 0.0;   // [12, 30]

    std::array<double, 4> as_array() const { return {delta, theta, alpha, beta}; }
};

// Band sums normalized by the four-band total, so the result sums to one.
BandPowerFeatures relative_band_powers(const PsdEstimate& psd);

// welch_psd at 1 Hz resolution (128-point segments, 50% overlap) followed by
// relative_band_powers.
BandPowerFeatures band_power_features(const std::vector<double>& signal,
                                      double sample_rate = data::kSampleRateHz);

// Feature matrix for a labeled set, one row per sample.
std::pair<std::vector<std::vector<double>>, std::vector<int>> features_of(
    const data::LabeledSet& set);

// subject_id,label,delta,theta,alpha,beta with a header row.
void write_feature_csv(const data::LabeledSet& set, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Classifiers. All of them are deterministic; every tie resolves to class 0.

struct LdaModel {
    std::vector<double> weights;   // S^-1 (mu0 - mu1)
    std::vector<double> midpoint;  // (mu0 + mu1) / 2
    double log_prior_ratio = 0.0;  // log(pi0 / pi1)
};

// Pooled within-class covariance (normalized by N) with a relative ridge of
// 1e-6 * trace / dim; identity fallback when the trace is zero.
LdaModel lda_fit(const std::vector<std::vector<double>>& X, const std::vector<int>& y);
int lda_predict(const LdaModel& m, const std::vector<double>& x);

struct LogRegModel {
    std::vector<double> weights;
    double bias = 0.0;
    int iterations = 0;
    double grad_norm = 0.0;
};

// L2-penalized logistic regression (strength 1.0 on the weights, intercept
// free), full-batch gradient descent with step 1/L, stopping at gradient norm
// 1e-6 or 1000 iterations.
LogRegModel logreg_fit(const std::vector<std::vector<double>>& X, const std::vector<int>& y);
double logreg_prob(const LogRegModel& m, const std::vector<double>& x);  // P(class 1)
int logreg_predict(const LogRegModel& m, const std::vector<double>& x);  // p >= 0.5 -> 1

struct GnbModel {
    std::array<double, 2> log_prior{};
    std::array<std::vector<double>, 2> mean;
    std::array<std::vector<double>, 2> var;  // smoothed
};

// Gaussian naive Bayes with variance smoothing of 1e-9 times the largest
// overall feature variance (1e-12 when every feature is constant).
GnbModel gnb_fit(const std::vector<std::vector<double>>& X, const std::vector<int>& y);
int gnb_predict(const GnbModel& m, const std::vector<double>& x);

// Euclidean k-nearest-neighbour majority vote. Distance ties keep training
// order; vote ties resolve to class 0.
int knn_predict(const std::vector<std::vector<double>>& X, const std::vector<int>& y,
                const std::vector<double>& x, int k = 5);

enum class Method : std::uint8_t { Lda, LogReg, Gnb, Knn };

Method method_from_name(const std::string& name);  // lda, lr, gnb, knn
std::string method_name(Method m);

// Fits on (X, y) and returns a predictor closure.
std::function<int(const std::vector<double>&)> fit_classifier(
    Method method, std::vector<std::vector<double>> X, std::vector<int> y, int knn_k = 5);

}  // namespace somno::baselines
