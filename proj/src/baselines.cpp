#include "somno/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace somno::baselines {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void check_features(const std::vector<std::vector<double>>& X, const std::vector<int>& y) {
    if (X.empty()) throw DataError("classifier: empty training set");
    if (X.size() != y.size()) throw DimensionError("classifier: feature and label counts differ");
    const std::size_t dim = X[0].size();
    if (dim == 0) throw DimensionError("classifier: zero-dimensional features");
    for (const auto& row : X)
        if (row.size() != dim) throw DimensionError("classifier: ragged feature matrix");
    for (int label : y)
        if (label != 0 && label != 1)
            throw DataError("classifier: label " + std::to_string(label) + " out of range");
}

void check_query(const std::vector<double>& x, std::size_t dim) {
    if (x.size() != dim) throw DimensionError("classifier: query dimension mismatch");
}

}  // namespace

PsdEstimate welch_psd(const std::vector<double>& signal, double sample_rate, int segment_len,
                      double overlap) {
    if (sample_rate <= 0.0) throw ArgumentError("welch: sample rate must be positive");
    if (segment_len < 2) throw ArgumentError("welch: segment length must be at least 2");
    if (overlap < 0.0 || overlap >= 1.0) throw ArgumentError("welch: overlap must lie in [0, 1)");
    const int n = static_cast<int>(signal.size());
    if (n < segment_len)
        throw DimensionError("welch: signal of " + std::to_string(n) +
                             " points is shorter than one segment of " +
                             std::to_string(segment_len));

    const int hop = std::max(1, segment_len - static_cast<int>(overlap * segment_len));
    const int T = segment_len;
    std::vector<double> window(static_cast<std::size_t>(T));
    double u = 0.0;  // window power
    for (int t = 0; t < T; ++t) {
        window[static_cast<std::size_t>(t)] = 0.5 - 0.5 * std::cos(kTwoPi * t / T);  // periodic
        u += window[static_cast<std::size_t>(t)] * window[static_cast<std::size_t>(t)];
    }
    const double scale = 1.0 / (sample_rate * u);

    const int bins = T / 2 + 1;
    PsdEstimate out;
    out.frequencies.resize(static_cast<std::size_t>(bins));
    out.power.assign(static_cast<std::size_t>(bins), 0.0);
    for (int k = 0; k < bins; ++k)
        out.frequencies[static_cast<std::size_t>(k)] = sample_rate * k / T;

    std::vector<double> seg(static_cast<std::size_t>(T));
    int segments = 0;
    for (int start = 0; start + T <= n; start += hop) {
        double mean = 0.0;
        for (int t = 0; t < T; ++t) mean += signal[static_cast<std::size_t>(start + t)];
        mean /= T;
        for (int t = 0; t < T; ++t)
            seg[static_cast<std::size_t>(t)] =
                (signal[static_cast<std::size_t>(start + t)] - mean) *
                window[static_cast<std::size_t>(t)];

        for (int k = 0; k < bins; ++k) {
            double re = 0.0, im = 0.0;
            const double w = -kTwoPi * k / T;
            for (int t = 0; t < T; ++t) {
                re += seg[static_cast<std::size_t>(t)] * std::cos(w * t);
                im += seg[static_cast<std::size_t>(t)] * std::sin(w * t);
            }
            double p = (re * re + im * im) * scale;
            const bool is_edge = k == 0 || (T % 2 == 0 && k == T / 2);
            if (!is_edge) p *= 2.0;  // one-sided
            out.power[static_cast<std::size_t>(k)] += p;
        }
        segments += 1;
    }
    for (auto& p : out.power) p /= segments;
    return out;
}

BandPowerFeatures relative_band_powers(const PsdEstimate& psd) {
    if (psd.frequencies.size() != psd.power.size() || psd.frequencies.empty())
        throw DimensionError("bands: malformed spectrum");
    if (psd.frequencies.front() > 1.0 || psd.frequencies.back() < 30.0)
        throw DimensionError("bands: spectrum does not cover 1-30 Hz");

    BandPowerFeatures f;
    for (std::size_t i = 0; i < psd.frequencies.size(); ++i) {
        const double freq = psd.frequencies[i];
        const double p = psd.power[i];
        if (freq >= 1.0 && freq < 4.0) f.delta += p;
        else if (freq >= 4.0 && freq < 8.0) f.theta += p;
        else if (freq >= 8.0 && freq < 12.0) f.alpha += p;
        else if (freq >= 12.0 && freq <= 30.0) f.beta += p;
    }
    const double total = f.delta + f.theta + f.alpha + f.beta;
    if (total <= 0.0) throw DataError("bands: no power in 1-30 Hz, relative powers undefined");
    f.delta /= total;
    f.theta /= total;
    f.alpha /= total;
    f.beta /= total;
    return f;
}

BandPowerFeatures band_power_features(const std::vector<double>& signal, double sample_rate) {
    return relative_band_powers(welch_psd(signal, sample_rate, 128, 0.5));
}

std::pair<std::vector<std::vector<double>>, std::vector<int>> features_of(
    const data::LabeledSet& set) {
    std::vector<std::vector<double>> X;
    std::vector<int> y;
    X.reserve(set.samples.size());
    y.reserve(set.samples.size());
    for (const auto& s : set.samples) {
        const auto f = band_power_features(s.values).as_array();
        X.emplace_back(f.begin(), f.end());
        y.push_back(static_cast<int>(s.label));
    }
    return {std::move(X), std::move(y)};
}

void write_feature_csv(const data::LabeledSet& set, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os << "subject_id,label,delta,theta,alpha,beta\n";
    char buf[128];
    for (const auto& s : set.samples) {
        const auto f = band_power_features(s.values);
        std::snprintf(buf, sizeof buf, "%d,%d,%.9g,%.9g,%.9g,%.9g", s.subject_id,
                      static_cast<int>(s.label), f.delta, f.theta, f.alpha, f.beta);
        os << buf << '\n';
    }
    if (!os) throw DataError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------

namespace {

// Gaussian elimination with partial pivoting; A is dim x dim row-major.
std::vector<double> solve_linear(std::vector<double> A, std::vector<double> b) {
    const std::size_t d = b.size();
    for (std::size_t col = 0; col < d; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < d; ++r)
            if (std::fabs(A[r * d + col]) > std::fabs(A[pivot * d + col])) pivot = r;
        if (A[pivot * d + col] == 0.0) throw DataError("lda: singular covariance");
        if (pivot != col) {
            for (std::size_t c = 0; c < d; ++c) std::swap(A[col * d + c], A[pivot * d + c]);
            std::swap(b[col], b[pivot]);
        }
        const double inv = 1.0 / A[col * d + col];
        for (std::size_t r = col + 1; r < d; ++r) {
            const double factor = A[r * d + col] * inv;
            if (factor == 0.0) continue;
            for (std::size_t c = col; c < d; ++c) A[r * d + c] -= factor * A[col * d + c];
            b[r] -= factor * b[col];
        }
    }
    std::vector<double> x(d, 0.0);
    for (std::size_t r = d; r-- > 0;) {
        double acc = b[r];
        for (std::size_t c = r + 1; c < d; ++c) acc -= A[r * d + c] * x[c];
        x[r] = acc / A[r * d + r];
    }
    return x;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

}  // namespace

LdaModel lda_fit(const std::vector<std::vector<double>>& X, const std::vector<int>& y) {
    check_features(X, y);
    const std::size_t d = X[0].size();
    const std::size_t n = X.size();
    std::array<std::vector<double>, 2> mu{std::vector<double>(d, 0.0),
                                          std::vector<double>(d, 0.0)};
    std::array<int, 2> count{0, 0};
    for (std::size_t i = 0; i < n; ++i) {
        count[static_cast<std::size_t>(y[i])] += 1;
        for (std::size_t f = 0; f < d; ++f) mu[static_cast<std::size_t>(y[i])][f] += X[i][f];
    }
    if (count[0] == 0 || count[1] == 0) throw DataError("lda: both classes are required");
    for (int c = 0; c < 2; ++c)
        for (std::size_t f = 0; f < d; ++f)
            mu[static_cast<std::size_t>(c)][f] /= count[static_cast<std::size_t>(c)];

    // Pooled within-class covariance, normalized by N so duplicating the
    // training set leaves the model unchanged.
    std::vector<double> S(d * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& m = mu[static_cast<std::size_t>(y[i])];
        for (std::size_t a = 0; a < d; ++a) {
            const double da = X[i][a] - m[a];
            for (std::size_t b = 0; b < d; ++b) S[a * d + b] += da * (X[i][b] - m[b]);
        }
    }
    for (auto& v : S) v /= static_cast<double>(n);

    double trace = 0.0;
    for (std::size_t a = 0; a < d; ++a) trace += S[a * d + a];
    if (trace == 0.0) {
        std::fill(S.begin(), S.end(), 0.0);
        for (std::size_t a = 0; a < d; ++a) S[a * d + a] = 1.0;
    } else {
        const double ridge = 1e-6 * trace / static_cast<double>(d);
        for (std::size_t a = 0; a < d; ++a) S[a * d + a] += ridge;
    }

    std::vector<double> diff(d);
    std::vector<double> mid(d);
    for (std::size_t f = 0; f < d; ++f) {
        diff[f] = mu[0][f] - mu[1][f];
        mid[f] = 0.5 * (mu[0][f] + mu[1][f]);
    }
    LdaModel model;
    model.weights = solve_linear(std::move(S), std::move(diff));
    model.midpoint = std::move(mid);
    model.log_prior_ratio = std::log(static_cast<double>(count[0]) / count[1]);
    return model;
}

int lda_predict(const LdaModel& m, const std::vector<double>& x) {
    check_query(x, m.weights.size());
    // score > 0 favours class 0; the boundary itself goes to class 0.
    const double score = dot(m.weights, x) - dot(m.weights, m.midpoint) + m.log_prior_ratio;
    return score >= 0.0 ? 0 : 1;
}

LogRegModel logreg_fit(const std::vector<std::vector<double>>& X, const std::vector<int>& y) {
    check_features(X, y);
    const std::size_t d = X[0].size();
    const std::size_t n = X.size();
    constexpr double lambda = 1.0;
    constexpr double tol = 1e-6;
    constexpr int max_iter = 1000;

    double lipschitz = lambda;
    for (const auto& row : X) lipschitz += 0.25 * (dot(row, row) + 1.0);  // +1 for the intercept
    const double step = 1.0 / lipschitz;

    LogRegModel m;
    m.weights.assign(d, 0.0);
    std::vector<double> gw(d);
    while (m.iterations < max_iter) {
        std::fill(gw.begin(), gw.end(), 0.0);
        double gb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double target = y[i] == 1 ? 1.0 : -1.0;
            const double margin = target * (dot(m.weights, X[i]) + m.bias);
            const double coef = -target / (1.0 + std::exp(margin));
            for (std::size_t f = 0; f < d; ++f) gw[f] += coef * X[i][f];
            gb += coef;
        }
        for (std::size_t f = 0; f < d; ++f) gw[f] += lambda * m.weights[f];
        double norm_sq = gb * gb;
        for (double g : gw) norm_sq += g * g;
        m.grad_norm = std::sqrt(norm_sq);
        if (m.grad_norm <= tol) break;
        for (std::size_t f = 0; f < d; ++f) m.weights[f] -= step * gw[f];
        m.bias -= step * gb;
        m.iterations += 1;
    }
    return m;
}

double logreg_prob(const LogRegModel& m, const std::vector<double>& x) {
    check_query(x, m.weights.size());
    return 1.0 / (1.0 + std::exp(-(dot(m.weights, x) + m.bias)));
}

int logreg_predict(const LogRegModel& m, const std::vector<double>& x) {
    return logreg_prob(m, x) >= 0.5 ? 1 : 0;
}

GnbModel gnb_fit(const std::vector<std::vector<double>>& X, const std::vector<int>& y) {
    check_features(X, y);
    const std::size_t d = X[0].size();
    const std::size_t n = X.size();
    std::array<int, 2> count{0, 0};
    GnbModel m;
    for (int c = 0; c < 2; ++c) {
        m.mean[static_cast<std::size_t>(c)].assign(d, 0.0);
        m.var[static_cast<std::size_t>(c)].assign(d, 0.0);
    }
    for (std::size_t i = 0; i < n; ++i) {
        count[static_cast<std::size_t>(y[i])] += 1;
        for (std::size_t f = 0; f < d; ++f) m.mean[static_cast<std::size_t>(y[i])][f] += X[i][f];
    }
    if (count[0] == 0 || count[1] == 0) throw DataError("gnb: both classes are required");
    for (int c = 0; c < 2; ++c)
        for (std::size_t f = 0; f < d; ++f)
            m.mean[static_cast<std::size_t>(c)][f] /= count[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<std::size_t>(y[i]);
        for (std::size_t f = 0; f < d; ++f) {
            const double delta = X[i][f] - m.mean[c][f];
            m.var[c][f] += delta * delta;
        }
    }
    for (int c = 0; c < 2; ++c)
        for (std::size_t f = 0; f < d; ++f)
            m.var[static_cast<std::size_t>(c)][f] /= count[static_cast<std::size_t>(c)];

    // Smoothing keyed to the overall spread, so all-constant features still
    // yield finite likelihoods.
    double largest = 0.0;
    for (std::size_t f = 0; f < d; ++f) {
        double mean = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mean += X[i][f];
            sq += X[i][f] * X[i][f];
        }
        mean /= static_cast<double>(n);
        largest = std::max(largest, sq / static_cast<double>(n) - mean * mean);
    }
    const double eps = largest > 0.0 ? 1e-9 * largest : 1e-12;
    for (int c = 0; c < 2; ++c)
        for (auto& v : m.var[static_cast<std::size_t>(c)]) v += eps;

    for (int c = 0; c < 2; ++c)
        m.log_prior[static_cast<std::size_t>(c)] =
            std::log(static_cast<double>(count[static_cast<std::size_t>(c)]) / n);
    return m;
}

int gnb_predict(const GnbModel& m, const std::vector<double>& x) {
    check_query(x, m.mean[0].size());
    double best_score = 0.0;
    int best = 0;
    for (int c = 0; c < 2; ++c) {
        double score = m.log_prior[static_cast<std::size_t>(c)];
        for (std::size_t f = 0; f < x.size(); ++f) {
            const double v = m.var[static_cast<std::size_t>(c)][f];
            const double delta = x[f] - m.mean[static_cast<std::size_t>(c)][f];
            score += -0.5 * std::log(kTwoPi * v) - delta * delta / (2.0 * v);
        }
        if (c == 0 || score > best_score) {  // ties keep class 0
            best_score = score;
            best = c;
        }
    }
    return best;
}

int knn_predict(const std::vector<std::vector<double>>& X, const std::vector<int>& y,
                const std::vector<double>& x, int k) {
    check_features(X, y);
    check_query(x, X[0].size());
    if (k < 1) throw ArgumentError("knn: k must be positive");
    if (static_cast<std::size_t>(k) > X.size())
        throw ArgumentError("knn: k exceeds the training set size");

    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(X.size());
    for (std::size_t i = 0; i < X.size(); ++i) {
        double acc = 0.0;
        for (std::size_t f = 0; f < x.size(); ++f) {
            const double delta = X[i][f] - x[f];
            acc += delta * delta;
        }
        dist.emplace_back(acc, i);
    }
    // (distance, training index): equal distances keep insertion order.
    std::sort(dist.begin(), dist.end());
    int votes1 = 0;
    for (int i = 0; i < k; ++i) votes1 += y[dist[static_cast<std::size_t>(i)].second];
    return votes1 > k - votes1 ? 1 : 0;
}

Method method_from_name(const std::string& name) {
    if (name == "lda") return Method::Lda;
    if (name == "lr") return Method::LogReg;
    if (name == "gnb") return Method::Gnb;
    if (name == "knn") return Method::Knn;
    throw ArgumentError("unknown method '" + name + "'");
}

std::string method_name(Method m) {
    switch (m) {
        case Method::Lda: return "lda";
        case Method::LogReg: return "lr";
        case Method::Gnb: return "gnb";
        case Method::Knn: return "knn";
    }
    throw ArgumentError("unknown method value");
}

std::function<int(const std::vector<double>&)> fit_classifier(
    Method method, std::vector<std::vector<double>> X, std::vector<int> y, int knn_k) {
    switch (method) {
        case Method::Lda: {
            LdaModel m = lda_fit(X, y);
            return [m = std::move(m)](const std::vector<double>& x) { return lda_predict(m, x); };
        }
        case Method::LogReg: {
            LogRegModel m = logreg_fit(X, y);
            return
                [m = std::move(m)](const std::vector<double>& x) { return logreg_predict(m, x); };
        }
        case Method::Gnb: {
            GnbModel m = gnb_fit(X, y);
            return [m = std::move(m)](const std::vector<double>& x) { return gnb_predict(m, x); };
        }
        case Method::Knn: {
            return [X = std::move(X), y = std::move(y), knn_k](const std::vector<double>& x) {
                return knn_predict(X, y, x, knn_k);
            };
        }
    }
    throw ArgumentError("unknown method value");
}

}  // namespace somno::baselines
