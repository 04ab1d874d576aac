#include "somno/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <thread>

#include <json.hpp>

#include "somno/rng.hpp"
#include "somno/svg.hpp"

namespace somno::eval {

std::vector<FoldSpec> loso_split(const data::LabeledSet& set, int repeats,
                                 std::uint64_t master_seed) {
    if (repeats < 1) throw ArgumentError("split: need at least one repeat");
    const std::vector<int> subjects = set.subject_ids();
    if (subjects.size() < 2)
        throw DataError("split: leave-one-subject-out needs at least 2 subjects");

    std::vector<FoldSpec> folds;
    folds.reserve(static_cast<std::size_t>(repeats) * subjects.size());
    for (int r = 0; r < repeats; ++r) {
        for (int subject : subjects) {
            FoldSpec f;
            f.test_subject = subject;
            for (int other : subjects)
                if (other != subject) f.train_subjects.push_back(other);
            f.repeat_index = r;
            f.seed = rng::mix(rng::mix(master_seed, static_cast<std::uint64_t>(r) + 1),
                              static_cast<std::uint64_t>(subject));
            folds.push_back(std::move(f));
        }
    }
    return folds;
}

double& AccuracyGrid::at(int subject_idx, int repeat, int epoch) {
    return acc[(static_cast<std::size_t>(subject_idx) * repeats + repeat) * epochs + epoch];
}

double AccuracyGrid::at(int subject_idx, int repeat, int epoch) const {
    return acc[(static_cast<std::size_t>(subject_idx) * repeats + repeat) * epochs + epoch];
}

double AccuracyGrid::mean_at_epoch(int epoch) const {
    double sum = 0.0;
    for (std::size_t s = 0; s < subjects.size(); ++s)
        for (int r = 0; r < repeats; ++r) sum += at(static_cast<int>(s), r, epoch);
    return sum / (static_cast<double>(subjects.size()) * repeats);
}

double AccuracyGrid::stderr_at_epoch(int epoch) const {
    const std::size_t n = subjects.size() * static_cast<std::size_t>(repeats);
    if (n < 2) return 0.0;
    const double mean = mean_at_epoch(epoch);
    double sq = 0.0;
    for (std::size_t s = 0; s < subjects.size(); ++s)
        for (int r = 0; r < repeats; ++r) {
            const double d = at(static_cast<int>(s), r, epoch) - mean;
            sq += d * d;
        }
    return std::sqrt(sq / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
}

std::vector<double> AccuracyGrid::subject_means(int epoch) const {
    std::vector<double> means(subjects.size(), 0.0);
    for (std::size_t s = 0; s < subjects.size(); ++s) {
        double sum = 0.0;
        for (int r = 0; r < repeats; ++r) sum += at(static_cast<int>(s), r, epoch);
        means[s] = sum / repeats;
    }
    return means;
}

int AccuracyGrid::best_epoch() const {
    int best = 0;
    double best_mean = -1.0;
    for (int e = 0; e < epochs; ++e) {
        const double m = mean_at_epoch(e);
        if (m > best_mean) {  // strict: ties keep the earliest epoch
            best_mean = m;
            best = e;
        }
    }
    return best;
}

namespace {

double bundle_accuracy(const std::vector<data::EegSample>& bundle,
                       const model::ModelParams& params, const model::ModelConfig& cfg) {
    const model::BundlePrediction pred = model::predict_bundle(bundle, params, cfg);
    int correct = 0;
    for (std::size_t i = 0; i < bundle.size(); ++i)
        if (pred.labels[i] == static_cast<int>(bundle[i].label)) correct += 1;
    return static_cast<double>(correct) / static_cast<double>(bundle.size());
}

}  // namespace

CnnExperimentResult run_cnn_experiment(const data::LabeledSet& set,
                                       const ExperimentOptions& options) {
    if (options.jobs < 1) throw ArgumentError("experiment: jobs must be positive");
    CnnExperimentResult res;
    res.folds = loso_split(set, options.repeats, options.master_seed);

    res.grid.subjects = set.subject_ids();
    res.grid.repeats = options.repeats;
    res.grid.epochs = options.train.epochs;
    res.grid.acc.assign(res.grid.subjects.size() * static_cast<std::size_t>(options.repeats) *
                            options.train.epochs,
                        0.0);
    if (options.keep_final_params)
        res.final_params.resize(res.folds.size());

    std::map<int, int> subject_idx;
    for (std::size_t s = 0; s < res.grid.subjects.size(); ++s)
        subject_idx[res.grid.subjects[s]] = static_cast<int>(s);

    // Pre-split per subject so each fold assembles its sets by reference.
    std::map<int, std::vector<int>> by_subject;
    for (int subject : res.grid.subjects) by_subject[subject] = set.indices_of_subject(subject);

    auto run_fold = [&](std::size_t fi) {
        const FoldSpec& fold = res.folds[fi];

        data::LabeledSet train_set;
        for (int subject : fold.train_subjects)
            for (int idx : by_subject[subject])
                train_set.samples.push_back(set.samples[static_cast<std::size_t>(idx)]);
        std::vector<data::EegSample> test;
        for (int idx : by_subject[fold.test_subject])
            test.push_back(set.samples[static_cast<std::size_t>(idx)]);

        model::ModelConfig cfg = options.config;
        cfg.rng_seed = rng::mix(fold.seed, 1);
        model::TrainConfig tcfg = options.train;
        tcfg.shuffle_seed = rng::mix(fold.seed, 2);

        const int si = subject_idx.at(fold.test_subject);
        model::TrainResult trained = model::train(
            train_set, cfg, tcfg, [&](int epoch, const model::ModelParams& params) {
                res.grid.at(si, fold.repeat_index, epoch - 1) =
                    bundle_accuracy(test, params, cfg);
            });
        if (options.keep_final_params) res.final_params[fi] = std::move(trained.params);
    };

    if (options.jobs == 1) {
        for (std::size_t fi = 0; fi < res.folds.size(); ++fi) run_fold(fi);
    } else {
        // Folds write to disjoint grid slots, so workers only share the index.
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        const int jobs = std::min<int>(options.jobs, static_cast<int>(res.folds.size()));
        workers.reserve(static_cast<std::size_t>(jobs));
        for (int w = 0; w < jobs; ++w) {
            workers.emplace_back([&] {
                while (true) {
                    const std::size_t fi = next.fetch_add(1);
                    if (fi >= res.folds.size()) break;
                    run_fold(fi);
                }
            });
        }
        for (auto& w : workers) w.join();
    }
    return res;
}

double BaselineResult::mean_accuracy() const {
    double sum = 0.0;
    for (double a : accuracy) sum += a;
    return accuracy.empty() ? 0.0 : sum / static_cast<double>(accuracy.size());
}

BaselineResult run_baseline_experiment(const data::LabeledSet& set, baselines::Method method,
                                       int knn_k) {
    const auto [X, y] = baselines::features_of(set);
    BaselineResult res;
    res.subjects = set.subject_ids();
    if (res.subjects.size() < 2)
        throw DataError("experiment: leave-one-subject-out needs at least 2 subjects");
    for (int subject : res.subjects) {
        std::vector<std::vector<double>> train_x;
        std::vector<int> train_y;
        std::vector<std::size_t> test_idx;
        for (std::size_t i = 0; i < X.size(); ++i) {
            if (set.samples[i].subject_id == subject) {
                test_idx.push_back(i);
            } else {
                train_x.push_back(X[i]);
                train_y.push_back(y[i]);
            }
        }
        const auto predict =
            baselines::fit_classifier(method, std::move(train_x), std::move(train_y), knn_k);
        int correct = 0;
        for (std::size_t i : test_idx)
            if (predict(X[i]) == y[i]) correct += 1;
        res.accuracy.push_back(static_cast<double>(correct) /
                               static_cast<double>(test_idx.size()));
    }
    return res;
}

// ---------------------------------------------------------------------------

namespace {

// Continued fraction for the regularized incomplete beta function.
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

double reg_inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                         a * std::log(x) + b * std::log1p(-x);
    const double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

double student_two_tailed_p(double t, int df) {
    if (df < 1) throw ArgumentError("ttest: degrees of freedom must be positive");
    if (std::isinf(t)) return 0.0;
    if (t == 0.0) return 1.0;
    const double x = df / (df + t * t);
    return reg_inc_beta(0.5 * df, 0.5, x);
}

TTestResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DimensionError("ttest: paired samples differ in length");
    const std::size_t n = a.size();
    if (n < 2) throw DataError("ttest: need at least 2 pairs");

    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i] - mean;
        sq += d * d;
    }
    const double sd = std::sqrt(sq / static_cast<double>(n - 1));

    TTestResult res;
    res.df = static_cast<int>(n) - 1;
    if (sd == 0.0) {
        if (mean == 0.0) {
            res.t = 0.0;
            res.p = 1.0;
        } else {
            res.t = mean > 0.0 ? std::numeric_limits<double>::infinity()
                               : -std::numeric_limits<double>::infinity();
            res.p = 0.0;
        }
        return res;
    }
    res.t = mean / (sd / std::sqrt(static_cast<double>(n)));
    res.p = student_two_tailed_p(res.t, res.df);
    return res;
}

std::vector<AblationRun> run_ablations(const data::LabeledSet& set,
                                       const std::vector<std::string>& variants,
                                       const ExperimentOptions& base) {
    std::vector<AblationRun> runs;
    runs.reserve(variants.size());
    for (const auto& name : variants) {
        ExperimentOptions options = base;
        const model::ModelConfig vc = model::config_for_variant(name);
        options.config.variant = vc.variant;
        options.config.pool_size = vc.pool_size;
        options.config.dropout_rate = vc.dropout_rate;
        runs.push_back({name, run_cnn_experiment(set, options)});
    }
    return runs;
}

// ---------------------------------------------------------------------------

AccuracyGrid to_grid(const BaselineResult& r) {
    AccuracyGrid g;
    g.subjects = r.subjects;
    g.repeats = 1;
    g.epochs = 1;
    g.acc = r.accuracy;
    return g;
}

namespace {

std::string series_label(const ReportSeries& s) {
    return s.variant.empty() ? s.method : s.method + "/" + s.variant;
}

}  // namespace

Comparison compare_series(const ReportSeries& a, const ReportSeries& b) {
    Comparison c;
    c.series_a = series_label(a);
    c.series_b = series_label(b);
    const int ea = a.grid.best_epoch();
    const int eb = b.grid.best_epoch();
    c.epoch_a = ea + 1;
    c.epoch_b = eb + 1;
    c.mean_a = a.grid.mean_at_epoch(ea);
    c.mean_b = b.grid.mean_at_epoch(eb);
    c.test = paired_ttest(a.grid.subject_means(ea), b.grid.subject_means(eb));
    return c;
}

void write_report_csv(const std::vector<ReportSeries>& series,
                      const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os << "method,variant,subject,repeat,epoch,accuracy\n";
    char buf[64];
    for (const auto& s : series) {
        for (std::size_t si = 0; si < s.grid.subjects.size(); ++si)
            for (int r = 0; r < s.grid.repeats; ++r)
                for (int e = 0; e < s.grid.epochs; ++e) {
                    std::snprintf(buf, sizeof buf, "%.9g",
                                  s.grid.at(static_cast<int>(si), r, e));
                    os << s.method << ',' << s.variant << ',' << s.grid.subjects[si] << ','
                       << r << ',' << e + 1 << ',' << buf << '\n';
                }
    }
    if (!os) throw DataError("write failed for " + path.string());
}

void write_summary_json(const std::vector<ReportSeries>& series,
                        const std::vector<Comparison>& comparisons,
                        const std::filesystem::path& path) {
    nlohmann::json j;
    j["series"] = nlohmann::json::array();
    for (const auto& s : series) {
        nlohmann::json js;
        js["method"] = s.method;
        js["variant"] = s.variant;
        js["subjects"] = s.grid.subjects;
        js["repeats"] = s.grid.repeats;
        js["epochs"] = s.grid.epochs;
        const int best = s.grid.best_epoch();
        js["best_epoch"] = best + 1;
        js["best_mean_accuracy"] = s.grid.mean_at_epoch(best);
        std::vector<double> mean(static_cast<std::size_t>(s.grid.epochs));
        std::vector<double> se(static_cast<std::size_t>(s.grid.epochs));
        for (int e = 0; e < s.grid.epochs; ++e) {
            mean[static_cast<std::size_t>(e)] = s.grid.mean_at_epoch(e);
            se[static_cast<std::size_t>(e)] = s.grid.stderr_at_epoch(e);
        }
        js["mean_accuracy_by_epoch"] = mean;
        js["stderr_by_epoch"] = se;
        js["subject_means_at_best"] = s.grid.subject_means(best);
        j["series"].push_back(std::move(js));
    }
    j["comparisons"] = nlohmann::json::array();
    for (const auto& c : comparisons) {
        nlohmann::json jc;
        jc["a"] = c.series_a;
        jc["b"] = c.series_b;
        jc["mean_a"] = c.mean_a;
        jc["mean_b"] = c.mean_b;
        jc["epoch_a"] = c.epoch_a;
        jc["epoch_b"] = c.epoch_b;
        jc["t"] = std::isfinite(c.test.t) ? nlohmann::json(c.test.t)
                                          : nlohmann::json(c.test.t > 0 ? "inf" : "-inf");
        jc["df"] = c.test.df;
        jc["p"] = c.test.p;
        j["comparisons"].push_back(std::move(jc));
    }
    std::ofstream os(path);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os << j.dump(2) << '\n';
    if (!os) throw DataError("write failed for " + path.string());
}

void write_accuracy_svg(const std::vector<ReportSeries>& series,
                        const std::filesystem::path& path) {
    static const char* kPalette[] = {"#4878b0", "#d65f2a", "#4a9a5a", "#c03a3a",
                                     "#7b5ea7", "#8a6f4b", "#c77ba8", "#6b6b6b"};
    int max_epochs = 1;
    double lo = 1.0, hi = 0.0;
    for (const auto& s : series) {
        max_epochs = std::max(max_epochs, s.grid.epochs);
        for (int e = 0; e < s.grid.epochs; ++e) {
            const double m = s.grid.mean_at_epoch(e);
            const double se = s.grid.stderr_at_epoch(e);
            lo = std::min(lo, m - se);
            hi = std::max(hi, m + se);
        }
    }
    lo = std::max(0.0, lo - 0.03);
    hi = std::min(1.0, hi + 0.03);
    if (hi <= lo) hi = lo + 0.1;

    svg::Document doc(860, 480);
    const double px0 = 70, px1 = 640, py0 = 40, py1 = 430;
    doc.rect(px0, py0, px1 - px0, py1 - py0, "#fdfdfd", "#bbbbbb", 1.0);
    auto sx = [&](double e) {
        return max_epochs > 1 ? px0 + (px1 - px0) * (e - 1.0) / (max_epochs - 1) : px0;
    };
    auto sy = [&](double v) { return py1 - (py1 - py0) * (v - lo) / (hi - lo); };

    for (double v = std::ceil(lo * 20) / 20; v <= hi + 1e-9; v += 0.05) {
        doc.line(px0, sy(v), px1, sy(v), "#e5e5e5", 1.0);
        char lab[16];
        std::snprintf(lab, sizeof lab, "%.2f", v);
        doc.text(px0 - 6, sy(v) + 4, lab, 11, "end", "#555555");
    }
    const int tick = std::max(1, max_epochs / 10);
    for (int e = 1; e <= max_epochs; e += tick) {
        doc.line(sx(e), py1, sx(e), py1 + 5, "#888888", 1.0);
        doc.text(sx(e), py1 + 18, std::to_string(e), 11, "middle", "#555555");
    }
    doc.text((px0 + px1) / 2, py1 + 36, "epoch", 12, "middle", "#333333");
    doc.text(16, (py0 + py1) / 2, "accuracy", 12, "middle", "#333333");

    double legend_y = py0 + 10;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        const std::string color = kPalette[i % (sizeof kPalette / sizeof kPalette[0])];
        if (s.grid.epochs == 1) {
            const double m = s.grid.mean_at_epoch(0);
            doc.line(px0, sy(m), px1, sy(m), color, 1.5, 0.8);
        } else {
            std::vector<svg::Point> band;
            for (int e = 0; e < s.grid.epochs; ++e)
                band.push_back({sx(e + 1), sy(s.grid.mean_at_epoch(e) + s.grid.stderr_at_epoch(e))});
            for (int e = s.grid.epochs - 1; e >= 0; --e)
                band.push_back({sx(e + 1), sy(s.grid.mean_at_epoch(e) - s.grid.stderr_at_epoch(e))});
            doc.polygon(band, color, 0.15);
            std::vector<svg::Point> line;
            for (int e = 0; e < s.grid.epochs; ++e)
                line.push_back({sx(e + 1), sy(s.grid.mean_at_epoch(e))});
            doc.polyline(line, color, 2.0);
        }
        doc.line(660, legend_y, 688, legend_y, color, 3.0);
        doc.text(694, legend_y + 4, series_label(s), 12);
        legend_y += 20;
    }
    doc.write(path);
}

}  // namespace somno::eval
