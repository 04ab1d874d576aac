#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "somno/baselines.hpp"
#include "somno/data.hpp"
#include "somno/model.hpp"

// Leave-one-subject-out evaluation with repeated runs, plus the paired
// statistics and report files the comparisons are written to.

namespace somno::eval {

struct FoldSpec {
    int test_subject = 0;
    std::vector<int> train_subjects;
    int repeat_index = 0;
    std::uint64_t seed = 0;  // drives init and shuffling for this fold
};

// One fold per (repeat, subject), ordered repeat-major then by subject id.
// Fold seeds depend only on (master_seed, repeat, subject), never on
// scheduling.
std::vector<FoldSpec> loso_split(const data::LabeledSet& set, int repeats,
                                 std::uint64_t master_seed);

// Accuracy indexed by [subject][repeat][epoch].
struct AccuracyGrid {
    std::vector<int> subjects;
    int repeats = 0;
    int epochs = 0;
    std::vector<double> acc;

    double& at(int subject_idx, int repeat, int epoch);
    double at(int subject_idx, int repeat, int epoch) const;
    double mean_at_epoch(int epoch) const;
    double stderr_at_epoch(int epoch) const;            // over all folds
    std::vector<double> subject_means(int epoch) const; // over repeats
    int best_epoch() const;                             // 0-based, first maximum
};

struct ExperimentOptions {
    model::ModelConfig config;   // rng_seed is replaced per fold
    model::TrainConfig train;    // shuffle_seed is replaced per fold
    int repeats = 10;
    std::uint64_t master_seed = 1;
    int jobs = 1;
    bool keep_final_params = false;
};

struct CnnExperimentResult {
    AccuracyGrid grid;
    std::vector<FoldSpec> folds;
    std::vector<model::ModelParams> final_params;  // parallel to folds when kept
};

// Trains one network per fold and scores the held-out subject's bundle after
// every epoch of that same run. jobs > 1 distributes folds across threads;
// results are identical for any job count.
CnnExperimentResult run_cnn_experiment(const data::LabeledSet& set,
                                       const ExperimentOptions& options);

struct BaselineResult {
    std::vector<int> subjects;
    std::vector<double> accuracy;  // per held-out subject
    double mean_accuracy() const;
};

// Band-power features, one classical classifier, one pass per subject.
BaselineResult run_baseline_experiment(const data::LabeledSet& set, baselines::Method method,
                                       int knn_k = 5);

struct TTestResult {
    double t = 0.0;
    int df = 0;
    double p = 1.0;
};

// Two-sided paired t-test. Zero-variance differences give p = 0 when the mean
// differs from zero and p = 1 otherwise.
TTestResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b);

// Survival of |t| on both tails, via the regularized incomplete beta function.
double student_two_tailed_p(double t, int df);

struct AblationRun {
    std::string variant;
    CnnExperimentResult result;
};

// Runs each named variant under the same fold seeds so the comparisons pair.
std::vector<AblationRun> run_ablations(const data::LabeledSet& set,
                                       const std::vector<std::string>& variants,
                                       const ExperimentOptions& base);

// ---------------------------------------------------------------------------
// Report files.

struct ReportSeries {
    std::string method;   // "cnn", "lda", ...
    std::string variant;  // model variant, empty for baselines
    AccuracyGrid grid;
};

AccuracyGrid to_grid(const BaselineResult& r);

struct Comparison {
    std::string series_a;  // "method/variant" labels
    std::string series_b;
    double mean_a = 0.0;
    double mean_b = 0.0;
    int epoch_a = 0;  // 1-based epoch the mean was taken at
    int epoch_b = 0;
    TTestResult test;
};

// Pairs per-subject means at each series' own best epoch.
Comparison compare_series(const ReportSeries& a, const ReportSeries& b);

// method,variant,subject,repeat,epoch,accuracy
void write_report_csv(const std::vector<ReportSeries>& series,
                      const std::filesystem::path& path);
void write_summary_json(const std::vector<ReportSeries>& series,
                        const std::vector<Comparison>& comparisons,
                        const std::filesystem::path& path);
// Mean accuracy against epoch, one curve per series with a standard-error
// band; single-point series are drawn as reference lines.
void write_accuracy_svg(const std::vector<ReportSeries>& series,
                        const std::filesystem::path& path);

}  // namespace somno::eval
