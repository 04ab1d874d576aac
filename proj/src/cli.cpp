#include "somno/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "somno/cam.hpp"
#include "somno/data.hpp"
#include "somno/eval.hpp"
#include "somno/model.hpp"
#include "somno/rng.hpp"

namespace somno::cli {

namespace {

namespace fs = std::filesystem;

std::uint64_t default_seed() {
    const char* env = std::getenv("SOMNO_SEED");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0')
        throw ArgumentError(std::string("SOMNO_SEED is not an integer: '") + env + "'");
    return v;
}

data::LabeledSet load_dataset(const fs::path& path) {
    const std::string ext = path.extension().string();
    if (ext == ".edd") return data::load_edd(path);
    if (ext == ".csv") return data::import_csv(path);
    throw ArgumentError("cannot tell the format of '" + path.string() +
                        "'; expected a .edd or .csv file");
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

struct TrainArgs {
    std::string data;
    std::string out;
    int epochs = 50;
    int batch = 50;
    double lr = 0.01;
    std::string variant = "full";
    std::uint64_t seed = 1;
};

int cmd_train(const TrainArgs& a) {
    const data::LabeledSet set = load_dataset(a.data);
    model::ModelConfig cfg = model::config_for_variant(a.variant);
    cfg.rng_seed = rng::mix(a.seed, 1);
    model::TrainConfig tcfg;
    tcfg.epochs = a.epochs;
    tcfg.batch_size = a.batch;
    tcfg.optimizer.learning_rate = a.lr;
    tcfg.shuffle_seed = rng::mix(a.seed, 2);

    const model::TrainResult res = model::train(set, cfg, tcfg);
    model::save_checkpoint(a.out, cfg, res.params);

    std::ofstream loss(a.out + ".loss.csv");
    if (!loss) throw DataError("cannot open " + a.out + ".loss.csv for writing");
    loss << "epoch,loss\n";
    char buf[48];
    for (std::size_t e = 0; e < res.epoch_loss.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g", e + 1, res.epoch_loss[e]);
        loss << buf << '\n';
    }
    std::printf("trained %s on %zu samples, %d epochs; final loss %.6f\n", a.variant.c_str(),
                set.samples.size(), a.epochs, res.epoch_loss.back());
    std::printf("checkpoint: %s\n", a.out.c_str());
    return 0;
}

struct EvalArgs {
    std::string data;
    std::string out;
    std::vector<std::string> methods{"cnn"};
    std::string variant = "full";
    int repeats = 10;
    int epochs = 50;
    int batch = 50;
    double lr = 0.01;
    int jobs = 1;
    int knn_k = 5;
    std::uint64_t seed = 1;
};

int cmd_eval(const EvalArgs& a) {
    const data::LabeledSet set = load_dataset(a.data);
    ensure_dir(a.out);

    std::vector<eval::ReportSeries> series;
    std::optional<std::size_t> cnn_series;
    for (const auto& method : a.methods) {
        if (method == "cnn") {
            eval::ExperimentOptions opt;
            opt.config = model::config_for_variant(a.variant);
            opt.train.epochs = a.epochs;
            opt.train.batch_size = a.batch;
            opt.train.optimizer.learning_rate = a.lr;
            opt.repeats = a.repeats;
            opt.master_seed = a.seed;
            opt.jobs = a.jobs;
            const eval::CnnExperimentResult res = eval::run_cnn_experiment(set, opt);
            cnn_series = series.size();
            series.push_back({"cnn", a.variant, res.grid});
        } else {
            const eval::BaselineResult res =
                eval::run_baseline_experiment(set, baselines::method_from_name(method), a.knn_k);
            series.push_back({method, "", eval::to_grid(res)});
        }
    }

    std::vector<eval::Comparison> comparisons;
    if (cnn_series) {
        for (std::size_t i = 0; i < series.size(); ++i)
            if (i != *cnn_series)
                comparisons.push_back(eval::compare_series(series[*cnn_series], series[i]));
    }

    const fs::path out(a.out);
    eval::write_report_csv(series, out / "report.csv");
    eval::write_summary_json(series, comparisons, out / "summary.json");
    eval::write_accuracy_svg(series, out / "accuracy.svg");
    for (const auto& s : series) {
        const int best = s.grid.best_epoch();
        std::printf("%-16s best epoch %3d  mean accuracy %.4f\n",
                    (s.variant.empty() ? s.method : s.method + "/" + s.variant).c_str(), best + 1,
                    s.grid.mean_at_epoch(best));
    }
    std::printf("reports: %s\n", a.out.c_str());
    return 0;
}

struct BaselineArgs {
    std::string data;
    std::string out;
    std::string method;
    int knn_k = 5;
};

int cmd_baseline(const BaselineArgs& a) {
    const data::LabeledSet set = load_dataset(a.data);
    ensure_dir(a.out);
    const eval::BaselineResult res =
        eval::run_baseline_experiment(set, baselines::method_from_name(a.method), a.knn_k);
    std::vector<eval::ReportSeries> series{{a.method, "", eval::to_grid(res)}};
    const fs::path out(a.out);
    eval::write_report_csv(series, out / "report.csv");
    eval::write_summary_json(series, {}, out / "summary.json");
    for (std::size_t i = 0; i < res.subjects.size(); ++i)
        std::printf("subject %-4d accuracy %.4f\n", res.subjects[i], res.accuracy[i]);
    std::printf("%s mean accuracy %.4f\n", a.method.c_str(), res.mean_accuracy());
    return 0;
}

struct AblateArgs {
    std::string data;
    std::string out;
    std::vector<std::string> variants{"full", "no_activation", "no_batchnorm", "avgpool40",
                                      "avgpool80"};
    int repeats = 10;
    int epochs = 50;
    int batch = 50;
    double lr = 0.01;
    int jobs = 1;
    std::uint64_t seed = 1;
};

int cmd_ablate(const AblateArgs& a) {
    const data::LabeledSet set = load_dataset(a.data);
    ensure_dir(a.out);
    eval::ExperimentOptions base;
    base.train.epochs = a.epochs;
    base.train.batch_size = a.batch;
    base.train.optimizer.learning_rate = a.lr;
    base.repeats = a.repeats;
    base.master_seed = a.seed;
    base.jobs = a.jobs;

    const std::vector<eval::AblationRun> runs = eval::run_ablations(set, a.variants, base);
    std::vector<eval::ReportSeries> series;
    series.reserve(runs.size());
    for (const auto& run : runs) series.push_back({"cnn", run.variant, run.result.grid});

    std::vector<eval::Comparison> comparisons;
    for (std::size_t i = 0; i < series.size(); ++i)
        for (std::size_t j = i + 1; j < series.size(); ++j)
            if (series[i].variant == "full" || series[j].variant == "full")
                comparisons.push_back(eval::compare_series(series[i], series[j]));

    const fs::path out(a.out);
    eval::write_report_csv(series, out / "report.csv");
    eval::write_summary_json(series, comparisons, out / "summary.json");
    eval::write_accuracy_svg(series, out / "accuracy.svg");
    for (const auto& s : series) {
        const int best = s.grid.best_epoch();
        std::printf("%-16s best epoch %3d  mean accuracy %.4f\n", s.variant.c_str(), best + 1,
                    s.grid.mean_at_epoch(best));
    }
    return 0;
}

struct ExplainArgs {
    std::string data;
    std::string ckpt;
    std::string out;
    int sample = 0;
};

int cmd_explain(const ExplainArgs& a) {
    const data::LabeledSet set = load_dataset(a.data);
    auto [cfg, params] = model::load_checkpoint(a.ckpt);
    if (a.sample < 0 || a.sample >= static_cast<int>(set.samples.size()))
        throw ArgumentError("sample index " + std::to_string(a.sample) +
                            " out of range for a set of " + std::to_string(set.samples.size()));
    ensure_dir(a.out);

    // The sample is explained inside its subject's bundle, which supplies the
    // batch statistics it would be classified under.
    const data::EegSample& sample = set.samples[static_cast<std::size_t>(a.sample)];
    std::vector<data::EegSample> bundle;
    int index = -1;
    for (std::size_t i = 0; i < set.samples.size(); ++i) {
        if (set.samples[i].subject_id != sample.subject_id) continue;
        if (static_cast<int>(i) == a.sample) index = static_cast<int>(bundle.size());
        bundle.push_back(set.samples[i]);
    }
    const cam::Explanation ex = cam::explain_at(bundle, index, params, cfg);

    const fs::path out(a.out);
    cam::write_explain_csv(sample, ex, out / "explain.csv");
    cam::write_explain_svg(sample, ex, out / "explain.svg");
    std::printf("sample %d (subject %d, %s): p_alert=%.4f p_drowsy=%.4f\n", a.sample,
                sample.subject_id, sample.label == data::Label::Alert ? "alert" : "drowsy",
                ex.probs[0], ex.probs[1]);
    std::printf("explanation: %s\n", (out / "explain.svg").string().c_str());
    return 0;
}

struct SynthArgs {
    std::string out;
    std::string annotations;
    int subjects = 8;
    int per_class = 100;
    std::uint64_t seed = 1;
    double gain_spread = 1.0;
    double event_strength = 1.0;
    bool no_spindles = false;
    bool no_theta = false;
    bool no_emg = false;
    bool no_drift = false;
};

int cmd_synth(const SynthArgs& a) {
    data::SynthSpec spec;
    spec.subjects = a.subjects;
    spec.samples_per_class = a.per_class;
    spec.seed = a.seed;
    spec.subject_gain_spread = a.gain_spread;
    spec.event_strength = a.event_strength;
    spec.drowsy_spindles = !a.no_spindles;
    spec.drowsy_theta = !a.no_theta;
    spec.alert_emg = !a.no_emg;
    spec.alert_drift = !a.no_drift;

    const data::SynthResult res = data::synth_generate(spec);
    data::save_edd(res.set, a.out);
    if (!a.annotations.empty()) data::save_annotations_csv(res.events, a.annotations);
    std::printf("wrote %zu samples (%d subjects x %d per class) to %s\n", res.set.samples.size(),
                a.subjects, a.per_class, a.out.c_str());
    return 0;
}

struct BandsArgs {
    std::string data;
    std::string out;
};

int cmd_bands(const BandsArgs& a) {
    const data::LabeledSet set = load_dataset(a.data);
    baselines::write_feature_csv(set, a.out);
    std::printf("wrote %zu feature rows to %s\n", set.samples.size(), a.out.c_str());
    return 0;
}

struct ConvertArgs {
    std::string in;
    std::string out;
};

int cmd_convert(const ConvertArgs& a) {
    const std::string from = fs::path(a.in).extension().string();
    const std::string to = fs::path(a.out).extension().string();
    if (from == ".csv" && to == ".edd") {
        data::save_edd(data::import_csv(a.in), a.out);
    } else if (from == ".edd" && to == ".csv") {
        data::export_csv(data::load_edd(a.in), a.out);
    } else {
        throw ArgumentError("convert needs a .csv and a .edd path, got '" + from + "' and '" +
                            to + "'");
    }
    std::printf("converted %s -> %s\n", a.in.c_str(), a.out.c_str());
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"drowsiness classifier and its evaluation harness"};
    app.require_subcommand(1);

    try {
        const std::uint64_t seed0 = default_seed();

        TrainArgs train_args;
        train_args.seed = seed0;
        auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
        train->add_option("--data", train_args.data, "input dataset (.edd or .csv)")->required();
        train->add_option("--out", train_args.out, "checkpoint path to write")->required();
        train->add_option("--epochs", train_args.epochs, "training epochs");
        train->add_option("--batch", train_args.batch, "minibatch size");
        train->add_option("--lr", train_args.lr, "learning rate");
        train->add_option("--variant", train_args.variant,
                          "full, no_activation, no_batchnorm, avgpool40, avgpool80");
        train->add_option("--seed", train_args.seed, "master seed");

        EvalArgs eval_args;
        eval_args.seed = seed0;
        auto* eval_cmd = app.add_subcommand("eval", "leave-one-subject-out evaluation");
        eval_cmd->add_option("--data", eval_args.data, "input dataset")->required();
        eval_cmd->add_option("--out", eval_args.out, "output directory")->required();
        eval_cmd->add_option("--method", eval_args.methods,
                             "methods to run: cnn, lda, lr, gnb, knn");
        eval_cmd->add_option("--variant", eval_args.variant, "model variant for cnn");
        eval_cmd->add_option("--repeats", eval_args.repeats, "repeated runs per subject");
        eval_cmd->add_option("--epochs", eval_args.epochs, "training epochs");
        eval_cmd->add_option("--batch", eval_args.batch, "minibatch size");
        eval_cmd->add_option("--lr", eval_args.lr, "learning rate");
        eval_cmd->add_option("--jobs", eval_args.jobs, "folds trained in parallel");
        eval_cmd->add_option("--knn-k", eval_args.knn_k, "neighbours for knn");
        eval_cmd->add_option("--seed", eval_args.seed, "master seed");

        BaselineArgs baseline_args;
        auto* baseline = app.add_subcommand("baseline", "single classical classifier pass");
        baseline->add_option("--data", baseline_args.data, "input dataset")->required();
        baseline->add_option("--out", baseline_args.out, "output directory")->required();
        baseline->add_option("--method", baseline_args.method, "lda, lr, gnb or knn")->required();
        baseline->add_option("--knn-k", baseline_args.knn_k, "neighbours for knn");

        AblateArgs ablate_args;
        ablate_args.seed = seed0;
        auto* ablate = app.add_subcommand("ablate", "compare model variants under paired seeds");
        ablate->add_option("--data", ablate_args.data, "input dataset")->required();
        ablate->add_option("--out", ablate_args.out, "output directory")->required();
        ablate->add_option("--variants", ablate_args.variants, "variants to run")
            ->delimiter(',');
        ablate->add_option("--repeats", ablate_args.repeats, "repeated runs per subject");
        ablate->add_option("--epochs", ablate_args.epochs, "training epochs");
        ablate->add_option("--batch", ablate_args.batch, "minibatch size");
        ablate->add_option("--lr", ablate_args.lr, "learning rate");
        ablate->add_option("--jobs", ablate_args.jobs, "folds trained in parallel");
        ablate->add_option("--seed", ablate_args.seed, "master seed");

        ExplainArgs explain_args;
        auto* explain = app.add_subcommand("explain", "saliency for one sample");
        explain->add_option("--data", explain_args.data, "input dataset")->required();
        explain->add_option("--ckpt", explain_args.ckpt, "model checkpoint")->required();
        explain->add_option("--out", explain_args.out, "output directory")->required();
        explain->add_option("--sample", explain_args.sample, "sample index in the dataset")
            ->required();

        SynthArgs synth_args;
        synth_args.seed = seed0;
        auto* synth = app.add_subcommand("synth", "generate an annotated synthetic dataset");
        synth->add_option("--out", synth_args.out, "output .edd path")->required();
        synth->add_option("--annotations", synth_args.annotations, "event sidecar .csv path");
        synth->add_option("--subjects", synth_args.subjects, "number of subjects");
        synth->add_option("--per-class", synth_args.per_class, "samples per class per subject");
        synth->add_option("--seed", synth_args.seed, "master seed");
        synth->add_option("--gain-spread", synth_args.gain_spread,
                          "per-subject gain is 2^U(-s, s)");
        synth->add_option("--event-strength", synth_args.event_strength,
                          "amplitude multiplier for injected events");
        synth->add_flag("--no-spindles", synth_args.no_spindles, "disable 10 Hz drowsy bursts");
        synth->add_flag("--no-theta", synth_args.no_theta, "disable 5 Hz drowsy bursts");
        synth->add_flag("--no-emg", synth_args.no_emg, "disable 20-45 Hz alert episodes");
        synth->add_flag("--no-drift", synth_args.no_drift, "disable slow alert drifts");

        BandsArgs bands_args;
        auto* bands = app.add_subcommand("bands", "dump relative band-power features");
        bands->add_option("--data", bands_args.data, "input dataset")->required();
        bands->add_option("--out", bands_args.out, "output .csv path")->required();

        ConvertArgs convert_args;
        auto* convert = app.add_subcommand("convert", "convert between .csv and .edd");
        convert->add_option("--in", convert_args.in, "input path")->required();
        convert->add_option("--out", convert_args.out, "output path")->required();

        std::vector<std::string> reversed(args.rbegin(), args.rend());
        try {
            app.parse(reversed);
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e);
            return code == 0 ? 0 : 1;
        }

        if (*train) return cmd_train(train_args);
        if (*eval_cmd) return cmd_eval(eval_args);
        if (*baseline) return cmd_baseline(baseline_args);
        if (*ablate) return cmd_ablate(ablate_args);
        if (*explain) return cmd_explain(explain_args);
        if (*synth) return cmd_synth(synth_args);
        if (*bands) return cmd_bands(bands_args);
        if (*convert) return cmd_convert(convert_args);
        return 1;
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}

}  // namespace somno::cli
