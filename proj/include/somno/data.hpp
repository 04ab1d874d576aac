#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "somno/errors.hpp"

namespace somno::data {

inline constexpr int kSampleLength = 384;   // 3 s at 128 Hz
inline constexpr int kSampleRateHz = 128;

enum class Label : std::uint8_t { Alert = 0, Drowsy = 1 };

struct EegSample {
    std::vector<double> values;  // kSampleLength points, one channel
    int subject_id = 0;
    Label label = Label::Alert;
};

struct LabeledSet {
    std::vector<EegSample> samples;

    std::vector<int> subject_ids() const;                    // sorted, unique
    std::vector<int> indices_of_subject(int subject) const;  // in stored order
    // (alert, drowsy) counts, whole set or one subject.
    std::pair<int, int> class_counts() const;
    std::pair<int, int> class_counts(int subject) const;
};

// ---------------------------------------------------------------------------
// Reaction-time labeling. A trial is one lane-deviation event: its onset time
// within the session and the driver's local reaction time, plus the EEG window
// ending at the onset.

struct Trial {
    double onset_time = 0.0;  // seconds from session start
    double local_rt = 0.0;    // seconds
    std::vector<double> eeg_window;
};

struct Session {
    int subject_id = 0;
    std::string name;
    std::vector<Trial> trials;  // sorted by onset_time
};

enum class TrialLabel : std::uint8_t { Alert, Drowsy, Excluded };

// 5th percentile of the session's local RTs, linear interpolation between
// order statistics.
double compute_alert_rt(const Session& s);

// Mean local RT over trials with onset in (onset_time - 90 s, onset_time].
// The trial at onset_time itself is part of the window.
double compute_global_rt(const Session& s, double onset_time);

// Alert when both RTs are below 1.5x alert-RT, drowsy when both exceed
// 2.5x alert-RT, excluded otherwise. Boundary values are excluded.
TrialLabel label_trial(double local_rt, double global_rt, double alert_rt);

struct LabeledSession {
    int subject_id = 0;
    std::string name;
    std::vector<Trial> trials;
    std::vector<TrialLabel> labels;  // parallel to trials

    std::pair<int, int> class_counts() const;  // (alert, drowsy)
};

LabeledSession label_session(const Session& s);

// Three-step reduction:
//   1. drop sessions with fewer than 50 samples of either class;
//   2. keep one session per subject, the one whose smaller class count is
//      largest (ties: larger total, then earlier position);
//   3. trim the majority class, keeping shortest-RT alert samples and
//      longest-RT drowsy samples.
// Output is grouped by ascending subject id; within a subject, samples keep
// trial order.
LabeledSet filter_and_balance(const std::vector<LabeledSession>& sessions);

// label_session + filter_and_balance over raw sessions.
LabeledSet build_labeled_set(const std::vector<Session>& sessions);

// ---------------------------------------------------------------------------
// EDD container: "EDD1", u32 sample count, u32 points per sample (384),
// u32 sample rate (128); then per sample u16 subject, u8 label, f32 values.
// Little-endian throughout. Samples keep their order across a round trip.

void save_edd(const LabeledSet& set, const std::filesystem::path& path);
LabeledSet load_edd(const std::filesystem::path& path);

// Text form: subject_id,label,v1,...,v384 per line, no header. Values are
// parsed at f32 precision and written back with enough digits that
// csv -> edd -> csv is value-exact.
LabeledSet import_csv(const std::filesystem::path& path);
void export_csv(const LabeledSet& set, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic EEG with ground-truth event annotations, for pipeline checks.

struct SynthSpec {
    int subjects = 8;
    int samples_per_class = 100;
    std::uint64_t seed = 1;
    bool drowsy_spindles = true;   // 10 Hz bursts with a smooth envelope
    bool drowsy_theta = true;      // 5 Hz bursts
    bool alert_emg = true;         // 20-45 Hz muscle-like episodes
    bool alert_drift = true;       // slow large-amplitude excursion
    double subject_gain_spread = 1.0;  // per-subject gain is 2^U(-s, s)
    double event_strength = 1.0;       // scales every event amplitude
};

struct EventAnnotation {
    int sample_index = 0;        // into LabeledSet::samples
    std::string event_type;
    int start = 0;               // [start, end) in points
    int end = 0;
};

struct SynthResult {
    LabeledSet set;
    std::vector<EventAnnotation> events;      // one per sample, same order
    std::vector<std::vector<double>> baselines;  // per sample, without the event
};

SynthResult synth_generate(const SynthSpec& spec);

void save_annotations_csv(const std::vector<EventAnnotation>& events,
                          const std::filesystem::path& path);

}  // namespace somno::data
