#include "somno/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "somno/binary_io.hpp"
#include "somno/rng.hpp"

namespace somno::data {

std::vector<int> LabeledSet::subject_ids() const {
    std::set<int> ids;
    for (const auto& s : samples) ids.insert(s.subject_id);
    return std::vector<int>(ids.begin(), ids.end());
}

std::vector<int> LabeledSet::indices_of_subject(int subject) const {
    std::vector<int> idx;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].subject_id == subject) idx.push_back(static_cast<int>(i));
    return idx;
}

std::pair<int, int> LabeledSet::class_counts() const {
    int a = 0, d = 0;
    for (const auto& s : samples) (s.label == Label::Alert ? a : d) += 1;
    return {a, d};
}

std::pair<int, int> LabeledSet::class_counts(int subject) const {
    int a = 0, d = 0;
    for (const auto& s : samples)
        if (s.subject_id == subject) (s.label == Label::Alert ? a : d) += 1;
    return {a, d};
}

// ---------------------------------------------------------------------------

double compute_alert_rt(const Session& s) {
    if (s.trials.empty()) throw DataError("session " + s.name + " has no trials");
    std::vector<double> rts;
    rts.reserve(s.trials.size());
    for (const auto& t : s.trials) {
        if (!(t.local_rt > 0.0))
            throw DataError("session " + s.name + " has a non-positive reaction time");
        rts.push_back(t.local_rt);
    }
    std::sort(rts.begin(), rts.end());
    const double pos = 0.05 * static_cast<double>(rts.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= rts.size()) return rts[lo];
    return rts[lo] + frac * (rts[lo + 1] - rts[lo]);
}

double compute_global_rt(const Session& s, double onset_time) {
    double sum = 0.0;
    int n = 0;
    for (const auto& t : s.trials) {
        if (t.onset_time > onset_time - 90.0 && t.onset_time <= onset_time) {
            sum += t.local_rt;
            n += 1;
        }
    }
    if (n == 0)
        throw DataError("session " + s.name + " has no trials in the 90 s window before " +
                        std::to_string(onset_time));
    return sum / static_cast<double>(n);
}

TrialLabel label_trial(double local_rt, double global_rt, double alert_rt) {
    if (!(alert_rt > 0.0)) throw DataError("alert-RT must be positive");
    if (local_rt < 1.5 * alert_rt && global_rt < 1.5 * alert_rt) return TrialLabel::Alert;
    if (local_rt > 2.5 * alert_rt && global_rt > 2.5 * alert_rt) return TrialLabel::Drowsy;
    return TrialLabel::Excluded;
}

std::pair<int, int> LabeledSession::class_counts() const {
    int a = 0, d = 0;
    for (const auto& l : labels) {
        if (l == TrialLabel::Alert) a += 1;
        if (l == TrialLabel::Drowsy) d += 1;
    }
    return {a, d};
}

LabeledSession label_session(const Session& s) {
    for (std::size_t i = 1; i < s.trials.size(); ++i)
        if (s.trials[i].onset_time < s.trials[i - 1].onset_time)
            throw DataError("session " + s.name + " trials are not sorted by onset time");
    const double alert_rt = compute_alert_rt(s);
    LabeledSession out;
    out.subject_id = s.subject_id;
    out.name = s.name;
    out.trials = s.trials;
    out.labels.reserve(s.trials.size());
    for (const auto& t : s.trials)
        out.labels.push_back(label_trial(t.local_rt, compute_global_rt(s, t.onset_time), alert_rt));
    return out;
}

namespace {

constexpr int kMinClassPerSession = 50;

}  // namespace

LabeledSet filter_and_balance(const std::vector<LabeledSession>& sessions) {
    // Step 1: per-session class floor. Step 2 picks one survivor per subject.
    std::map<int, const LabeledSession*> best;
    std::map<int, std::pair<int, int>> best_key;  // (min count, total)
    for (const auto& sess : sessions) {
        auto [a, d] = sess.class_counts();
        if (a < kMinClassPerSession || d < kMinClassPerSession) continue;
        const std::pair<int, int> key{std::min(a, d), a + d};
        auto it = best.find(sess.subject_id);
        if (it == best.end() || key > best_key[sess.subject_id]) {
            best[sess.subject_id] = &sess;
            best_key[sess.subject_id] = key;
        }
    }

    LabeledSet out;
    for (const auto& [subject, sess] : best) {
        auto [a, d] = sess->class_counts();
        const int keep = std::min(a, d);

        // Step 3: rank within each class, majority side trimmed. Alert keeps
        // the fastest reactions, drowsy the slowest.
        std::vector<int> alert_idx, drowsy_idx;
        for (std::size_t i = 0; i < sess->trials.size(); ++i) {
            if (sess->labels[i] == TrialLabel::Alert) alert_idx.push_back(static_cast<int>(i));
            if (sess->labels[i] == TrialLabel::Drowsy) drowsy_idx.push_back(static_cast<int>(i));
        }
        std::stable_sort(alert_idx.begin(), alert_idx.end(), [&](int x, int y) {
            return sess->trials[static_cast<std::size_t>(x)].local_rt <
                   sess->trials[static_cast<std::size_t>(y)].local_rt;
        });
        std::stable_sort(drowsy_idx.begin(), drowsy_idx.end(), [&](int x, int y) {
            return sess->trials[static_cast<std::size_t>(x)].local_rt >
                   sess->trials[static_cast<std::size_t>(y)].local_rt;
        });
        alert_idx.resize(static_cast<std::size_t>(keep));
        drowsy_idx.resize(static_cast<std::size_t>(keep));

        std::vector<std::pair<int, Label>> kept;
        kept.reserve(static_cast<std::size_t>(2 * keep));
        for (int i : alert_idx) kept.emplace_back(i, Label::Alert);
        for (int i : drowsy_idx) kept.emplace_back(i, Label::Drowsy);
        std::sort(kept.begin(), kept.end());  // back to trial order

        for (const auto& [idx, label] : kept) {
            const Trial& t = sess->trials[static_cast<std::size_t>(idx)];
            if (static_cast<int>(t.eeg_window.size()) != kSampleLength)
                throw DimensionError("session " + sess->name + " trial window is " +
                                     std::to_string(t.eeg_window.size()) + " points, expected " +
                                     std::to_string(kSampleLength));
            EegSample sample;
            sample.values = t.eeg_window;
            sample.subject_id = subject;
            sample.label = label;
            out.samples.push_back(std::move(sample));
        }
    }
    return out;
}

LabeledSet build_labeled_set(const std::vector<Session>& sessions) {
    std::vector<LabeledSession> labeled;
    labeled.reserve(sessions.size());
    for (const auto& s : sessions) labeled.push_back(label_session(s));
    return filter_and_balance(labeled);
}

// ---------------------------------------------------------------------------

void save_edd(const LabeledSet& set, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os.write("EDD1", 4);
    io::write_u32(os, static_cast<std::uint32_t>(set.samples.size()));
    io::write_u32(os, static_cast<std::uint32_t>(kSampleLength));
    io::write_u32(os, static_cast<std::uint32_t>(kSampleRateHz));
    for (const auto& s : set.samples) {
        if (static_cast<int>(s.values.size()) != kSampleLength)
            throw DimensionError("sample has " + std::to_string(s.values.size()) +
                                 " points, expected " + std::to_string(kSampleLength));
        if (s.subject_id < 0 || s.subject_id > 0xffff)
            throw DataError("subject id " + std::to_string(s.subject_id) +
                            " does not fit the container");
        io::write_u16(os, static_cast<std::uint16_t>(s.subject_id));
        io::write_u8(os, static_cast<std::uint8_t>(s.label));
        for (double v : s.values) io::write_f32(os, static_cast<float>(v));
    }
    if (!os) throw DataError("write failed for " + path.string());
}

LabeledSet load_edd(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    io::Reader r(is, path.filename().string());

    unsigned char magic[4];
    r.read_exact(magic, 4, "magic");
    if (std::memcmp(magic, "EDD1", 4) != 0)
        throw FormatError(r.origin() + ": bad magic at offset 0");
    const std::uint32_t n_samples = r.u32("sample count");
    std::uint64_t at = r.offset();
    const std::uint32_t n_points = r.u32("points per sample");
    if (n_points != static_cast<std::uint32_t>(kSampleLength))
        throw FormatError(r.origin() + ": unsupported points-per-sample " +
                          std::to_string(n_points) + " at offset " + std::to_string(at));
    at = r.offset();
    const std::uint32_t rate = r.u32("sample rate");
    if (rate != static_cast<std::uint32_t>(kSampleRateHz))
        throw FormatError(r.origin() + ": unsupported sample rate " + std::to_string(rate) +
                          " at offset " + std::to_string(at));

    LabeledSet set;
    set.samples.reserve(n_samples);
    for (std::uint32_t i = 0; i < n_samples; ++i) {
        EegSample s;
        s.subject_id = r.u16("subject id");
        at = r.offset();
        const std::uint8_t label = r.u8("label");
        if (label > 1)
            throw FormatError(r.origin() + ": label " + std::to_string(label) +
                              " out of range at offset " + std::to_string(at));
        s.label = static_cast<Label>(label);
        s.values.resize(static_cast<std::size_t>(kSampleLength));
        for (int j = 0; j < kSampleLength; ++j)
            s.values[static_cast<std::size_t>(j)] = static_cast<double>(r.f32("sample values"));
        set.samples.push_back(std::move(s));
    }
    if (!r.at_end())
        throw FormatError(r.origin() + ": trailing bytes at offset " + std::to_string(r.offset()));
    return set;
}

namespace {

FormatError csv_error(const std::filesystem::path& path, std::size_t line, const std::string& msg) {
    return FormatError(path.filename().string() + ":" + std::to_string(line) + ": " + msg);
}

}  // namespace

LabeledSet import_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path.string());
    LabeledSet set;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        lineno += 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            fields.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (fields.size() != static_cast<std::size_t>(kSampleLength) + 2)
            throw csv_error(path, lineno,
                            "expected " + std::to_string(kSampleLength + 2) + " fields, got " +
                                std::to_string(fields.size()));

        EegSample s;
        char* end = nullptr;
        const long subj = std::strtol(fields[0].c_str(), &end, 10);
        if (end == fields[0].c_str() || *end != '\0' || subj < 0 || subj > 0xffff)
            throw csv_error(path, lineno, "bad subject id '" + fields[0] + "'");
        s.subject_id = static_cast<int>(subj);
        if (fields[1] == "0")
            s.label = Label::Alert;
        else if (fields[1] == "1")
            s.label = Label::Drowsy;
        else
            throw csv_error(path, lineno, "bad label '" + fields[1] + "'");
        s.values.reserve(static_cast<std::size_t>(kSampleLength));
        for (int j = 0; j < kSampleLength; ++j) {
            const std::string& f = fields[static_cast<std::size_t>(j) + 2];
            // f32 precision on purpose: it is what the binary container holds.
            const float v = std::strtof(f.c_str(), &end);
            if (end == f.c_str() || *end != '\0' || !std::isfinite(v))
                throw csv_error(path, lineno, "bad value '" + f + "' in column " +
                                                  std::to_string(j + 3));
            s.values.push_back(static_cast<double>(v));
        }
        set.samples.push_back(std::move(s));
    }
    return set;
}

void export_csv(const LabeledSet& set, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    char buf[32];
    for (const auto& s : set.samples) {
        if (static_cast<int>(s.values.size()) != kSampleLength)
            throw DimensionError("sample has " + std::to_string(s.values.size()) +
                                 " points, expected " + std::to_string(kSampleLength));
        os << s.subject_id << ',' << static_cast<int>(s.label);
        for (double v : s.values) {
            // 9 significant digits round-trip an f32 exactly.
            std::snprintf(buf, sizeof buf, "%.9g", v);
            os << ',' << buf;
        }
        os << '\n';
    }
    if (!os) throw DataError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Pink-ish background: random-phase harmonics with a 1/f^tilt power slope,
// scaled to a target RMS.
std::vector<double> synth_baseline(std::mt19937_64& eng, double tilt, double target_rms) {
    constexpr int kComponents = 120;  // fundamental 1/3 Hz, up to 40 Hz
    std::vector<double> amp(kComponents), phase(kComponents);
    double power = 0.0;
    for (int k = 0; k < kComponents; ++k) {
        const double f = static_cast<double>(k + 1) / 3.0;
        const double jitter = rng::uniform(eng, 0.7, 1.3);
        amp[static_cast<std::size_t>(k)] = jitter * std::pow(f, -0.5 * tilt);
        phase[static_cast<std::size_t>(k)] = rng::uniform(eng, 0.0, kTwoPi);
        power += 0.5 * amp[static_cast<std::size_t>(k)] * amp[static_cast<std::size_t>(k)];
    }
    const double scale = target_rms / std::sqrt(power);
    std::vector<double> x(static_cast<std::size_t>(kSampleLength), 0.0);
    for (int k = 0; k < kComponents; ++k) {
        const double w = kTwoPi * static_cast<double>(k + 1) / 3.0 / kSampleRateHz;
        const double a = scale * amp[static_cast<std::size_t>(k)];
        const double ph = phase[static_cast<std::size_t>(k)];
        for (int t = 0; t < kSampleLength; ++t)
            x[static_cast<std::size_t>(t)] += a * std::cos(w * t + ph);
    }
    return x;
}

double hann(int i, int n) {
    return n > 1 ? 0.5 - 0.5 * std::cos(kTwoPi * i / (n - 1)) : 1.0;
}

struct EventDraw {
    std::string type;
    int start = 0;
    int len = 0;
    std::vector<double> wave;  // len points, added onto the baseline
};

EventDraw draw_event(std::mt19937_64& eng, Label label, const SynthSpec& spec, double rms) {
    std::vector<int> kinds;
    if (label == Label::Drowsy) {
        if (spec.drowsy_spindles) kinds.push_back(0);
        if (spec.drowsy_theta) kinds.push_back(1);
    } else {
        if (spec.alert_emg) kinds.push_back(2);
        if (spec.alert_drift) kinds.push_back(3);
    }
    if (kinds.empty()) throw ArgumentError("synth: no event type enabled for a class");
    const int kind = kinds[static_cast<std::size_t>(rng::below(eng, kinds.size()))];

    EventDraw ev;
    const double strength = spec.event_strength;
    switch (kind) {
        case 0:
        case 1: {
            ev.type = kind == 0 ? "alpha_spindle" : "theta_burst";
            const double f0 = (kind == 0 ? 10.0 : 5.0) + rng::uniform(eng, -0.5, 0.5);
            ev.len = static_cast<int>(rng::uniform(eng, 0.75, 1.5) * kSampleRateHz);
            const double a = strength * rms * rng::uniform(eng, 3.0, 4.5);
            const double ph = rng::uniform(eng, 0.0, kTwoPi);
            ev.wave.resize(static_cast<std::size_t>(ev.len));
            for (int i = 0; i < ev.len; ++i)
                ev.wave[static_cast<std::size_t>(i)] =
                    a * hann(i, ev.len) * std::sin(kTwoPi * f0 * i / kSampleRateHz + ph);
            break;
        }
        case 2: {
            ev.type = "emg_burst";
            ev.len = static_cast<int>(rng::uniform(eng, 0.5, 1.25) * kSampleRateHz);
            ev.wave.assign(static_cast<std::size_t>(ev.len), 0.0);
            for (int h = 0; h < 6; ++h) {
                const double f = rng::uniform(eng, 20.0, 45.0);
                const double ph = rng::uniform(eng, 0.0, kTwoPi);
                for (int i = 0; i < ev.len; ++i)
                    ev.wave[static_cast<std::size_t>(i)] +=
                        std::sin(kTwoPi * f * i / kSampleRateHz + ph);
            }
            double p = 0.0;
            for (int i = 0; i < ev.len; ++i) {
                ev.wave[static_cast<std::size_t>(i)] *= hann(i, ev.len);
                p += ev.wave[static_cast<std::size_t>(i)] * ev.wave[static_cast<std::size_t>(i)];
            }
            const double have = std::sqrt(p / ev.len);
            const double want = strength * rms * rng::uniform(eng, 2.5, 3.5);
            for (auto& v : ev.wave) v *= want / have;
            break;
        }
        default: {
            ev.type = "slow_drift";
            ev.len = static_cast<int>(rng::uniform(eng, 1.5, 2.5) * kSampleRateHz);
            if (ev.len > kSampleLength - 32) ev.len = kSampleLength - 32;
            const double a = strength * rms * rng::uniform(eng, 6.0, 9.0) *
                             (rng::uniform01(eng) < 0.5 ? -1.0 : 1.0);
            ev.wave.resize(static_cast<std::size_t>(ev.len));
            for (int i = 0; i < ev.len; ++i)
                ev.wave[static_cast<std::size_t>(i)] =
                    a * std::sin(kTwoPi * 0.5 * i / (ev.len - 1));
            break;
        }
    }
    const int lo = 16;
    const int hi = kSampleLength - ev.len - 16;
    ev.start = lo + static_cast<int>(rng::below(eng, static_cast<std::uint64_t>(hi - lo + 1)));
    return ev;
}

}  // namespace

SynthResult synth_generate(const SynthSpec& spec) {
    if (spec.subjects < 1 || spec.samples_per_class < 1)
        throw ArgumentError("synth: subjects and samples_per_class must be positive");
    if (spec.subject_gain_spread < 0.0 || spec.event_strength <= 0.0)
        throw ArgumentError("synth: bad spread or strength");

    SynthResult out;
    for (int subj = 1; subj <= spec.subjects; ++subj) {
        auto subj_eng = rng::make_engine(rng::mix(rng::mix(spec.seed, 101), subj));
        const double tilt = rng::uniform(subj_eng, 0.8, 1.2);
        const double gain =
            std::exp2(rng::uniform(subj_eng, -spec.subject_gain_spread, spec.subject_gain_spread));
        const double rms = 10.0 * gain;

        auto eng = rng::make_engine(rng::mix(rng::mix(spec.seed, 202), subj));
        for (int cls = 0; cls < 2; ++cls) {
            const Label label = cls == 0 ? Label::Alert : Label::Drowsy;
            for (int i = 0; i < spec.samples_per_class; ++i) {
                std::vector<double> base = synth_baseline(eng, tilt, rms);
                EventDraw ev = draw_event(eng, label, spec, rms);

                EegSample sample;
                sample.values = base;
                for (int t = 0; t < ev.len; ++t)
                    sample.values[static_cast<std::size_t>(ev.start + t)] +=
                        ev.wave[static_cast<std::size_t>(t)];
                sample.subject_id = subj;
                sample.label = label;

                EventAnnotation ann;
                ann.sample_index = static_cast<int>(out.set.samples.size());
                ann.event_type = ev.type;
                ann.start = ev.start;
                ann.end = ev.start + ev.len;

                out.set.samples.push_back(std::move(sample));
                out.events.push_back(std::move(ann));
                out.baselines.push_back(std::move(base));
            }
        }
    }
    return out;
}

void save_annotations_csv(const std::vector<EventAnnotation>& events,
                          const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os << "sample_index,event_type,start,end\n";
    for (const auto& e : events)
        os << e.sample_index << ',' << e.event_type << ',' << e.start << ',' << e.end << '\n';
    if (!os) throw DataError("write failed for " + path.string());
}

}  // namespace somno::data
