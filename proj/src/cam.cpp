#include "somno/cam.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "somno/svg.hpp"

namespace somno::cam {

ActivationMap activation_map(const nn::Tensor3& features, int sample_index,
                             const nn::DenseParams& dense, int class_index) {
    if (sample_index < 0 || sample_index >= features.batch)
        throw ArgumentError("saliency: sample index out of range");
    if (class_index < 0 || class_index >= dense.weights.cols)
        throw ArgumentError("saliency: class index out of range");
    if (dense.weights.rows != features.channels)
        throw DimensionError("saliency: dense layer width does not match the feature maps");

    ActivationMap map;
    map.class_index = class_index;
    map.values.assign(static_cast<std::size_t>(features.positions), 0.0);
    for (int k = 0; k < features.channels; ++k) {
        const double w = dense.weights.at(k, class_index);
        if (w == 0.0) continue;
        const double* row = features.row(sample_index, k);
        for (int j = 0; j < features.positions; ++j)
            map.values[static_cast<std::size_t>(j)] += w * row[j];
    }
    return map;
}

std::vector<double> heatmap(const ActivationMap& map, int kernel_len, int input_len) {
    if (kernel_len < 2 || kernel_len % 2 != 0)
        throw ArgumentError("saliency: kernel length must be even and at least 2");
    const int n = input_len - kernel_len + 1;
    if (n < 1) throw DimensionError("saliency: kernel longer than the input");
    if (static_cast<int>(map.values.size()) != n)
        throw DimensionError("saliency: map length " + std::to_string(map.values.size()) +
                             " does not match input and kernel lengths");

    const int half = kernel_len / 2;
    auto relu = [](double v) { return v > 0.0 ? v : 0.0; };
    const double first = relu(map.values.front());
    const double last = relu(map.values.back());

    std::vector<double> h(static_cast<std::size_t>(input_len), 0.0);
    for (int a = 0; a < input_len; ++a) {
        if (a < half - 1) {
            // Leading positions are covered only by windows centered further
            // right; fade the first map value linearly to zero at the edge.
            h[static_cast<std::size_t>(a)] =
                first * (2.0 * a) / static_cast<double>(kernel_len - 2);
        } else if (a <= input_len - half - 1) {
            h[static_cast<std::size_t>(a)] = relu(map.values[static_cast<std::size_t>(a - (half - 1))]);
        } else {
            h[static_cast<std::size_t>(a)] =
                last * (2.0 * input_len - 2.0 * (a + 1)) / static_cast<double>(kernel_len);
        }
    }
    return h;
}

std::vector<double> normalize_heatmap(std::vector<double> values) {
    double top = 0.0;
    for (double v : values) top = std::max(top, v);
    if (top > 0.0) {
        for (auto& v : values) v /= top;
    } else {
        std::fill(values.begin(), values.end(), 0.0);
    }
    return values;
}

Explanation explain_at(const std::vector<data::EegSample>& bundle, int index,
                       const model::ModelParams& params, const model::ModelConfig& cfg) {
    if (cfg.variant == model::Variant::AvgPool)
        throw ArgumentError("saliency: defined only for the global-average-pooled head");
    if (index < 0 || index >= static_cast<int>(bundle.size()))
        throw ArgumentError("saliency: bundle index out of range");

    nn::StackCache cache;
    {
        std::vector<std::vector<double>> values;
        values.reserve(bundle.size());
        for (const auto& s : bundle) values.push_back(s.values);
        if (values.size() < 2)
            throw DataError("saliency: need at least 2 samples to form batch statistics");
        nn::Matrix input(static_cast<int>(values.size()), cfg.input_len);
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (static_cast<int>(values[i].size()) != cfg.input_len)
                throw DimensionError("saliency: sample length mismatch in the bundle");
            std::copy(values[i].begin(), values[i].end(), input.row(static_cast<int>(i)));
        }
        cache = nn::stack_forward(input, params, cfg.stack(), false, nullptr);
    }

    Explanation ex;
    ex.sample_index = index;
    ex.probs.assign(cache.probs.row(index), cache.probs.row(index) + cfg.num_classes);
    ex.heatmaps.reserve(static_cast<std::size_t>(cfg.num_classes));
    for (int c = 0; c < cfg.num_classes; ++c) {
        ActivationMap m = activation_map(cache.features, index, params.dense, c);
        ex.heatmaps.push_back(normalize_heatmap(heatmap(m, cfg.kernel_len, cfg.input_len)));
    }
    ex.band_powers = baselines::band_power_features(bundle[static_cast<std::size_t>(index)].values);
    return ex;
}

Explanation explain(const data::EegSample& sample, const std::vector<data::EegSample>& bundle,
                    const model::ModelParams& params, const model::ModelConfig& cfg) {
    for (std::size_t i = 0; i < bundle.size(); ++i) {
        const auto& b = bundle[i];
        if (b.subject_id == sample.subject_id && b.label == sample.label &&
            b.values == sample.values)
            return explain_at(bundle, static_cast<int>(i), params, cfg);
    }
    throw ArgumentError("saliency: the sample is not a member of the bundle");
}

void write_explain_csv(const data::EegSample& sample, const Explanation& ex,
                       const std::filesystem::path& path) {
    if (ex.heatmaps.size() < 2) throw DimensionError("saliency: need both class heatmaps");
    std::ofstream os(path);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "# p_alert=%.17g p_drowsy=%.17g delta=%.9g theta=%.9g alpha=%.9g beta=%.9g",
                  ex.probs[0], ex.probs[1], ex.band_powers.delta, ex.band_powers.theta,
                  ex.band_powers.alpha, ex.band_powers.beta);
    os << buf << '\n';
    for (std::size_t a = 0; a < sample.values.size(); ++a) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g", a, sample.values[a],
                      ex.heatmaps[0][a], ex.heatmaps[1][a]);
        os << buf << '\n';
    }
    if (!os) throw DataError("write failed for " + path.string());
}

void write_explain_svg(const data::EegSample& sample, const Explanation& ex,
                       const std::filesystem::path& path) {
    const int L = static_cast<int>(sample.values.size());
    const std::size_t cls =
        ex.probs.size() > 1 && ex.probs[1] > ex.probs[0] ? 1 : 0;  // predicted class
    const auto& heat = ex.heatmaps[cls];

    svg::Document doc(920, 420);
    char buf[160];
    std::snprintf(buf, sizeof buf, "subject %d, %s window  (p_alert=%.3f  p_drowsy=%.3f)",
                  sample.subject_id, sample.label == data::Label::Alert ? "alert" : "drowsy",
                  ex.probs[0], ex.probs[1]);
    doc.text(60, 26, buf, 15);
    std::snprintf(buf, sizeof buf, "colored by the %s-class saliency",
                  cls == 0 ? "alert" : "drowsy");
    doc.text(860, 26, buf, 12, "end", "#666666");

    const double px0 = 60, px1 = 880, py0 = 44, py1 = 290;
    doc.rect(px0, py0, px1 - px0, py1 - py0, "#fafafa", "#cccccc", 1.0);
    double vmin = sample.values[0], vmax = sample.values[0];
    for (double v : sample.values) {
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
    }
    if (vmax == vmin) vmax = vmin + 1.0;
    const double pad = 0.06 * (vmax - vmin);
    vmin -= pad;
    vmax += pad;
    auto sx = [&](double a) { return px0 + (px1 - px0) * a / (L - 1); };
    auto sy = [&](double v) { return py1 - (py1 - py0) * (v - vmin) / (vmax - vmin); };
    for (int a = 0; a + 1 < L; ++a) {
        const double h = 0.5 * (heat[static_cast<std::size_t>(a)] +
                                heat[static_cast<std::size_t>(a) + 1]);
        doc.line(sx(a), sy(sample.values[static_cast<std::size_t>(a)]), sx(a + 1),
                 sy(sample.values[static_cast<std::size_t>(a) + 1]), svg::heat_color(h), 1.6);
    }
    for (int sec = 0; sec <= L / data::kSampleRateHz; ++sec) {
        const double x = sx(sec * data::kSampleRateHz);
        doc.line(x, py1, x, py1 + 5, "#888888", 1.0);
        doc.text(x, py1 + 18, std::to_string(sec) + " s", 11, "middle", "#555555");
    }

    // Saliency color key.
    for (int i = 0; i < 120; ++i)
        doc.rect(px1 - 140 + i, py0 + 8, 1.2, 8, svg::heat_color(i / 119.0));
    doc.text(px1 - 146, py0 + 16, "0", 10, "end", "#555555");
    doc.text(px1 - 14, py0 + 16, "1", 10, "start", "#555555");

    // Relative band powers.
    const double bx0 = 60, by = 330, bw = 320, bh = 16;
    const char* names[4] = {"delta", "theta", "alpha", "beta"};
    const auto bands = ex.band_powers.as_array();
    doc.text(bx0, by - 8, "relative band power", 12, "start", "#444444");
    for (int i = 0; i < 4; ++i) {
        const double y = by + i * (bh + 6);
        doc.text(bx0 + 40, y + bh - 4, names[i], 11, "end", "#333333");
        doc.rect(bx0 + 50, y, bw, bh, "#eeeeee");
        doc.rect(bx0 + 50, y, bw * std::clamp(bands[static_cast<std::size_t>(i)], 0.0, 1.0), bh,
                 "#4878b0");
        std::snprintf(buf, sizeof buf, "%.3f", bands[static_cast<std::size_t>(i)]);
        doc.text(bx0 + 58 + bw, y + bh - 4, buf, 11, "start", "#333333");
    }
    doc.write(path);
}

}  // namespace somno::cam
