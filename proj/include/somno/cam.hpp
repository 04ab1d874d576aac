#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "somno/baselines.hpp"
#include "somno/data.hpp"
#include "somno/model.hpp"
#include "somno/nn.hpp"

// Class activation mapping for the global-average-pooled classifier: the
// dense weights of a class fold the feature maps into one saliency curve per
// class, drawn over the input it explains.

namespace somno::cam {

struct ActivationMap {
    std::vector<double> values;  // one per feature-map position
    int class_index = 0;
};

// M_c(j) = sum_k w_kc * features[sample][k][j]. The dense bias is excluded:
// averaging M_c over positions plus the bias recovers the class logit.
ActivationMap activation_map(const nn::Tensor3& features, int sample_index,
                             const nn::DenseParams& dense, int class_index);

// Upsamples a map of length n = L - l + 1 back to input length L. Interior
// positions take the rectified map value whose window is centered there; the
// first and last l/2 - 1 positions ramp linearly down to zero at the edges.
std::vector<double> heatmap(const ActivationMap& map, int kernel_len, int input_len);

// Scales to [0, 1] by the maximum; an all-nonpositive input comes back all
// zero rather than dividing by zero.
std::vector<double> normalize_heatmap(std::vector<double> values);

struct Explanation {
    int sample_index = 0;                         // within the bundle
    std::vector<double> probs;                    // per class
    std::vector<std::vector<double>> heatmaps;    // per class, normalized, input length
    baselines::BandPowerFeatures band_powers;
};

// Explains one bundle member. The bundle matters: it provides the batch
// statistics under which the sample is classified.
Explanation explain_at(const std::vector<data::EegSample>& bundle, int index,
                       const model::ModelParams& params, const model::ModelConfig& cfg);

// Locates `sample` in the bundle by exact content and explains it; throws
// ArgumentError when it is not a member.
Explanation explain(const data::EegSample& sample, const std::vector<data::EegSample>& bundle,
                    const model::ModelParams& params, const model::ModelConfig& cfg);

// One comment header line (probabilities and band powers), then one row per
// input position: position,signal,heatmap_alert,heatmap_drowsy.
void write_explain_csv(const data::EegSample& sample, const Explanation& ex,
                       const std::filesystem::path& path);

// Trace colored by the predicted class's heatmap, plus a band-power bar.
void write_explain_svg(const data::EegSample& sample, const Explanation& ex,
                       const std::filesystem::path& path);

}  // namespace somno::cam
