#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "somno/data.hpp"
#include "somno/nn.hpp"

namespace somno::model {

// Ablation variants of the classifier. Full is conv + batchnorm + elu + global
// average pooling; AvgPool swaps the global pool for windowed averaging plus
// dropout and a wider dense layer.
enum class Variant : std::uint8_t {
    Full = 0,
    NoActivation = 1,
    NoBatchNorm = 2,
    AvgPool = 3,
};

std::string variant_name(Variant v, int pool_size = 0);
// Accepts: full, no_activation, no_batchnorm, avgpool40, avgpool80.
struct ModelConfig;
ModelConfig config_for_variant(const std::string& name);

struct ModelConfig {
    int input_len = data::kSampleLength;
    int kernel_len = 64;   // must be even: the saliency ramps use half of it
    int num_filters = 32;
    int num_classes = 2;
    Variant variant = Variant::Full;
    int pool_size = 0;         // AvgPool only
    double dropout_rate = 0.0; // AvgPool only, training passes only
    std::uint64_t rng_seed = 1;

    int map_len() const { return input_len - kernel_len + 1; }
    nn::StackConfig stack() const;
    void validate() const;
};

using ModelParams = nn::StackParams;

// Uniform init: conv kernels in +-sqrt(1/kernel_len), dense weights in
// +-sqrt(1/num_filters); biases and beta zero, gamma one. Draw order is fixed
// by rng_seed.
ModelParams init_model(const ModelConfig& cfg);

std::int64_t param_count(const ModelConfig& cfg);

// One forward pass over a batch of raw windows. Requires batch >= 2: the
// network normalizes with the statistics of whatever batch it is given.
nn::StackCache forward(const std::vector<std::vector<double>>& batch, const ModelParams& params,
                       const ModelConfig& cfg, bool training = false,
                       std::mt19937_64* rng = nullptr);

struct TrainConfig {
    int batch_size = 50;
    int epochs = 50;
    nn::AdamConfig optimizer;
    std::uint64_t shuffle_seed = 1;
};

// Called after each completed epoch with the 1-based epoch number and the
// current parameters.
using EpochCallback = std::function<void(int epoch, const ModelParams& params)>;

struct TrainResult {
    ModelParams params;
    std::vector<double> epoch_loss;   // mean batch loss per epoch
    int batches_per_epoch = 0;
    int samples_per_epoch = 0;        // after dropping a trailing singleton
};

// Shuffled minibatch training. A trailing batch of size 1 is dropped rather
// than normalized against itself.
TrainResult train(const data::LabeledSet& dataset, const ModelConfig& cfg,
                  const TrainConfig& train_cfg, const EpochCallback& on_epoch = {});

struct BundlePrediction {
    std::vector<int> labels;  // argmax per sample, ties toward alert
    nn::Matrix probs;
};

// Inference over a bundle of windows that are normalized together.
BundlePrediction predict_bundle(const std::vector<data::EegSample>& bundle,
                                const ModelParams& params, const ModelConfig& cfg);
BundlePrediction predict_bundle(const std::vector<std::vector<double>>& bundle,
                                const ModelParams& params, const ModelConfig& cfg);

// Checkpoint container: "ICNN", u16 version, config fields, then the flat
// parameter vector as little-endian f64. Round trips are bit-exact.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const ModelParams& params);
std::pair<ModelConfig, ModelParams> load_checkpoint(const std::filesystem::path& path);

}  // namespace somno::model
