#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "somno/errors.hpp"

// Dense numeric kernels for the 1-D convolutional classifier. Everything is
// double precision and deterministic; no layer keeps running statistics.

namespace somno::nn {

// batch x channels x positions, positions contiguous.
struct Tensor3 {
    int batch = 0;
    int channels = 0;
    int positions = 0;
    std::vector<double> data;

    Tensor3() = default;
    Tensor3(int b, int c, int p)
        : batch(b), channels(c), positions(p),
          data(static_cast<std::size_t>(b) * c * p, 0.0) {}

    double* row(int b, int c) {
        return data.data() + (static_cast<std::size_t>(b) * channels + c) * positions;
    }
    const double* row(int b, int c) const {
        return data.data() + (static_cast<std::size_t>(b) * channels + c) * positions;
    }
    double& at(int b, int c, int p) { return row(b, c)[p]; }
    double at(int b, int c, int p) const { return row(b, c)[p]; }
};

// rows x cols, row-major.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
    double& at(int r, int c) { return row(r)[c]; }
    double at(int r, int c) const { return row(r)[c]; }
};

struct ConvLayerParams {
    int num_filters = 0;
    int kernel_len = 0;
    std::vector<double> kernels;  // num_filters * kernel_len, filter-major
    std::vector<double> biases;   // num_filters

    double* kernel(int k) { return kernels.data() + static_cast<std::size_t>(k) * kernel_len; }
    const double* kernel(int k) const {
        return kernels.data() + static_cast<std::size_t>(k) * kernel_len;
    }
};

struct BatchNormParams {
    std::vector<double> gamma;
    std::vector<double> beta;
    double epsilon = 1e-5;
};

struct DenseParams {
    Matrix weights;               // in_features x num_classes
    std::vector<double> biases;   // num_classes
};

// Valid (no padding) correlation, stride 1. input is batch x signal_len.
// Output positions = signal_len - kernel_len + 1.
Tensor3 conv1d_forward(const Matrix& input, const ConvLayerParams& p);

struct BatchNormCache {
    std::vector<double> mean;     // per channel
    std::vector<double> inv_std;  // per channel, 1/sqrt(var + eps)
    Tensor3 normalized;           // x-hat, before scale and shift
};

// Normalizes per channel over (batch, position) with biased variance; always
// uses the statistics of the batch it is given. Needs batch*positions >= 2.
Tensor3 batchnorm_forward(const Tensor3& x, const BatchNormParams& p,
                          BatchNormCache* cache = nullptr);

Tensor3 elu(const Tensor3& x, double alpha = 1.0);

// Mean over positions; result is batch x channels.
Matrix global_average_pool(const Tensor3& x);

// Non-overlapping windows of pool_size averaged; trailing positions that do
// not fill a window are dropped.
Tensor3 window_average_pool(const Tensor3& x, int pool_size);

struct DenseSoftmaxResult {
    Matrix logits;
    Matrix probs;
};

// Affine layer followed by softmax with max-subtraction.
DenseSoftmaxResult dense_softmax(const Matrix& input, const DenseParams& p);

// Mean negative log-likelihood; probabilities clamped at 1e-12 before log.
double cross_entropy_loss(const Matrix& probs, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Full stack: conv -> [batchnorm] -> [elu] -> pool -> [dropout] -> dense+softmax

struct StackConfig {
    int input_len = 384;
    int kernel_len = 64;
    int num_filters = 32;
    int num_classes = 2;
    bool use_batchnorm = true;
    bool use_activation = true;
    double elu_alpha = 1.0;
    double bn_epsilon = 1e-5;
    int pool_size = 0;          // 0 selects global average pooling
    double dropout_rate = 0.0;  // applied after pooling, training passes only

    int conv_out_len() const { return input_len - kernel_len + 1; }
    int pooled_len() const {
        return pool_size > 0 ? conv_out_len() / pool_size : 1;
    }
    int dense_in() const { return num_filters * pooled_len(); }
    // Parameters the forward pass actually reads under this configuration.
    std::int64_t active_param_count() const;
    void validate() const;
};

struct StackParams {
    ConvLayerParams conv;
    BatchNormParams bn;
    DenseParams dense;
};

// Allocates zeroed parameters with the shapes the config requires. gamma and
// beta are always allocated so the flat layout is variant-independent.
StackParams make_stack_params(const StackConfig& cfg);

// Flat layout: conv kernels, conv biases, gamma, beta, dense weights
// (row-major), dense biases. Checkpoints serialize in this exact order.
std::vector<double> flatten(const StackParams& p);
void unflatten(const std::vector<double>& flat, StackParams& p);
std::int64_t flat_size(const StackConfig& cfg);

struct StackCache {
    Matrix input;
    Tensor3 conv_out;
    BatchNormCache bn;           // filled only when batchnorm runs
    Tensor3 features;            // post-activation map fed to pooling
    Tensor3 pooled;
    std::vector<double> dropout_scale;  // per pooled element; empty when inactive
    Matrix flat;                 // pooled reshaped to batch x dense_in
    Matrix logits;
    Matrix probs;
};

// rng is required only when training with a positive dropout rate.
StackCache stack_forward(const Matrix& input, const StackParams& p, const StackConfig& cfg,
                         bool training = false, std::mt19937_64* rng = nullptr);

// Gradients of the mean cross-entropy loss, same shapes as the parameters.
// Parameters the config disables come back zero.
StackParams stack_backward(const StackCache& cache, const std::vector<int>& labels,
                           const StackParams& p, const StackConfig& cfg);

// ---------------------------------------------------------------------------
// Adam on the flat parameter vector.

struct AdamConfig {
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;  // added outside the square root
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;
};

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
               const AdamConfig& cfg);

}  // namespace somno::nn
