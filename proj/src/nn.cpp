#include "somno/nn.hpp"

#include <cmath>
#include <string>

#include "somno/rng.hpp"

namespace somno::nn {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw DimensionError(msg);
}

// Four-lane strided sums; the lane order is fixed, so results are
// reproducible while the independent accumulators vectorize.
void sum_and_sumsq(const double* p, int n, double& sum, double& sumsq) {
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    double q0 = 0, q1 = 0, q2 = 0, q3 = 0;
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += p[i];
        s1 += p[i + 1];
        s2 += p[i + 2];
        s3 += p[i + 3];
        q0 += p[i] * p[i];
        q1 += p[i + 1] * p[i + 1];
        q2 += p[i + 2] * p[i + 2];
        q3 += p[i + 3] * p[i + 3];
    }
    for (; i < n; ++i) {
        s0 += p[i];
        q0 += p[i] * p[i];
    }
    sum += (s0 + s1) + (s2 + s3);
    sumsq += (q0 + q1) + (q2 + q3);
}

void sum_and_dot(const double* a, const double* b, int n, double& sum, double& dot) {
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    double d0 = 0, d1 = 0, d2 = 0, d3 = 0;
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i];
        s1 += a[i + 1];
        s2 += a[i + 2];
        s3 += a[i + 3];
        d0 += a[i] * b[i];
        d1 += a[i + 1] * b[i + 1];
        d2 += a[i + 2] * b[i + 2];
        d3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) {
        s0 += a[i];
        d0 += a[i] * b[i];
    }
    sum += (s0 + s1) + (s2 + s3);
    dot += (d0 + d1) + (d2 + d3);
}

}  // namespace

Tensor3 conv1d_forward(const Matrix& input, const ConvLayerParams& p) {
    require(p.num_filters > 0 && p.kernel_len > 0, "conv: empty filter bank");
    require(static_cast<std::size_t>(p.num_filters) * p.kernel_len == p.kernels.size(),
            "conv: kernel storage does not match num_filters * kernel_len");
    require(static_cast<std::size_t>(p.num_filters) == p.biases.size(),
            "conv: bias count does not match num_filters");
    require(input.cols >= p.kernel_len,
            "conv: input length " + std::to_string(input.cols) + " shorter than kernel " +
                std::to_string(p.kernel_len));

    const int out_len = input.cols - p.kernel_len + 1;
    Tensor3 out(input.rows, p.num_filters, out_len);
    const int klen = p.kernel_len;
    // Tap-outer accumulation: the inner loop writes independent positions, so
    // it vectorizes without reassociating any per-position sum.
    for (int b = 0; b < input.rows; ++b) {
        const double* x = input.row(b);
        for (int k = 0; k < p.num_filters; ++k) {
            const double* w = p.kernel(k);
            double* const __restrict__ o = out.row(b, k);
            std::fill(o, o + out_len, p.biases[static_cast<std::size_t>(k)]);
            for (int t = 0; t < klen; ++t) {
                const double wt = w[t];
                const double* const __restrict__ xt = x + t;
                for (int j = 0; j < out_len; ++j) o[j] += wt * xt[j];
            }
        }
    }
    return out;
}

Tensor3 batchnorm_forward(const Tensor3& x, const BatchNormParams& p, BatchNormCache* cache) {
    require(static_cast<std::size_t>(x.channels) == p.gamma.size() &&
                static_cast<std::size_t>(x.channels) == p.beta.size(),
            "batchnorm: parameter size does not match channel count");
    const std::int64_t n = static_cast<std::int64_t>(x.batch) * x.positions;
    if (n < 2) throw DataError("batchnorm: degenerate batch, need at least 2 values per channel");

    Tensor3 out(x.batch, x.channels, x.positions);
    if (cache) {
        cache->mean.assign(static_cast<std::size_t>(x.channels), 0.0);
        cache->inv_std.assign(static_cast<std::size_t>(x.channels), 0.0);
        cache->normalized = Tensor3(x.batch, x.channels, x.positions);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (int c = 0; c < x.channels; ++c) {
        double sum = 0.0, sq = 0.0;
        for (int b = 0; b < x.batch; ++b) sum_and_sumsq(x.row(b, c), x.positions, sum, sq);
        const double mean = sum * inv_n;
        double var = sq * inv_n - mean * mean;  // biased
        if (var < 0.0) var = 0.0;               // guard against rounding
        const double inv_std = 1.0 / std::sqrt(var + p.epsilon);
        const double g = p.gamma[static_cast<std::size_t>(c)];
        const double beta = p.beta[static_cast<std::size_t>(c)];
        if (cache) {
            cache->mean[static_cast<std::size_t>(c)] = mean;
            cache->inv_std[static_cast<std::size_t>(c)] = inv_std;
        }
        for (int b = 0; b < x.batch; ++b) {
            const double* r = x.row(b, c);
            double* o = out.row(b, c);
            double* nh = cache ? cache->normalized.row(b, c) : nullptr;
            for (int j = 0; j < x.positions; ++j) {
                const double xhat = (r[j] - mean) * inv_std;
                if (nh) nh[j] = xhat;
                o[j] = g * xhat + beta;
            }
        }
    }
    return out;
}

Tensor3 elu(const Tensor3& x, double alpha) {
    if (alpha <= 0.0) throw ArgumentError("elu: alpha must be positive");
    Tensor3 out(x.batch, x.channels, x.positions);
    const std::size_t n = x.data.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double v = x.data[i];
        out.data[i] = v >= 0.0 ? v : alpha * (std::exp(v) - 1.0);
    }
    return out;
}

Matrix global_average_pool(const Tensor3& x) {
    require(x.positions > 0, "pool: empty position axis");
    Matrix out(x.batch, x.channels);
    const double inv = 1.0 / static_cast<double>(x.positions);
    for (int b = 0; b < x.batch; ++b) {
        for (int c = 0; c < x.channels; ++c) {
            const double* r = x.row(b, c);
            double acc = 0.0;
            for (int j = 0; j < x.positions; ++j) acc += r[j];
            out.at(b, c) = acc * inv;
        }
    }
    return out;
}

Tensor3 window_average_pool(const Tensor3& x, int pool_size) {
    if (pool_size <= 0) throw ArgumentError("pool: window size must be positive");
    const int out_len = x.positions / pool_size;
    require(out_len > 0, "pool: window longer than the position axis");
    Tensor3 out(x.batch, x.channels, out_len);
    const double inv = 1.0 / static_cast<double>(pool_size);
    for (int b = 0; b < x.batch; ++b) {
        for (int c = 0; c < x.channels; ++c) {
            const double* r = x.row(b, c);
            double* o = out.row(b, c);
            for (int q = 0; q < out_len; ++q) {
                double acc = 0.0;
                const double* w = r + static_cast<std::size_t>(q) * pool_size;
                for (int t = 0; t < pool_size; ++t) acc += w[t];
                o[q] = acc * inv;
            }
        }
    }
    return out;
}

DenseSoftmaxResult dense_softmax(const Matrix& input, const DenseParams& p) {
    require(input.cols == p.weights.rows, "dense: input width does not match weight rows");
    require(static_cast<std::size_t>(p.weights.cols) == p.biases.size(),
            "dense: bias count does not match class count");
    const int classes = p.weights.cols;
    DenseSoftmaxResult res;
    res.logits = Matrix(input.rows, classes);
    res.probs = Matrix(input.rows, classes);
    for (int b = 0; b < input.rows; ++b) {
        const double* x = input.row(b);
        double* z = res.logits.row(b);
        for (int c = 0; c < classes; ++c) z[c] = p.biases[static_cast<std::size_t>(c)];
        for (int d = 0; d < input.cols; ++d) {
            const double xv = x[d];
            const double* wrow = p.weights.row(d);
            for (int c = 0; c < classes; ++c) z[c] += xv * wrow[c];
        }
        double zmax = z[0];
        for (int c = 1; c < classes; ++c) zmax = std::max(zmax, z[c]);
        double denom = 0.0;
        double* pr = res.probs.row(b);
        for (int c = 0; c < classes; ++c) {
            pr[c] = std::exp(z[c] - zmax);
            denom += pr[c];
        }
        for (int c = 0; c < classes; ++c) pr[c] /= denom;
    }
    return res;
}

double cross_entropy_loss(const Matrix& probs, const std::vector<int>& labels) {
    require(static_cast<std::size_t>(probs.rows) == labels.size(),
            "loss: label count does not match batch");
    if (probs.rows == 0) throw DataError("loss: empty batch");
    double total = 0.0;
    for (int b = 0; b < probs.rows; ++b) {
        const int y = labels[static_cast<std::size_t>(b)];
        if (y < 0 || y >= probs.cols)
            throw DataError("loss: label " + std::to_string(y) + " out of range");
        total -= std::log(std::max(probs.at(b, y), 1e-12));
    }
    return total / static_cast<double>(probs.rows);
}

// ---------------------------------------------------------------------------

void StackConfig::validate() const {
    if (input_len <= 0 || kernel_len <= 0 || num_filters <= 0 || num_classes < 2)
        throw ArgumentError("stack: non-positive dimension");
    if (kernel_len > input_len) throw DimensionError("stack: kernel longer than input");
    if (pool_size < 0) throw ArgumentError("stack: negative pool size");
    if (pool_size > 0 && conv_out_len() / pool_size == 0)
        throw DimensionError("stack: pool window longer than the feature map");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw ArgumentError("stack: dropout rate must lie in [0, 1)");
    if (elu_alpha <= 0.0) throw ArgumentError("stack: elu alpha must be positive");
    if (bn_epsilon <= 0.0) throw ArgumentError("stack: batchnorm epsilon must be positive");
}

std::int64_t StackConfig::active_param_count() const {
    std::int64_t count = 0;
    count += static_cast<std::int64_t>(num_filters) * kernel_len + num_filters;
    if (use_batchnorm) count += 2 * static_cast<std::int64_t>(num_filters);
    count += static_cast<std::int64_t>(dense_in()) * num_classes + num_classes;
    return count;
}

StackParams make_stack_params(const StackConfig& cfg) {
    cfg.validate();
    StackParams p;
    p.conv.num_filters = cfg.num_filters;
    p.conv.kernel_len = cfg.kernel_len;
    p.conv.kernels.assign(static_cast<std::size_t>(cfg.num_filters) * cfg.kernel_len, 0.0);
    p.conv.biases.assign(static_cast<std::size_t>(cfg.num_filters), 0.0);
    p.bn.gamma.assign(static_cast<std::size_t>(cfg.num_filters), 0.0);
    p.bn.beta.assign(static_cast<std::size_t>(cfg.num_filters), 0.0);
    p.bn.epsilon = cfg.bn_epsilon;
    p.dense.weights = Matrix(cfg.dense_in(), cfg.num_classes);
    p.dense.biases.assign(static_cast<std::size_t>(cfg.num_classes), 0.0);
    return p;
}

std::int64_t flat_size(const StackConfig& cfg) {
    return static_cast<std::int64_t>(cfg.num_filters) * cfg.kernel_len + cfg.num_filters +
           2 * static_cast<std::int64_t>(cfg.num_filters) +
           static_cast<std::int64_t>(cfg.dense_in()) * cfg.num_classes + cfg.num_classes;
}

std::vector<double> flatten(const StackParams& p) {
    std::vector<double> flat;
    flat.reserve(p.conv.kernels.size() + p.conv.biases.size() + p.bn.gamma.size() +
                 p.bn.beta.size() + p.dense.weights.data.size() + p.dense.biases.size());
    auto append = [&flat](const std::vector<double>& v) {
        flat.insert(flat.end(), v.begin(), v.end());
    };
    append(p.conv.kernels);
    append(p.conv.biases);
    append(p.bn.gamma);
    append(p.bn.beta);
    append(p.dense.weights.data);
    append(p.dense.biases);
    return flat;
}

void unflatten(const std::vector<double>& flat, StackParams& p) {
    const std::size_t want = p.conv.kernels.size() + p.conv.biases.size() + p.bn.gamma.size() +
                             p.bn.beta.size() + p.dense.weights.data.size() +
                             p.dense.biases.size();
    require(flat.size() == want, "unflatten: size mismatch");
    std::size_t off = 0;
    auto take = [&](std::vector<double>& v) {
        std::copy(flat.begin() + off, flat.begin() + off + v.size(), v.begin());
        off += v.size();
    };
    take(p.conv.kernels);
    take(p.conv.biases);
    take(p.bn.gamma);
    take(p.bn.beta);
    take(p.dense.weights.data);
    take(p.dense.biases);
}

StackCache stack_forward(const Matrix& input, const StackParams& p, const StackConfig& cfg,
                         bool training, std::mt19937_64* rng) {
    cfg.validate();
    require(input.cols == cfg.input_len, "stack: sample length does not match input_len");
    if (input.rows < 1) throw DataError("stack: empty batch");

    StackCache cache;
    cache.input = input;
    cache.conv_out = conv1d_forward(input, p.conv);

    const Tensor3* pre_act = &cache.conv_out;
    Tensor3 bn_out;
    if (cfg.use_batchnorm) {
        bn_out = batchnorm_forward(cache.conv_out, p.bn, &cache.bn);
        pre_act = &bn_out;
    }
    if (cfg.use_activation) {
        cache.features = elu(*pre_act, cfg.elu_alpha);
    } else {
        cache.features = *pre_act;
    }

    if (cfg.pool_size > 0) {
        cache.pooled = window_average_pool(cache.features, cfg.pool_size);
    } else {
        Matrix g = global_average_pool(cache.features);
        cache.pooled = Tensor3(g.rows, g.cols, 1);
        for (int b = 0; b < g.rows; ++b)
            for (int c = 0; c < g.cols; ++c) cache.pooled.at(b, c, 0) = g.at(b, c);
    }

    const bool drop = training && cfg.dropout_rate > 0.0;
    if (drop) {
        if (!rng) throw ArgumentError("stack: dropout requires an rng during training");
        const double keep = 1.0 - cfg.dropout_rate;
        const double scale = 1.0 / keep;
        cache.dropout_scale.assign(cache.pooled.data.size(), 0.0);
        for (std::size_t i = 0; i < cache.pooled.data.size(); ++i) {
            const double s = somno::rng::uniform01(*rng) < keep ? scale : 0.0;
            cache.dropout_scale[i] = s;
            cache.pooled.data[i] *= s;
        }
    }

    cache.flat = Matrix(cache.pooled.batch, cfg.dense_in());
    for (int b = 0; b < cache.pooled.batch; ++b) {
        double* dst = cache.flat.row(b);
        for (int c = 0; c < cache.pooled.channels; ++c) {
            const double* src = cache.pooled.row(b, c);
            for (int q = 0; q < cache.pooled.positions; ++q)
                dst[c * cache.pooled.positions + q] = src[q];
        }
    }

    DenseSoftmaxResult head = dense_softmax(cache.flat, p.dense);
    cache.logits = std::move(head.logits);
    cache.probs = std::move(head.probs);
    return cache;
}

StackParams stack_backward(const StackCache& cache, const std::vector<int>& labels,
                           const StackParams& p, const StackConfig& cfg) {
    const int B = cache.probs.rows;
    const int C = cfg.num_filters;
    const int P = cfg.conv_out_len();
    const int Q = cfg.pooled_len();
    const int K = cfg.num_classes;
    require(static_cast<std::size_t>(B) == labels.size(), "backward: label count mismatch");

    StackParams g = make_stack_params(cfg);

    // Softmax with cross-entropy: dlogit = (prob - onehot) / B.
    Matrix dlogits(B, K);
    const double inv_b = 1.0 / static_cast<double>(B);
    for (int b = 0; b < B; ++b) {
        const int y = labels[static_cast<std::size_t>(b)];
        if (y < 0 || y >= K) throw DataError("backward: label out of range");
        const double* pr = cache.probs.row(b);
        double* dl = dlogits.row(b);
        for (int c = 0; c < K; ++c) dl[c] = (pr[c] - (c == y ? 1.0 : 0.0)) * inv_b;
    }

    const int D = cfg.dense_in();
    Matrix dflat(B, D);
    for (int b = 0; b < B; ++b) {
        const double* x = cache.flat.row(b);
        const double* dl = dlogits.row(b);
        for (int c = 0; c < K; ++c) g.dense.biases[static_cast<std::size_t>(c)] += dl[c];
        for (int d = 0; d < D; ++d) {
            const double* wrow = p.dense.weights.row(d);
            double* gw = g.dense.weights.row(d);
            double acc = 0.0;
            for (int c = 0; c < K; ++c) {
                gw[c] += x[d] * dl[c];
                acc += wrow[c] * dl[c];
            }
            dflat.at(b, d) = acc;
        }
    }

    // Undo dropout scaling, then spread pooling gradients back over positions.
    Tensor3 dfeat(B, C, P);
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
            double* df = dfeat.row(b, c);
            for (int q = 0; q < Q; ++q) {
                double dp = dflat.at(b, c * Q + q);
                if (!cache.dropout_scale.empty())
                    dp *= cache.dropout_scale[(static_cast<std::size_t>(b) * C + c) * Q + q];
                if (cfg.pool_size > 0) {
                    const double share = dp / static_cast<double>(cfg.pool_size);
                    double* w = df + static_cast<std::size_t>(q) * cfg.pool_size;
                    for (int t = 0; t < cfg.pool_size; ++t) w[t] += share;
                } else {
                    const double share = dp / static_cast<double>(P);
                    for (int j = 0; j < P; ++j) df[j] += share;
                }
            }
        }
    }

    // Activation. elu' is 1 for non-negative inputs; for negative inputs the
    // output f satisfies f' = f + alpha, and sign(output) == sign(input).
    if (cfg.use_activation) {
        for (std::size_t i = 0; i < dfeat.data.size(); ++i) {
            const double f = cache.features.data[i];
            if (f < 0.0) dfeat.data[i] *= f + cfg.elu_alpha;
        }
    }

    // Batchnorm backward per channel over the (batch, position) population.
    Tensor3 dconv(B, C, P);
    if (cfg.use_batchnorm) {
        const double inv_n = 1.0 / (static_cast<double>(B) * P);
        for (int c = 0; c < C; ++c) {
            double s1 = 0.0, s2 = 0.0;
            for (int b = 0; b < B; ++b)
                sum_and_dot(dfeat.row(b, c), cache.bn.normalized.row(b, c), P, s1, s2);
            g.bn.beta[static_cast<std::size_t>(c)] = s1;
            g.bn.gamma[static_cast<std::size_t>(c)] = s2;
            const double gamma = p.bn.gamma[static_cast<std::size_t>(c)];
            const double coeff = gamma * cache.bn.inv_std[static_cast<std::size_t>(c)];
            const double m1 = s1 * inv_n;
            const double m2 = s2 * inv_n;
            for (int b = 0; b < B; ++b) {
                const double* dy = dfeat.row(b, c);
                const double* xh = cache.bn.normalized.row(b, c);
                double* dx = dconv.row(b, c);
                for (int j = 0; j < P; ++j) dx[j] = coeff * (dy[j] - m1 - xh[j] * m2);
            }
        }
    } else {
        dconv = dfeat;
    }

    // Convolution parameter gradients; the input needs no gradient.
    const int klen = cfg.kernel_len;
    for (int b = 0; b < B; ++b) {
        const double* x = cache.input.row(b);
        for (int k = 0; k < C; ++k) {
            const double* dj = dconv.row(b, k);
            double* const __restrict__ gk = g.conv.kernel(k);
            double bias_acc = 0.0;
            for (int j = 0; j < P; ++j) {
                const double d = dj[j];
                bias_acc += d;
                const double* const __restrict__ xj = x + j;
                for (int t = 0; t < klen; ++t) gk[t] += d * xj[t];
            }
            g.conv.biases[static_cast<std::size_t>(k)] += bias_acc;
        }
    }

    return g;
}

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
               const AdamConfig& cfg) {
    require(params.size() == grads.size(), "adam: gradient size does not match parameters");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
        state.step = 0;
    }
    require(state.m.size() == params.size(), "adam: state size does not match parameters");
    state.step += 1;
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double gi = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * gi;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * gi * gi;
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
}

}  // namespace somno::nn
