#include "somno/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "somno/binary_io.hpp"
#include "somno/rng.hpp"

namespace somno::model {

std::string variant_name(Variant v, int pool_size) {
    switch (v) {
        case Variant::Full: return "full";
        case Variant::NoActivation: return "no_activation";
        case Variant::NoBatchNorm: return "no_batchnorm";
        case Variant::AvgPool: return "avgpool" + std::to_string(pool_size);
    }
    throw ArgumentError("unknown variant value");
}

ModelConfig config_for_variant(const std::string& name) {
    ModelConfig cfg;
    if (name == "full") {
        cfg.variant = Variant::Full;
    } else if (name == "no_activation") {
        cfg.variant = Variant::NoActivation;
    } else if (name == "no_batchnorm") {
        cfg.variant = Variant::NoBatchNorm;
    } else if (name == "avgpool40") {
        cfg.variant = Variant::AvgPool;
        cfg.pool_size = 40;
        cfg.dropout_rate = 0.875;
    } else if (name == "avgpool80") {
        cfg.variant = Variant::AvgPool;
        cfg.pool_size = 80;
        cfg.dropout_rate = 0.75;
    } else {
        throw ArgumentError("unknown variant '" + name + "'");
    }
    return cfg;
}

void ModelConfig::validate() const {
    if (kernel_len % 2 != 0) throw ArgumentError("model: kernel length must be even");
    if (variant == Variant::AvgPool) {
        if (pool_size <= 0) throw ArgumentError("model: avgpool variant needs a pool size");
    } else if (pool_size != 0 || dropout_rate != 0.0) {
        throw ArgumentError("model: pool size and dropout apply to the avgpool variant only");
    }
    stack().validate();
}

nn::StackConfig ModelConfig::stack() const {
    nn::StackConfig s;
    s.input_len = input_len;
    s.kernel_len = kernel_len;
    s.num_filters = num_filters;
    s.num_classes = num_classes;
    s.use_batchnorm = variant != Variant::NoBatchNorm;
    s.use_activation = variant != Variant::NoActivation;
    s.pool_size = variant == Variant::AvgPool ? pool_size : 0;
    s.dropout_rate = variant == Variant::AvgPool ? dropout_rate : 0.0;
    return s;
}

std::int64_t param_count(const ModelConfig& cfg) {
    return cfg.stack().active_param_count();
}

ModelParams init_model(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams p = nn::make_stack_params(cfg.stack());
    auto eng = rng::make_engine(cfg.rng_seed);
    const double kb = std::sqrt(1.0 / cfg.kernel_len);
    for (auto& w : p.conv.kernels) w = rng::uniform(eng, -kb, kb);
    // conv biases stay zero
    std::fill(p.bn.gamma.begin(), p.bn.gamma.end(), 1.0);
    // beta stays zero
    const double db = std::sqrt(1.0 / cfg.num_filters);
    for (auto& w : p.dense.weights.data) w = rng::uniform(eng, -db, db);
    // dense biases stay zero
    return p;
}

namespace {

nn::Matrix to_matrix(const std::vector<std::vector<double>>& batch, int want_len) {
    if (batch.empty()) throw DataError("model: empty batch");
    nn::Matrix m(static_cast<int>(batch.size()), want_len);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (static_cast<int>(batch[i].size()) != want_len)
            throw DimensionError("model: sample " + std::to_string(i) + " has " +
                                 std::to_string(batch[i].size()) + " points, expected " +
                                 std::to_string(want_len));
        std::copy(batch[i].begin(), batch[i].end(), m.row(static_cast<int>(i)));
    }
    return m;
}

}  // namespace

nn::StackCache forward(const std::vector<std::vector<double>>& batch, const ModelParams& params,
                       const ModelConfig& cfg, bool training, std::mt19937_64* rng) {
    if (batch.size() < 2)
        throw DataError("model: need at least 2 samples, batch statistics are undefined for one");
    return nn::stack_forward(to_matrix(batch, cfg.input_len), params, cfg.stack(), training, rng);
}

TrainResult train(const data::LabeledSet& dataset, const ModelConfig& cfg,
                  const TrainConfig& train_cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    if (train_cfg.batch_size < 2) throw ArgumentError("train: batch size must be at least 2");
    if (train_cfg.epochs < 1) throw ArgumentError("train: need at least one epoch");
    if (dataset.samples.empty()) throw DataError("train: empty dataset");
    auto [alert_n, drowsy_n] = dataset.class_counts();
    if (alert_n == 0 || drowsy_n == 0)
        throw DataError("train: dataset must contain both classes");

    const nn::StackConfig stack = cfg.stack();
    const int n = static_cast<int>(dataset.samples.size());

    // Drop a trailing singleton batch up front so every epoch sees the same
    // number of optimizer steps.
    const int usable = (n % train_cfg.batch_size == 1) ? n - 1 : n;
    const int batches = (usable + train_cfg.batch_size - 1) / train_cfg.batch_size;
    if (batches == 0) throw DataError("train: not enough samples for a single batch");

    TrainResult res;
    res.params = init_model(cfg);
    res.batches_per_epoch = batches;
    res.samples_per_epoch = usable;

    std::vector<double> flat = nn::flatten(res.params);
    nn::AdamState adam;

    auto shuffle_eng = rng::make_engine(rng::mix(train_cfg.shuffle_seed, 11));
    auto dropout_eng = rng::make_engine(rng::mix(train_cfg.shuffle_seed, 23));
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
        rng::shuffle(order, shuffle_eng);
        double loss_sum = 0.0;
        for (int b = 0; b < batches; ++b) {
            const int lo = b * train_cfg.batch_size;
            const int hi = std::min(lo + train_cfg.batch_size, usable);
            nn::Matrix input(hi - lo, cfg.input_len);
            std::vector<int> labels(static_cast<std::size_t>(hi - lo));
            for (int i = lo; i < hi; ++i) {
                const auto& s = dataset.samples[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
                if (static_cast<int>(s.values.size()) != cfg.input_len)
                    throw DimensionError("train: sample length " + std::to_string(s.values.size()) +
                                         " does not match input length " +
                                         std::to_string(cfg.input_len));
                std::copy(s.values.begin(), s.values.end(), input.row(i - lo));
                labels[static_cast<std::size_t>(i - lo)] = static_cast<int>(s.label);
            }
            nn::StackCache cache =
                nn::stack_forward(input, res.params, stack, true, &dropout_eng);
            loss_sum += nn::cross_entropy_loss(cache.probs, labels);
            nn::StackParams grads = nn::stack_backward(cache, labels, res.params, stack);
            nn::adam_step(flat, nn::flatten(grads), adam, train_cfg.optimizer);
            nn::unflatten(flat, res.params);
        }
        res.epoch_loss.push_back(loss_sum / batches);
        if (on_epoch) on_epoch(epoch, res.params);
    }
    return res;
}

BundlePrediction predict_bundle(const std::vector<std::vector<double>>& bundle,
                                const ModelParams& params, const ModelConfig& cfg) {
    if (bundle.size() < 2)
        throw DataError("predict: need at least 2 samples to form batch statistics");
    nn::StackCache cache =
        nn::stack_forward(to_matrix(bundle, cfg.input_len), params, cfg.stack(), false, nullptr);
    BundlePrediction out;
    out.probs = std::move(cache.probs);
    out.labels.resize(static_cast<std::size_t>(out.probs.rows));
    for (int b = 0; b < out.probs.rows; ++b) {
        const double* pr = out.probs.row(b);
        int best = 0;
        for (int c = 1; c < out.probs.cols; ++c)
            if (pr[c] > pr[best]) best = c;  // strict: ties stay at the lower class
        out.labels[static_cast<std::size_t>(b)] = best;
    }
    return out;
}

BundlePrediction predict_bundle(const std::vector<data::EegSample>& bundle,
                                const ModelParams& params, const ModelConfig& cfg) {
    std::vector<std::vector<double>> values;
    values.reserve(bundle.size());
    for (const auto& s : bundle) values.push_back(s.values);
    return predict_bundle(values, params, cfg);
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint16_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const ModelParams& params) {
    cfg.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os.write("ICNN", 4);
    io::write_u16(os, kCheckpointVersion);
    io::write_u32(os, static_cast<std::uint32_t>(cfg.input_len));
    io::write_u32(os, static_cast<std::uint32_t>(cfg.kernel_len));
    io::write_u32(os, static_cast<std::uint32_t>(cfg.num_filters));
    io::write_u32(os, static_cast<std::uint32_t>(cfg.map_len()));
    io::write_u32(os, static_cast<std::uint32_t>(cfg.num_classes));
    io::write_u8(os, static_cast<std::uint8_t>(cfg.variant));
    io::write_u32(os, static_cast<std::uint32_t>(cfg.pool_size));
    io::write_f64(os, cfg.dropout_rate);
    io::write_u64(os, cfg.rng_seed);
    for (double v : nn::flatten(params)) io::write_f64(os, v);
    if (!os) throw DataError("write failed for " + path.string());
}

std::pair<ModelConfig, ModelParams> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    io::Reader r(is, path.filename().string());

    unsigned char magic[4];
    r.read_exact(magic, 4, "magic");
    if (std::memcmp(magic, "ICNN", 4) != 0)
        throw FormatError(r.origin() + ": bad magic at offset 0");
    std::uint64_t at = r.offset();
    const std::uint16_t version = r.u16("version");
    if (version != kCheckpointVersion)
        throw FormatError(r.origin() + ": unsupported version " + std::to_string(version) +
                          " at offset " + std::to_string(at));

    ModelConfig cfg;
    cfg.input_len = static_cast<int>(r.u32("input length"));
    cfg.kernel_len = static_cast<int>(r.u32("kernel length"));
    cfg.num_filters = static_cast<int>(r.u32("filter count"));
    at = r.offset();
    const std::uint32_t map_len = r.u32("map length");
    cfg.num_classes = static_cast<int>(r.u32("class count"));
    at = r.offset();
    const std::uint8_t variant = r.u8("variant");
    if (variant > static_cast<std::uint8_t>(Variant::AvgPool))
        throw FormatError(r.origin() + ": unknown variant " + std::to_string(variant) +
                          " at offset " + std::to_string(at));
    cfg.variant = static_cast<Variant>(variant);
    cfg.pool_size = static_cast<int>(r.u32("pool size"));
    cfg.dropout_rate = r.f64("dropout rate");
    cfg.rng_seed = r.u64("rng seed");

    if (map_len != static_cast<std::uint32_t>(cfg.map_len()))
        throw FormatError(r.origin() + ": stored map length " + std::to_string(map_len) +
                          " contradicts input and kernel lengths");
    try {
        cfg.validate();
    } catch (const Error& e) {
        throw FormatError(r.origin() + ": invalid configuration: " + e.what());
    }

    ModelParams params = nn::make_stack_params(cfg.stack());
    std::vector<double> flat(static_cast<std::size_t>(nn::flat_size(cfg.stack())));
    for (auto& v : flat) v = r.f64("parameters");
    nn::unflatten(flat, params);
    if (!r.at_end())
        throw FormatError(r.origin() + ": trailing bytes at offset " + std::to_string(r.offset()));
    return {cfg, params};
}

}  // namespace somno::model
