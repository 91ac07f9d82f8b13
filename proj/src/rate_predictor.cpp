#include "xlf5/rate_predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "xlf5/checkpoint.hpp"
#include "xlf5/errors.hpp"

namespace xlf5 {

RateCategorySet build_category_set(Granularity g) {
    RateCategorySet c;
    c.delta = 0.25;
    c.min_rate = 0.25;
    c.max_rate = g == Granularity::phoneme ? 18.0 : 8.0;
    c.n_classes = int(std::lround(c.max_rate / c.delta));
    c.centers.resize(size_t(c.n_classes));
    for (int k = 0; k < c.n_classes; ++k) c.centers[size_t(k)] = c.delta * (k + 1);
    return c;
}

int rate_to_category(double v, const RateCategorySet& c) {
    if (!(v > 0.0)) fail(ErrorCode::invalid_rate, "rate must be positive");
    // nearest center with ties toward the lower index; centers[k] = d (k+1)
    double idx = std::ceil(v / c.delta - 1.5);
    if (idx < 0.0) return 0;
    if (idx > double(c.n_classes - 1)) return c.n_classes - 1;
    return int(idx);
}

std::vector<double> soft_labels(int c_gt, int n_classes, double sigma) {
    if (c_gt < 0 || c_gt >= n_classes) fail(ErrorCode::invalid_input, "c_gt out of range");
    if (!(sigma > 0.0)) fail(ErrorCode::invalid_input, "sigma must be positive");
    return nn::gaussian_soft_labels(c_gt, n_classes, sigma);
}

double gce_loss(const std::vector<std::vector<double>>& predicted_probs,
                const std::vector<int>& targets, double sigma, bool normalize_labels) {
    if (predicted_probs.empty()) fail(ErrorCode::invalid_input, "empty batch");
    if (predicted_probs.size() != targets.size())
        fail(ErrorCode::invalid_input, "batch size mismatch");
    constexpr double kEps = 1e-12;
    double total = 0.0;
    for (size_t b = 0; b < predicted_probs.size(); ++b) {
        const auto& p = predicted_probs[b];
        int n = int(p.size());
        auto y = soft_labels(targets[b], n, sigma);
        if (normalize_labels) {
            double s = std::accumulate(y.begin(), y.end(), 0.0);
            for (double& v : y) v /= s;
        }
        double row = 0.0;
        for (int c = 0; c < n; ++c) row -= y[size_t(c)] * std::log(std::max(p[size_t(c)], kEps));
        total += row;
    }
    return total / double(predicted_probs.size());
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

namespace {

Tensor sinusoidal_positions(int64_t T, int64_t d) {
    Tensor pe({T, d});
    int64_t half = d / 2;
    for (int64_t t = 0; t < T; ++t)
        for (int64_t i = 0; i < half; ++i) {
            double freq = std::pow(10000.0, -double(i) / double(half));
            pe.at(t, 2 * i) = float(std::sin(double(t) * freq));
            pe.at(t, 2 * i + 1) = float(std::cos(double(t) * freq));
        }
    return pe;
}

Tensor init_normal(std::vector<int64_t> shape, Rng& rng, double fan_in, double fan_out) {
    float std = float(std::sqrt(2.0 / (fan_in + fan_out)));
    return Tensor::randn(std::move(shape), rng, std);
}

}  // namespace

RatePredictorModel::RatePredictorModel(PredictorConfig cfg, Granularity g, uint64_t init_seed)
    : cfg_(cfg), granularity_(g), categories_(build_category_set(g)) {
    if (cfg_.d_model % cfg_.n_heads != 0)
        fail(ErrorCode::config_error, "d_model must be divisible by n_heads");
    if (cfg_.conv_kernel % 2 == 0) fail(ErrorCode::config_error, "conv kernel must be odd");
    if (!(cfg_.sigma > 0.0)) fail(ErrorCode::config_error, "sigma must be positive");
    Rng rng(init_seed);
    int64_t d = cfg_.d_model, M = cfg_.n_mels, K = cfg_.conv_kernel, N = categories_.n_classes;
    int64_t f = int64_t(cfg_.ffn_mult) * d;

    params_.add("proj.w", init_normal({M, d}, rng, double(M), double(d)));
    params_.add("proj.b", Tensor({d}));
    for (int c = 0; c < 2; ++c) {
        std::string p = "conv" + std::to_string(c + 1);
        params_.add(p + ".w", init_normal({K, d, d}, rng, double(K * d), double(d)));
        params_.add(p + ".b", Tensor({d}));
    }
    for (int l = 0; l < cfg_.n_layers; ++l) {
        std::string p = "layer" + std::to_string(l);
        params_.add(p + ".ln1.g", Tensor::full({d}, 1.0f));
        params_.add(p + ".ln1.b", Tensor({d}));
        for (const char* nm : {"wq", "wk", "wv", "wo"})
            params_.add(p + ".attn." + std::string(nm), init_normal({d, d}, rng, double(d), double(d)));
        for (const char* nm : {"bq", "bk", "bv", "bo"})
            params_.add(p + ".attn." + std::string(nm), Tensor({d}));
        params_.add(p + ".ln2.g", Tensor::full({d}, 1.0f));
        params_.add(p + ".ln2.b", Tensor({d}));
        params_.add(p + ".ffn.w1", init_normal({d, f}, rng, double(d), double(f)));
        params_.add(p + ".ffn.b1", Tensor({f}));
        params_.add(p + ".ffn.w2", init_normal({f, d}, rng, double(f), double(d)));
        params_.add(p + ".ffn.b2", Tensor({d}));
    }
    params_.add("ln_f.g", Tensor::full({d}, 1.0f));
    params_.add("ln_f.b", Tensor({d}));
    params_.add("pool.w", init_normal({d}, rng, double(d), 1.0));
    params_.add("pool.b", Tensor({1}));
    // zero-initialized classifier: the untrained model is exactly uniform
    params_.add("head.w", Tensor({d, N}));
    params_.add("head.b", Tensor({N}));
}

nn::Var RatePredictorModel::forward_logits(const std::vector<const Tensor*>& mels, bool training,
                                           Rng* dropout_rng) const {
    using namespace nn;
    if (mels.empty()) fail(ErrorCode::invalid_input, "empty batch");
    int64_t B = int64_t(mels.size());
    int64_t M = cfg_.n_mels, d = cfg_.d_model;
    int64_t T = 0;
    for (const Tensor* m : mels) {
        if (m->rank() != 2 || m->dim(1) != M)
            fail(ErrorCode::config_mismatch,
                 "mel width " + std::to_string(m->rank() == 2 ? m->dim(1) : -1) +
                     " != model n_mels " + std::to_string(M));
        T = std::max(T, m->dim(0));
    }
    Tensor batch({B, T, M});
    Tensor mask({B, T});
    for (int64_t b = 0; b < B; ++b) {
        const Tensor& m = *mels[size_t(b)];
        std::copy_n(m.data(), m.numel(), batch.data() + b * T * M);
        for (int64_t t = 0; t < m.dim(0); ++t) mask.at(b, t) = 1.0f;
    }

    auto P = [&](const std::string& name) {
        Var v = params_.find(name);
        if (!v) fail(ErrorCode::config_error, "missing parameter " + name);
        return v;
    };
    float drop = training ? cfg_.dropout : 0.0f;
    Rng unused_rng(0);
    Rng& drng = dropout_rng ? *dropout_rng : unused_rng;

    Var x = linear(constant(std::move(batch)), P("proj.w"), P("proj.b"));
    // zero the padded frames so the convolutions see the same zero padding a
    // lone item would
    x = row_mask(x, mask);
    x = conv1d_same(x, P("conv1.w"), P("conv1.b"));
    x = gelu(x);
    x = row_mask(x, mask);
    x = conv1d_same(x, P("conv2.w"), P("conv2.b"));
    x = gelu(x);
    x = row_mask(x, mask);

    Tensor pe = sinusoidal_positions(T, d);
    Tensor pe_tiled({B, T, d});
    for (int64_t b = 0; b < B; ++b) std::copy_n(pe.data(), T * d, pe_tiled.data() + b * T * d);
    x = add(x, constant(std::move(pe_tiled)));

    for (int l = 0; l < cfg_.n_layers; ++l) {
        std::string p = "layer" + std::to_string(l);
        Var h = layer_norm(x, P(p + ".ln1.g"), P(p + ".ln1.b"));
        h = mha(h, P(p + ".attn.wq"), P(p + ".attn.bq"), P(p + ".attn.wk"), P(p + ".attn.bk"),
                P(p + ".attn.wv"), P(p + ".attn.bv"), P(p + ".attn.wo"), P(p + ".attn.bo"),
                cfg_.n_heads, mask);
        h = dropout(h, drop, drng, training);
        x = add(x, h);
        Var g = layer_norm(x, P(p + ".ln2.g"), P(p + ".ln2.b"));
        g = linear(g, P(p + ".ffn.w1"), P(p + ".ffn.b1"));
        g = gelu(g);
        g = linear(g, P(p + ".ffn.w2"), P(p + ".ffn.b2"));
        g = dropout(g, drop, drng, training);
        x = add(x, g);
    }
    x = layer_norm(x, P("ln_f.g"), P("ln_f.b"));
    Var pooled = attention_pool(x, P("pool.w"), P("pool.b"), mask);
    pooled = dropout(pooled, drop, drng, training);
    return linear(pooled, P("head.w"), P("head.b"));
}

std::vector<double> predictor_forward(const RatePredictorModel& model, const MelSpectrogram& mel) {
    std::vector<const Tensor*> batch{&mel.data};
    nn::Var logits = model.forward_logits(batch, false, nullptr);
    Tensor probs = nn::softmax_rows(logits->value);
    std::vector<double> out(size_t(probs.numel()));
    for (int64_t i = 0; i < probs.numel(); ++i) out[size_t(i)] = double(probs[i]);
    return out;
}

double predict_rate(const RatePredictorModel& model, const MelSpectrogram& mel) {
    auto probs = predictor_forward(model, mel);
    size_t best = 0;
    for (size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[best]) best = i;
    return model.categories().centers[best];
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

TrainResult train_rate_predictor(RatePredictorModel& model, const std::vector<RateExample>& dataset,
                                 const RateTrainOptions& opts, nn::AdamW* external_opt) {
    if (dataset.empty()) fail(ErrorCode::invalid_dataset, "empty dataset");
    for (const auto& ex : dataset) {
        if (ex.granularity != model.granularity())
            fail(ErrorCode::invalid_dataset, "mixed granularities in dataset");
        if (!(ex.true_rate > 0)) fail(ErrorCode::invalid_dataset, "non-positive rate label");
    }
    Rng rng(opts.seed);
    Rng crop_rng = rng.fork(1);
    Rng shuffle_rng = rng.fork(2);
    Rng dropout_rng = rng.fork(3);

    // crop long examples to the inference-window length
    std::vector<Tensor> cropped(dataset.size());
    std::vector<int> labels(dataset.size());
    for (size_t i = 0; i < dataset.size(); ++i) {
        const Tensor& m = dataset[i].mel.data;
        int64_t T = m.dim(0);
        if (T > opts.max_crop_frames) {
            int64_t start = int64_t(crop_rng.uniform_int(uint64_t(T - opts.max_crop_frames + 1)));
            Tensor c({int64_t(opts.max_crop_frames), m.dim(1)});
            std::copy_n(m.data() + start * m.dim(1), c.numel(), c.data());
            cropped[i] = std::move(c);
        } else {
            cropped[i] = m;
        }
        labels[i] = rate_to_category(dataset[i].true_rate, model.categories());
    }

    // fixed length-bucketed batches; batch order reshuffled every epoch
    std::vector<size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return cropped[a].dim(0) < cropped[b].dim(0);
    });
    std::vector<std::vector<size_t>> batches;
    for (size_t i = 0; i < order.size(); i += size_t(opts.batch_size))
        batches.emplace_back(order.begin() + int64_t(i),
                             order.begin() + int64_t(std::min(i + size_t(opts.batch_size),
                                                              order.size())));

    int steps_per_epoch = int(batches.size());
    int total_steps = steps_per_epoch * opts.epochs;
    nn::AdamW local_opt;
    nn::AdamW& opt = external_opt ? *external_opt : local_opt;
    if (opt.total_steps <= 1) {
        opt.peak_lr = opts.peak_lr;
        opt.warmup_steps = std::max(1, int(opts.warmup_frac * total_steps));
        opt.total_steps = total_steps;
        opt.weight_decay = opts.weight_decay;
    }

    TrainResult result;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        std::vector<size_t> bo(batches.size());
        std::iota(bo.begin(), bo.end(), 0);
        for (size_t i = bo.size(); i > 1; --i)
            std::swap(bo[i - 1], bo[shuffle_rng.uniform_int(i)]);
        double epoch_loss = 0.0;
        int64_t epoch_items = 0;
        for (size_t bi : bo) {
            const auto& batch = batches[bi];
            std::vector<const Tensor*> mels;
            std::vector<int> targets;
            for (size_t idx : batch) {
                mels.push_back(&cropped[idx]);
                targets.push_back(labels[idx]);
            }
            model.params().zero_grads();
            nn::Var logits = model.forward_logits(mels, true, &dropout_rng);
            nn::Var loss = nn::gce_with_logits(logits, targets, model.config().sigma,
                                               model.config().normalize_soft_labels);
            nn::backward(loss);
            opt.step(model.params());
            epoch_loss += double(loss->value[0]) * double(batch.size());
            epoch_items += int64_t(batch.size());
            ++result.steps_run;
        }
        result.epoch_losses.push_back(epoch_loss / double(epoch_items));
    }
    return result;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

void save_rate_predictor(const std::string& path, const RatePredictorModel& model,
                         const nn::AdamW* optimizer, const std::string& config_hash) {
    Checkpoint ckpt;
    const PredictorConfig& c = model.config();
    ckpt.config = {
        {"type", "rate_predictor"},
        {"granularity", granularity_to_string(model.granularity())},
        {"n_layers", c.n_layers},
        {"n_heads", c.n_heads},
        {"d_model", c.d_model},
        {"conv_kernel", c.conv_kernel},
        {"ffn_mult", c.ffn_mult},
        {"dropout", c.dropout},
        {"sigma", c.sigma},
        {"n_mels", c.n_mels},
        {"normalize_soft_labels", c.normalize_soft_labels},
        {"n_classes", model.categories().n_classes},
    };
    if (!config_hash.empty()) ckpt.config["config_hash"] = config_hash;
    for (const auto& [name, var] : model.params().items) ckpt.add(name, var->value);
    if (optimizer && !optimizer->m.empty()) {
        ckpt.config["optimizer_step"] = optimizer->step_count;
        ckpt.config["optimizer_total_steps"] = optimizer->total_steps;
        ckpt.config["optimizer_warmup_steps"] = optimizer->warmup_steps;
        ckpt.config["optimizer_peak_lr"] = optimizer->peak_lr;
        ckpt.config["optimizer_weight_decay"] = optimizer->weight_decay;
        for (size_t i = 0; i < model.params().items.size(); ++i) {
            ckpt.add("adam.m." + model.params().items[i].first, optimizer->m[i]);
            ckpt.add("adam.v." + model.params().items[i].first, optimizer->v[i]);
        }
    }
    save_checkpoint(path, ckpt);
}

std::unique_ptr<RatePredictorModel> load_rate_predictor(const std::string& path,
                                                        nn::AdamW* optimizer) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.config.value("type", "") != "rate_predictor")
        fail(ErrorCode::config_error, "not a rate predictor checkpoint: " + path);
    PredictorConfig c;
    c.n_layers = ckpt.config.at("n_layers").get<int>();
    c.n_heads = ckpt.config.at("n_heads").get<int>();
    c.d_model = ckpt.config.at("d_model").get<int>();
    c.conv_kernel = ckpt.config.at("conv_kernel").get<int>();
    c.ffn_mult = ckpt.config.at("ffn_mult").get<int>();
    c.dropout = ckpt.config.at("dropout").get<float>();
    c.sigma = ckpt.config.at("sigma").get<double>();
    c.n_mels = ckpt.config.at("n_mels").get<int>();
    c.normalize_soft_labels = ckpt.config.value("normalize_soft_labels", false);
    Granularity g = granularity_from_string(ckpt.config.at("granularity").get<std::string>());
    auto model = std::make_unique<RatePredictorModel>(c, g, 0);
    for (auto& [name, var] : model->params().items) {
        const Tensor& blob = ckpt.require(name);
        if (!blob.same_shape(var->value))
            fail(ErrorCode::config_error, "checkpoint shape mismatch for " + name);
        var->value = blob;
    }
    if (optimizer && ckpt.config.contains("optimizer_step")) {
        optimizer->step_count = ckpt.config["optimizer_step"].get<int>();
        optimizer->total_steps = ckpt.config["optimizer_total_steps"].get<int>();
        optimizer->warmup_steps = ckpt.config["optimizer_warmup_steps"].get<int>();
        optimizer->peak_lr = ckpt.config["optimizer_peak_lr"].get<double>();
        optimizer->weight_decay = ckpt.config["optimizer_weight_decay"].get<double>();
        optimizer->m.clear();
        optimizer->v.clear();
        for (const auto& [name, var] : model->params().items) {
            optimizer->m.push_back(ckpt.require("adam.m." + name));
            optimizer->v.push_back(ckpt.require("adam.v." + name));
        }
    }
    return model;
}

}  // namespace xlf5
