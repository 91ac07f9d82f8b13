#include "xlf5/infill.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "xlf5/checkpoint.hpp"
#include "xlf5/errors.hpp"

namespace xlf5 {

// ---------------------------------------------------------------------------
// vocabulary / extended sequence
// ---------------------------------------------------------------------------

void CharVocab::register_text(const std::string& text) {
    for (uint32_t cp : decode_utf8(text)) {
        if (cp_to_id_.count(cp)) continue;
        cp_to_id_.emplace(cp, kRegisteredBase + int(registered_.size()));
        registered_.push_back(cp);
    }
}

std::vector<int> CharVocab::encode(const std::string& text) const {
    std::vector<int> ids;
    size_t i = 0;
    while (i < text.size()) {
        // decode one code point, remembering its byte span for the fallback
        size_t start = i;
        uint8_t c = uint8_t(text[i]);
        int extra = 0;
        if (c >= 0xf0)
            extra = 3;
        else if (c >= 0xe0)
            extra = 2;
        else if (c >= 0xc0)
            extra = 1;
        size_t end = std::min(text.size(), i + 1 + size_t(extra));
        std::string chunk = text.substr(start, end - start);
        auto cps = decode_utf8(chunk);
        uint32_t cp = cps.empty() ? 0xfffd : cps[0];
        auto it = cp_to_id_.find(cp);
        if (it != cp_to_id_.end()) {
            ids.push_back(it->second);
        } else {
            for (size_t b = start; b < end; ++b) ids.push_back(kByteBase + int(uint8_t(text[b])));
        }
        i = end;
    }
    return ids;
}

CharVocab CharVocab::from_registered(const std::vector<uint32_t>& cps) {
    CharVocab v;
    for (uint32_t cp : cps) {
        if (v.cp_to_id_.count(cp)) continue;
        v.cp_to_id_.emplace(cp, kRegisteredBase + int(v.registered_.size()));
        v.registered_.push_back(cp);
    }
    return v;
}

ExtendedCharSeq build_extended_sequence(const std::string& target_text, int64_t total_frames,
                                        int64_t prompt_frames, const CharVocab& vocab) {
    if (target_text.empty()) fail(ErrorCode::invalid_input, "empty target text");
    if (prompt_frames < 0 || prompt_frames >= total_frames)
        fail(ErrorCode::invalid_input, "prompt_frames must be in [0, total_frames)");
    std::vector<int> text_ids = vocab.encode(target_text);
    int64_t target_room = total_frames - prompt_frames;
    if (int64_t(text_ids.size()) > target_room)
        fail(ErrorCode::text_overflow, std::to_string(text_ids.size()) + " ids into " +
                                           std::to_string(target_room) + " frames");
    ExtendedCharSeq z;
    z.ids.assign(size_t(total_frames), CharVocab::kFiller);
    std::copy(text_ids.begin(), text_ids.end(), z.ids.begin() + prompt_frames);
    return z;
}

int64_t MaskSpec::count_target() const {
    int64_t n = 0;
    for (uint8_t v : target) n += v ? 1 : 0;
    return n;
}

int64_t seconds_to_frames(double seconds, const MelConfig& cfg) {
    if (!(seconds > 0)) fail(ErrorCode::invalid_input, "seconds must be positive");
    double frames = seconds * cfg.sample_rate / cfg.hop;
    return std::max<int64_t>(1, int64_t(std::floor(frames + 0.5)));
}

TTSTrainExample make_train_example(const AlignedUtterance& utt, const BoundarySplit& split,
                                   const MelSpectrogram& mel, const CharVocab& vocab) {
    double hop_s = double(mel.config.hop) / mel.config.sample_rate;
    if (std::abs(mel_duration_seconds(mel) - utt.total_duration) > 2.0 * hop_s + 1e-6)
        fail(ErrorCode::config_mismatch, utt.utt_id + ": mel does not match utterance duration");
    int64_t T = mel.frames();
    double frames = split.prompt_end * mel.config.sample_rate / mel.config.hop;
    int64_t prompt_frames = int64_t(std::floor(frames + 0.5));
    if (prompt_frames < 1 || prompt_frames >= T)
        fail(ErrorCode::degenerate_split, "boundary rounds to an empty region");
    TTSTrainExample ex;
    ex.mel = mel;
    ex.prompt_frames = prompt_frames;
    ex.mask.target.assign(size_t(T), 0);
    for (int64_t t = prompt_frames; t < T; ++t) ex.mask.target[size_t(t)] = 1;
    ex.z = build_extended_sequence(split.target_text, T, prompt_frames, vocab);
    return ex;
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

Tensor time_features(const std::vector<double>& t, int64_t dim) {
    int64_t B = int64_t(t.size());
    int64_t half = dim / 2;
    Tensor out({B, dim});
    for (int64_t b = 0; b < B; ++b) {
        double x = t[size_t(b)] * 1000.0;
        for (int64_t i = 0; i < half; ++i) {
            double freq = std::pow(10000.0, -double(i) / double(half));
            out.at(b, 2 * i) = float(std::sin(x * freq));
            out.at(b, 2 * i + 1) = float(std::cos(x * freq));
        }
    }
    return out;
}

Tensor init_normal(std::vector<int64_t> shape, Rng& rng, double fan_in, double fan_out) {
    float std = float(std::sqrt(2.0 / (fan_in + fan_out)));
    return Tensor::randn(std::move(shape), rng, std);
}

}  // namespace

InfillModel::InfillModel(TTSConfig cfg, CharVocab vocab, uint64_t init_seed)
    : cfg_(cfg), vocab_(std::move(vocab)) {
    if (cfg_.d_model % cfg_.n_heads != 0)
        fail(ErrorCode::config_error, "d_model must be divisible by n_heads");
    Rng rng(init_seed);
    int64_t d = cfg_.d_model, M = cfg_.n_mels, E = cfg_.char_embed, V = vocab_.size();
    int64_t f = int64_t(cfg_.ffn_mult) * d;
    int64_t in_width = 2 * M + E;

    params_.add("char_embed", Tensor::randn({V, E}, rng, 0.02f));
    params_.add("in.w", init_normal({in_width, d}, rng, double(in_width), double(d)));
    params_.add("in.b", Tensor({d}));
    params_.add("time.w1", init_normal({cfg_.time_embed, d}, rng, double(cfg_.time_embed), double(d)));
    params_.add("time.b1", Tensor({d}));
    params_.add("time.w2", init_normal({d, d}, rng, double(d), double(d)));
    params_.add("time.b2", Tensor({d}));
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
    // zero-initialized output head: the fresh model predicts the zero field
    params_.add("head.w", Tensor({d, M}));
    params_.add("head.b", Tensor({M}));
}

nn::Var InfillModel::forward(const Tensor& x_t, const Tensor& context,
                             const std::vector<int>& z_ids, const std::vector<double>& t,
                             const Tensor& frame_mask, bool training, Rng* dropout_rng) const {
    using namespace nn;
    if (x_t.rank() != 3 || !x_t.same_shape(context))
        fail(ErrorCode::shape_error, "x_t/context must be matching [B,T,M]");
    int64_t B = x_t.dim(0), T = x_t.dim(1);
    if (x_t.dim(2) != cfg_.n_mels) fail(ErrorCode::config_mismatch, "mel width");
    if (int64_t(z_ids.size()) != B * T)
        fail(ErrorCode::shape_error, "z length != frame count");
    if (int64_t(t.size()) != B) fail(ErrorCode::shape_error, "need one flow step per item");

    auto P = [&](const std::string& name) {
        Var v = params_.find(name);
        if (!v) fail(ErrorCode::config_error, "missing parameter " + name);
        return v;
    };
    float drop = training ? cfg_.dropout : 0.0f;
    Rng unused_rng(0);
    Rng& drng = dropout_rng ? *dropout_rng : unused_rng;
    int64_t d = cfg_.d_model;

    Var emb = embedding(P("char_embed"), z_ids, B, T);
    Var x = concat_lastdim({constant(x_t), constant(context), emb});
    x = linear(x, P("in.w"), P("in.b"));

    Tensor pe = sinusoidal_positions(T, d);
    Tensor pe_tiled({B, T, d});
    for (int64_t b = 0; b < B; ++b) std::copy_n(pe.data(), T * d, pe_tiled.data() + b * T * d);
    x = add(x, constant(std::move(pe_tiled)));

    Var tf = linear(constant(time_features(t, cfg_.time_embed)), P("time.w1"), P("time.b1"));
    tf = gelu(tf);
    tf = linear(tf, P("time.w2"), P("time.b2"));
    x = broadcast_add_rows(x, tf);

    for (int l = 0; l < cfg_.n_layers; ++l) {
        std::string p = "layer" + std::to_string(l);
        Var h = layer_norm(x, P(p + ".ln1.g"), P(p + ".ln1.b"));
        h = mha(h, P(p + ".attn.wq"), P(p + ".attn.bq"), P(p + ".attn.wk"), P(p + ".attn.bk"),
                P(p + ".attn.wv"), P(p + ".attn.bv"), P(p + ".attn.wo"), P(p + ".attn.bo"),
                cfg_.n_heads, frame_mask);
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
    return linear(x, P("head.w"), P("head.b"));
}

Tensor infill_forward(const InfillModel& model, const Tensor& x_t, const Tensor& acoustic_context,
                      const ExtendedCharSeq& z, double t) {
    if (x_t.rank() != 2 || !x_t.same_shape(acoustic_context))
        fail(ErrorCode::shape_error, "x_t/context must be matching [T,M]");
    int64_t T = x_t.dim(0), M = x_t.dim(1);
    if (int64_t(z.ids.size()) != T) fail(ErrorCode::shape_error, "z length != frame count");
    Tensor mask = Tensor::full({1, T}, 1.0f);
    nn::Var out = model.forward(x_t.reshaped({1, T, M}), acoustic_context.reshaped({1, T, M}),
                                z.ids, {t}, mask, false, nullptr);
    return out->value.reshaped({T, M});
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

TTSTrainResult train_tts(InfillModel& model, const std::vector<TTSTrainExample>& corpus,
                         const TTSTrainOptions& opts, nn::AdamW* external_opt) {
    if (corpus.empty()) fail(ErrorCode::invalid_input, "empty corpus");
    int64_t M = model.config().n_mels;
    for (const auto& ex : corpus) {
        if (ex.mel.n_mels() != M) fail(ErrorCode::config_mismatch, "mel width");
        if (int64_t(ex.z.ids.size()) != ex.mel.frames())
            fail(ErrorCode::shape_error, "z length != frame count");
        int64_t n_target = ex.mask.count_target();
        if (n_target == 0 || n_target == ex.mel.frames())
            fail(ErrorCode::invalid_mask, "mask must leave both regions non-empty");
    }
    Rng rng(opts.seed);
    Rng shuffle_rng = rng.fork(1);
    Rng noise_rng = rng.fork(2);
    Rng t_rng = rng.fork(3);
    Rng drop_rng = rng.fork(4);
    Rng cond_rng = rng.fork(5);

    std::vector<size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return corpus[a].mel.frames() < corpus[b].mel.frames();
    });
    std::vector<std::vector<size_t>> batches;
    for (size_t i = 0; i < order.size(); i += size_t(opts.batch_size))
        batches.emplace_back(order.begin() + int64_t(i),
                             order.begin() + int64_t(std::min(i + size_t(opts.batch_size),
                                                              order.size())));
    int total_steps = int(batches.size()) * opts.epochs;
    nn::AdamW local_opt;
    nn::AdamW& opt = external_opt ? *external_opt : local_opt;
    if (opt.total_steps <= 1) {
        opt.peak_lr = opts.peak_lr;
        opt.warmup_steps = std::max(1, int(opts.warmup_frac * total_steps));
        opt.total_steps = total_steps;
        opt.weight_decay = opts.weight_decay;
    }

    TTSTrainResult result;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        std::vector<size_t> bo(batches.size());
        std::iota(bo.begin(), bo.end(), 0);
        for (size_t i = bo.size(); i > 1; --i)
            std::swap(bo[i - 1], bo[shuffle_rng.uniform_int(i)]);
        double epoch_loss = 0.0;
        int64_t epoch_items = 0;
        for (size_t bi : bo) {
            const auto& batch = batches[bi];
            int64_t B = int64_t(batch.size());
            int64_t T = 0;
            for (size_t idx : batch) T = std::max(T, corpus[idx].mel.frames());
            Tensor x_t({B, T, M}), context({B, T, M}), target({B, T, M});
            Tensor loss_mask({B, T}), attn_mask({B, T});
            std::vector<int> z_ids(size_t(B * T), CharVocab::kFiller);
            std::vector<double> ts(size_t(B));
            for (int64_t b = 0; b < B; ++b) {
                const TTSTrainExample& ex = corpus[batch[size_t(b)]];
                int64_t Ti = ex.mel.frames();
                double t = t_rng.uniform();
                ts[size_t(b)] = t;
                bool drop_text = cond_rng.uniform() < double(model.config().cond_drop_prob);
                for (int64_t f = 0; f < Ti; ++f) {
                    bool masked = ex.mask.target[size_t(f)] != 0;
                    attn_mask.at(b, f) = 1.0f;
                    loss_mask.at(b, f) = masked ? 1.0f : 0.0f;
                    if (!drop_text) z_ids[size_t(b * T + f)] = ex.z.ids[size_t(f)];
                    for (int64_t m = 0; m < M; ++m) {
                        float x1 = ex.mel.data.at(f, m);
                        float x0 = noise_rng.normalf();
                        x_t.at(b, f, m) = float((1.0 - t) * x0 + t * x1);
                        target.at(b, f, m) = x1 - x0;
                        context.at(b, f, m) = masked ? 0.0f : x1;
                    }
                }
            }
            model.params().zero_grads();
            nn::Var pred = model.forward(x_t, context, z_ids, ts, attn_mask, true, &drop_rng);
            nn::Var loss = nn::masked_mse(pred, target, loss_mask);
            nn::backward(loss);
            opt.step(model.params());
            epoch_loss += double(loss->value[0]) * double(B);
            epoch_items += B;
            ++result.steps_run;
        }
        result.epoch_losses.push_back(epoch_loss / double(epoch_items));
    }
    return result;
}

// ---------------------------------------------------------------------------
// synthesis
// ---------------------------------------------------------------------------

namespace {

// Binds the infill conditioning onto the generic velocity-field interface.
// The unconditional branch swaps z for all-FILLER and keeps the acoustic
// context.
class InfillField : public VelocityModel {
public:
    InfillField(const InfillModel& model, Tensor context, ExtendedCharSeq z)
        : model_(model), context_(std::move(context)), z_(std::move(z)) {
        filler_.ids.assign(z_.ids.size(), CharVocab::kFiller);
    }

    Tensor evaluate(const Tensor& x_t, double t, bool conditioned) const override {
        return infill_forward(model_, x_t, context_, conditioned ? z_ : filler_, t);
    }

private:
    const InfillModel& model_;
    Tensor context_;
    ExtendedCharSeq z_;
    ExtendedCharSeq filler_;
};

}  // namespace

MelSpectrogram synthesize(const InfillModel& model, const MelSpectrogram& prompt_mel,
                          const std::string& text, double duration_s,
                          const SamplerSettings& sampler, uint64_t seed) {
    if (text.empty()) fail(ErrorCode::invalid_input, "empty text");
    if (!(duration_s > 0)) fail(ErrorCode::invalid_input, "duration must be positive");
    if (prompt_mel.n_mels() != model.config().n_mels)
        fail(ErrorCode::config_mismatch, "prompt mel width");
    const MelConfig& mc = prompt_mel.config;
    int64_t target_frames = seconds_to_frames(duration_s, mc);
    int64_t Tp = prompt_mel.frames();
    int64_t T = Tp + target_frames;
    int64_t M = prompt_mel.n_mels();

    ExtendedCharSeq z = build_extended_sequence(text, T, Tp, model.vocab());
    Tensor context({T, M});
    std::copy_n(prompt_mel.data.data(), Tp * M, context.data());

    Rng rng(seed);
    Tensor x0 = Tensor::randn({T, M}, rng);
    InfillField field(model, std::move(context), std::move(z));
    Tensor out = euler_solve(field, x0, sampler);

    MelSpectrogram result;
    result.config = mc;
    result.data = Tensor({target_frames, M});
    for (int64_t f = 0; f < target_frames; ++f)
        for (int64_t m = 0; m < M; ++m)
            result.data.at(f, m) = std::max(out.at(Tp + f, m), mc.log_floor);
    return result;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

void save_infill_model(const std::string& path, const InfillModel& model,
                       const nn::AdamW* optimizer, const std::string& config_hash) {
    Checkpoint ckpt;
    const TTSConfig& c = model.config();
    ckpt.config = {
        {"type", "infill_tts"},
        {"n_layers", c.n_layers},
        {"n_heads", c.n_heads},
        {"d_model", c.d_model},
        {"char_embed", c.char_embed},
        {"ffn_mult", c.ffn_mult},
        {"time_embed", c.time_embed},
        {"dropout", c.dropout},
        {"cond_drop_prob", c.cond_drop_prob},
        {"n_mels", c.n_mels},
        {"vocab", model.vocab().registered()},
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

std::unique_ptr<InfillModel> load_infill_model(const std::string& path, nn::AdamW* optimizer) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.config.value("type", "") != "infill_tts")
        fail(ErrorCode::config_error, "not an infill model checkpoint: " + path);
    TTSConfig c;
    c.n_layers = ckpt.config.at("n_layers").get<int>();
    c.n_heads = ckpt.config.at("n_heads").get<int>();
    c.d_model = ckpt.config.at("d_model").get<int>();
    c.char_embed = ckpt.config.at("char_embed").get<int>();
    c.ffn_mult = ckpt.config.at("ffn_mult").get<int>();
    c.time_embed = ckpt.config.at("time_embed").get<int>();
    c.dropout = ckpt.config.at("dropout").get<float>();
    c.cond_drop_prob = ckpt.config.at("cond_drop_prob").get<float>();
    c.n_mels = ckpt.config.at("n_mels").get<int>();
    CharVocab vocab = CharVocab::from_registered(ckpt.config.at("vocab").get<std::vector<uint32_t>>());
    auto model = std::make_unique<InfillModel>(c, std::move(vocab), 0);
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
