#pragma once

#include <memory>
#include <string>
#include <vector>

#include "xlf5/alignment.hpp"
#include "xlf5/autograd.hpp"
#include "xlf5/cfm.hpp"
#include "xlf5/mel.hpp"

namespace xlf5 {

// Character vocabulary with a reserved FILLER id and a byte-level fallback:
// registered code points get dedicated ids, anything else encodes as its
// UTF-8 bytes, so every string is encodable.
class CharVocab {
public:
    static constexpr int kFiller = 0;
    static constexpr int kByteBase = 1;  // ids 1..256 are bytes 0..255
    static constexpr int kRegisteredBase = 257;

    void register_text(const std::string& text);
    std::vector<int> encode(const std::string& text) const;
    int size() const { return kRegisteredBase + int(registered_.size()); }

    const std::vector<uint32_t>& registered() const { return registered_; }
    static CharVocab from_registered(const std::vector<uint32_t>& cps);

private:
    std::vector<uint32_t> registered_;
    std::unordered_map<uint32_t, int> cp_to_id_;
};

// Per-frame character conditioning; length always equals the mel frame count.
struct ExtendedCharSeq {
    std::vector<int> ids;
};

// FILLER over [0, prompt_frames), then the encoded target text front-aligned,
// FILLER padding to total_frames.
ExtendedCharSeq build_extended_sequence(const std::string& target_text, int64_t total_frames,
                                        int64_t prompt_frames, const CharVocab& vocab);

// Frame mask; true entries are the synthesis target.
struct MaskSpec {
    std::vector<uint8_t> target;

    int64_t frames() const { return int64_t(target.size()); }
    int64_t count_target() const;
};

struct TTSTrainExample {
    MelSpectrogram mel;
    ExtendedCharSeq z;
    MaskSpec mask;
    int64_t prompt_frames = 0;
};

// Rounds the boundary onto the hop grid (round half up) and builds the
// transcript-free conditioning: prompt frames carry FILLER only.
TTSTrainExample make_train_example(const AlignedUtterance& utt, const BoundarySplit& split,
                                   const MelSpectrogram& mel, const CharVocab& vocab);

struct TTSConfig {
    int n_layers = 4;
    int n_heads = 4;
    int d_model = 192;
    int char_embed = 64;
    int ffn_mult = 4;
    int time_embed = 64;
    float dropout = 0.1f;
    float cond_drop_prob = 0.2f;  // text-conditioning dropout for CFG
    int n_mels = 100;

    static TTSConfig desk() { return {}; }
    static TTSConfig paper() {
        TTSConfig c;
        c.n_layers = 22;
        c.n_heads = 16;
        c.d_model = 1024;
        return c;
    }
};

// Text-conditioned velocity network for masked-region infill: per frame the
// input is [x_t ; acoustic context ; embedded z], plus a time embedding of t.
class InfillModel {
public:
    InfillModel(TTSConfig cfg, CharVocab vocab, uint64_t init_seed);

    // Batched velocity prediction [B, T, n_mels].
    nn::Var forward(const Tensor& x_t, const Tensor& context, const std::vector<int>& z_ids,
                    const std::vector<double>& t, const Tensor& frame_mask, bool training,
                    Rng* dropout_rng) const;

    const TTSConfig& config() const { return cfg_; }
    const CharVocab& vocab() const { return vocab_; }
    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

private:
    TTSConfig cfg_;
    CharVocab vocab_;
    nn::ParamSet params_;
};

// Single-item inference call: x_t and acoustic_context are [T, n_mels].
Tensor infill_forward(const InfillModel& model, const Tensor& x_t, const Tensor& acoustic_context,
                      const ExtendedCharSeq& z, double t);

struct TTSTrainOptions {
    int epochs = 30;
    int batch_size = 4;
    double peak_lr = 2e-3;
    double warmup_frac = 0.1;
    double weight_decay = 0.01;
    uint64_t seed = 0;
};

struct TTSTrainResult {
    std::vector<double> epoch_losses;  // mean masked CFM loss per epoch
    int steps_run = 0;
};

TTSTrainResult train_tts(InfillModel& model, const std::vector<TTSTrainExample>& corpus,
                         const TTSTrainOptions& opts, nn::AdamW* optimizer = nullptr);

// Generates the target region: allocates round-half-up(duration_s * sr / hop)
// frames, runs the guided Euler sampler from seeded Gaussian noise and clamps
// the result at the mel floor.
MelSpectrogram synthesize(const InfillModel& model, const MelSpectrogram& prompt_mel,
                          const std::string& text, double duration_s,
                          const SamplerSettings& sampler, uint64_t seed);

void save_infill_model(const std::string& path, const InfillModel& model,
                       const nn::AdamW* optimizer = nullptr, const std::string& config_hash = "");
std::unique_ptr<InfillModel> load_infill_model(const std::string& path,
                                               nn::AdamW* optimizer = nullptr);

// round-half-up seconds -> frames (>= 1)
int64_t seconds_to_frames(double seconds, const MelConfig& cfg);

}  // namespace xlf5
