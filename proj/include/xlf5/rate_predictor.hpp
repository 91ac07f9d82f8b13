#pragma once

#include <memory>
#include <string>
#include <vector>

#include "xlf5/autograd.hpp"
#include "xlf5/mel.hpp"
#include "xlf5/units.hpp"

namespace xlf5 {

// Discrete speaking-rate grid with uniform step 0.25 units/s.
struct RateCategorySet {
    double delta = 0.25;
    double min_rate = 0.25;
    double max_rate = 8.0;
    int n_classes = 32;
    std::vector<double> centers;  // centers[k] = 0.25 * (k + 1)
};

// phoneme -> {0.25 .. 18.0}, 72 classes; syllable/word -> {0.25 .. 8.0}, 32.
RateCategorySet build_category_set(Granularity g);

// Nearest-center index; ties break toward the lower center, rates beyond the
// grid clamp to the edge classes. v must be positive.
int rate_to_category(double v, const RateCategorySet& c);

// Unnormalized Gaussian kernel labels, y[c_gt] == 1.
std::vector<double> soft_labels(int c_gt, int n_classes, double sigma);

// Batch-averaged cross-entropy of probability vectors against the soft
// labels, with the probability clamped at 1e-12 inside the log.
double gce_loss(const std::vector<std::vector<double>>& predicted_probs,
                const std::vector<int>& targets, double sigma, bool normalize_labels = false);

struct PredictorConfig {
    int n_layers = 2;
    int n_heads = 4;
    int d_model = 128;
    int conv_kernel = 3;
    int ffn_mult = 4;
    float dropout = 0.1f;
    double sigma = 1.0;
    int n_mels = 100;
    bool normalize_soft_labels = false;

    static PredictorConfig desk() { return {}; }
    static PredictorConfig paper() {
        PredictorConfig c;
        c.n_layers = 6;
        c.n_heads = 8;
        c.d_model = 512;
        return c;
    }
};

struct RateExample {
    MelSpectrogram mel;
    double true_rate = 0.0;  // units/second
    Granularity granularity = Granularity::syllable;
};

// Mel projection -> two 1-D convolutions -> transformer encoder stack ->
// attention pooling -> linear classifier. The classifier head is
// zero-initialized, so an untrained model outputs the uniform distribution.
class RatePredictorModel {
public:
    RatePredictorModel(PredictorConfig cfg, Granularity g, uint64_t init_seed);

    // Batched logits [B, n_classes]; items are right-padded to a common
    // length and masked everywhere it matters.
    nn::Var forward_logits(const std::vector<const Tensor*>& mels, bool training,
                           Rng* dropout_rng) const;

    const PredictorConfig& config() const { return cfg_; }
    Granularity granularity() const { return granularity_; }
    const RateCategorySet& categories() const { return categories_; }
    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

private:
    PredictorConfig cfg_;
    Granularity granularity_;
    RateCategorySet categories_;
    nn::ParamSet params_;
};

// Probability vector over the grid for a single mel (inference mode).
std::vector<double> predictor_forward(const RatePredictorModel& model, const MelSpectrogram& mel);

// centers[argmax probs], first maximum wins.
double predict_rate(const RatePredictorModel& model, const MelSpectrogram& mel);

struct RateTrainOptions {
    int epochs = 10;
    int batch_size = 16;
    double peak_lr = 1e-3;
    double warmup_frac = 0.1;
    double weight_decay = 0.01;
    uint64_t seed = 0;
    int max_crop_frames = 750;  // ~8 s at the default hop
};

struct TrainResult {
    std::vector<double> epoch_losses;
    int steps_run = 0;
};

// Trains in place; reproducible for a fixed seed. All examples must share
// one granularity, matching the model's.
TrainResult train_rate_predictor(RatePredictorModel& model, const std::vector<RateExample>& dataset,
                                 const RateTrainOptions& opts, nn::AdamW* optimizer = nullptr);

void save_rate_predictor(const std::string& path, const RatePredictorModel& model,
                         const nn::AdamW* optimizer = nullptr,
                         const std::string& config_hash = "");
std::unique_ptr<RatePredictorModel> load_rate_predictor(const std::string& path,
                                                        nn::AdamW* optimizer = nullptr);

}  // namespace xlf5
