#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xlf5/duration.hpp"
#include "xlf5/rate_predictor.hpp"

namespace xlf5 {

struct DurationEvalRecord {
    std::string utt_id;
    double predicted_seconds = 0.0;
    double ground_truth_seconds = 0.0;
    std::string method;
};

// mean |pred - gt| in seconds
double mae(const std::vector<DurationEvalRecord>& records);
// mean |pred - gt| / gt, in percent
double mre_percent(const std::vector<DurationEvalRecord>& records);

// ---------------------------------------------------------------------------
// synthetic corpora
// ---------------------------------------------------------------------------

enum class SyntheticPattern { pulse_train };

struct SyntheticRateSpec {
    double rate = 4.0;        // units/second
    double duration_s = 4.0;  // in [3, 8]
    SyntheticPattern pattern = SyntheticPattern::pulse_train;
    double noise_level = 0.0;
};

// Pulse-train mels: broadband bursts with period 1/rate (random phase), over
// the mel floor, plus Gaussian noise clamped at the floor. Labels carry the
// spec rate.
std::vector<RateExample> generate_synthetic_rate_corpus(const std::vector<SyntheticRateSpec>& specs,
                                                        uint64_t seed, Granularity g,
                                                        const MelConfig& cfg = MelConfig{});

// Uniformly sampled specs for train/held-out splits.
std::vector<SyntheticRateSpec> sample_rate_specs(int n, double rate_lo, double rate_hi,
                                                 double dur_lo, double dur_hi, double noise_level,
                                                 uint64_t seed);

// Synthetic spoken-word utterances (tone-burst words over silence) with exact
// word alignments; enough structure to exercise the whole infill pipeline.
struct SyntheticUtterance {
    AudioClip clip;
    AlignedUtterance utt;
};
std::vector<SyntheticUtterance> generate_synthetic_utterances(int n, uint64_t seed,
                                                              const MelConfig& cfg = MelConfig{});

// ---------------------------------------------------------------------------
// duration evaluation
// ---------------------------------------------------------------------------

struct DurationEvalItem {
    std::string utt_id;
    MelSpectrogram prompt_mel;
    std::string target_text;
    double gt_duration_s = 0.0;
    Language lang = Language::en;
    std::optional<double> true_rate;  // consumed by the oracle method
};

// Eval items derived from synthetic rate specs: the target text carries
// exactly round(rate * duration) one-syllable units and the ground-truth
// duration is count / rate, so the only error left for the oracle method is
// grid quantization.
std::vector<DurationEvalItem> make_synthetic_duration_eval_items(
    const std::vector<SyntheticRateSpec>& specs, uint64_t seed, Granularity g,
    const MelConfig& cfg = MelConfig{});

struct DurationEvalMethod {
    std::string name;  // m1 | m2 | m3 | oracle_rate | ground_truth
    const RatePredictorModel* model = nullptr;  // required for m1/m2/m3
    Granularity granularity = Granularity::syllable;  // used by oracle_rate
};

struct MethodReport {
    double mae_s = 0.0;
    double mre_pct = 0.0;
    int n = 0;
};

struct DurationEvalReport {
    std::string dataset;
    std::vector<std::pair<std::string, MethodReport>> rows;

    nlohmann::json to_json() const;
    std::string render_table() const;
};

DurationEvalReport run_duration_eval(const std::vector<DurationEvalItem>& corpus,
                                     const std::vector<DurationEvalMethod>& methods,
                                     const UnitCounter& counter,
                                     const std::string& dataset_name = "synthetic");

// Plug-in hook for external quality metrics (WER/SIM/UTMOS style): runs
// `command <wav> <reference>` and parses a float from stdout.
double run_external_metric(const std::string& command, const std::string& wav_path,
                           const std::string& reference_path);

}  // namespace xlf5
