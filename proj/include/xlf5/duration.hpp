#pragma once

#include <optional>
#include <string>

#include "xlf5/rate_predictor.hpp"

namespace xlf5 {

enum class DurationMethod { rate_phoneme, rate_syllable, rate_word, length_ratio, ground_truth };

const char* duration_method_name(DurationMethod m);
DurationMethod rate_method_for(Granularity g);

struct DurationEstimate {
    double seconds = 0.0;
    int64_t frames = 0;
    DurationMethod method = DurationMethod::ground_truth;
    std::optional<double> predicted_rate;
    std::optional<int> unit_count;
};

// Unit count divided by the model's predicted speaking rate. The model, the
// requested granularity and the grid must agree; absurd results beyond
// max_duration_s are rejected.
DurationEstimate estimate_duration(const RatePredictorModel& model,
                                   const MelSpectrogram& prompt_mel, const std::string& text,
                                   Granularity g, Language lang, const UnitCounter& counter,
                                   const MelConfig& frame_cfg, double max_duration_s = 60.0);

// Baseline rule: prompt duration scaled by the target/reference text-length
// ratio (character counts).
DurationEstimate length_ratio_duration(double prompt_duration_s, int ref_text_len,
                                       int target_text_len, const MelConfig& frame_cfg);

// round-half-up, minimum 1 frame
int64_t to_frames(double seconds, const MelConfig& cfg);

// character count for the length-ratio baseline: en counts non-space
// characters, zh counts Han characters
int text_length_for_ratio(const std::string& text, Language lang);

}  // namespace xlf5
