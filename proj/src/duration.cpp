#include "xlf5/duration.hpp"

#include <cmath>

#include "xlf5/errors.hpp"
#include "xlf5/infill.hpp"

namespace xlf5 {

const char* duration_method_name(DurationMethod m) {
    switch (m) {
        case DurationMethod::rate_phoneme: return "rate_phoneme";
        case DurationMethod::rate_syllable: return "rate_syllable";
        case DurationMethod::rate_word: return "rate_word";
        case DurationMethod::length_ratio: return "length_ratio";
        case DurationMethod::ground_truth: return "ground_truth";
    }
    return "?";
}

DurationMethod rate_method_for(Granularity g) {
    switch (g) {
        case Granularity::phoneme: return DurationMethod::rate_phoneme;
        case Granularity::syllable: return DurationMethod::rate_syllable;
        case Granularity::word: return DurationMethod::rate_word;
    }
    return DurationMethod::rate_phoneme;
}

int64_t to_frames(double seconds, const MelConfig& cfg) { return seconds_to_frames(seconds, cfg); }

DurationEstimate estimate_duration(const RatePredictorModel& model,
                                   const MelSpectrogram& prompt_mel, const std::string& text,
                                   Granularity g, Language lang, const UnitCounter& counter,
                                   const MelConfig& frame_cfg, double max_duration_s) {
    if (g != model.granularity())
        fail(ErrorCode::config_mismatch,
             std::string("model granularity ") + granularity_to_string(model.granularity()) +
                 " != requested " + granularity_to_string(g));
    int count = counter.count_units(text, lang, g);
    double rate = predict_rate(model, prompt_mel);
    double seconds = double(count) / rate;
    if (seconds > max_duration_s)
        fail(ErrorCode::duration_out_of_range,
             std::to_string(seconds) + " s exceeds cap " + std::to_string(max_duration_s));
    DurationEstimate est;
    est.seconds = seconds;
    est.frames = to_frames(seconds, frame_cfg);
    est.method = rate_method_for(g);
    est.predicted_rate = rate;
    est.unit_count = count;
    return est;
}

DurationEstimate length_ratio_duration(double prompt_duration_s, int ref_text_len,
                                       int target_text_len, const MelConfig& frame_cfg) {
    if (!(prompt_duration_s > 0)) fail(ErrorCode::invalid_input, "prompt duration must be positive");
    if (ref_text_len <= 0) fail(ErrorCode::invalid_input, "reference text length must be positive");
    if (target_text_len <= 0) fail(ErrorCode::invalid_input, "target text length must be positive");
    DurationEstimate est;
    est.seconds = prompt_duration_s * double(target_text_len) / double(ref_text_len);
    est.frames = to_frames(est.seconds, frame_cfg);
    est.method = DurationMethod::length_ratio;
    return est;
}

int text_length_for_ratio(const std::string& text, Language lang) {
    auto cps = decode_utf8(text);
    int n = 0;
    for (uint32_t cp : cps) {
        if (lang == Language::zh) {
            if (is_han(cp)) ++n;
        } else {
            if (cp != ' ' && cp != '\t' && cp != '\n' && cp != '\r') ++n;
        }
    }
    return n;
}

}  // namespace xlf5
