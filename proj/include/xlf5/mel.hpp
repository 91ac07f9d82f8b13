#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "xlf5/audio.hpp"
#include "xlf5/tensor.hpp"

namespace xlf5 {

struct MelConfig {
    int sample_rate = 24000;
    int n_fft = 1024;
    int hop = 256;
    int n_mels = 100;
    double fmin = 0.0;
    double fmax = 12000.0;
    float log_floor = -11.512925464970229f;  // log(1e-5)

    void validate() const;
    bool operator==(const MelConfig&) const = default;
};

// Frame-major log-mel matrix [T, n_mels] plus the config that produced it.
// Invariants: T >= 1, every entry finite and >= config.log_floor.
struct MelSpectrogram {
    Tensor data;  // [T, n_mels]
    MelConfig config;

    int64_t frames() const { return data.dim(0); }
    int64_t n_mels() const { return data.dim(1); }
};

// Triangular filterbank on the HTK mel scale, rows [n_mels, n_fft/2+1].
Tensor mel_filterbank(const MelConfig& cfg);
// Peak frequency (Hz) of each triangular filter.
std::vector<double> mel_filter_peaks_hz(const MelConfig& cfg);
// [left, right] support of filter k in Hz.
std::pair<double, double> mel_filter_support_hz(const MelConfig& cfg, int k);

// Log-mel features with center-padded (reflect) framing:
// T = floor(len/hop) + 1, entries = log(max(mel_power, exp(log_floor))).
MelSpectrogram compute_mel(const AudioClip& clip, const MelConfig& cfg);

double mel_duration_seconds(const MelSpectrogram& mel);

// Approximate waveform via filterbank pseudo-inverse + Griffin-Lim phase
// recovery. Deterministic for a fixed phase_seed. Output length T*hop.
AudioClip griffin_lim_invert(const MelSpectrogram& mel, int iters, uint64_t phase_seed = 0);

// Flat binary container: "XLF5MEL1" magic, {T, n_mels, sample_rate, hop} as
// little-endian int32, then row-major float32 data.
void save_mel(const std::string& path, const MelSpectrogram& mel);
MelSpectrogram load_mel(const std::string& path, const MelConfig& base_cfg = MelConfig{});

}  // namespace xlf5
