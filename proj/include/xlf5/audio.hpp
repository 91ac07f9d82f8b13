#pragma once

#include <string>
#include <vector>

namespace xlf5 {

// Mono waveform, amplitudes in [-1, 1].
struct AudioClip {
    std::vector<float> samples;
    int sample_rate = 0;

    double duration_seconds() const {
        return sample_rate > 0 ? double(samples.size()) / sample_rate : 0.0;
    }
};

// PCM16 / float32 WAV. Stereo input is down-mixed by averaging channels.
AudioClip read_wav(const std::string& path);
void write_wav(const std::string& path, const AudioClip& clip);

}  // namespace xlf5
