#include "xlf5/audio.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "xlf5/errors.hpp"

namespace xlf5 {

namespace {

uint32_t rd_u32(const uint8_t* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}
uint16_t rd_u16(const uint8_t* p) { return uint16_t(p[0]) | uint16_t(p[1]) << 8; }

void wr_u32(std::ofstream& f, uint32_t v) {
    uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}
void wr_u16(std::ofstream& f, uint16_t v) {
    uint8_t b[2] = {uint8_t(v), uint8_t(v >> 8)};
    f.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

AudioClip read_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::io_error, "cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        fail(ErrorCode::parse_error, "not a RIFF/WAVE file: " + path);

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t sample_rate = 0;
    size_t data_off = 0, data_len = 0;
    size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        uint32_t chunk_len = rd_u32(bytes.data() + pos + 4);
        const uint8_t* p = bytes.data() + pos + 8;
        if (std::memcmp(bytes.data() + pos, "fmt ", 4) == 0 && chunk_len >= 16) {
            format = rd_u16(p);
            channels = rd_u16(p + 2);
            sample_rate = rd_u32(p + 4);
            bits = rd_u16(p + 14);
        } else if (std::memcmp(bytes.data() + pos, "data", 4) == 0) {
            data_off = pos + 8;
            data_len = std::min<size_t>(chunk_len, bytes.size() - data_off);
        }
        pos += 8 + chunk_len + (chunk_len & 1);
    }
    if (sample_rate == 0 || channels == 0 || data_off == 0)
        fail(ErrorCode::parse_error, "missing fmt/data chunk: " + path);

    AudioClip clip;
    clip.sample_rate = int(sample_rate);
    const uint8_t* d = bytes.data() + data_off;
    if (format == 1 && bits == 16) {
        size_t frames = data_len / (2 * channels);
        clip.samples.resize(frames);
        for (size_t i = 0; i < frames; ++i) {
            double acc = 0;
            for (uint16_t c = 0; c < channels; ++c) {
                int16_t s = int16_t(rd_u16(d + (i * channels + c) * 2));
                acc += double(s) / 32768.0;
            }
            clip.samples[i] = float(acc / channels);
        }
    } else if (format == 3 && bits == 32) {
        size_t frames = data_len / (4 * channels);
        clip.samples.resize(frames);
        for (size_t i = 0; i < frames; ++i) {
            double acc = 0;
            for (uint16_t c = 0; c < channels; ++c) {
                uint32_t u = rd_u32(d + (i * channels + c) * 4);
                float s;
                std::memcpy(&s, &u, 4);
                acc += s;
            }
            clip.samples[i] = float(acc / channels);
        }
    } else {
        fail(ErrorCode::parse_error, "unsupported WAV encoding (need PCM16 or float32)");
    }
    return clip;
}

void write_wav(const std::string& path, const AudioClip& clip) {
    if (clip.sample_rate <= 0) fail(ErrorCode::invalid_input, "bad sample rate");
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::io_error, "cannot write " + path);
    uint32_t data_len = uint32_t(clip.samples.size() * 2);
    f.write("RIFF", 4);
    wr_u32(f, 36 + data_len);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    wr_u32(f, 16);
    wr_u16(f, 1);  // PCM
    wr_u16(f, 1);  // mono
    wr_u32(f, uint32_t(clip.sample_rate));
    wr_u32(f, uint32_t(clip.sample_rate) * 2);
    wr_u16(f, 2);
    wr_u16(f, 16);
    f.write("data", 4);
    wr_u32(f, data_len);
    for (float s : clip.samples) {
        float cl = std::clamp(s, -1.0f, 1.0f);
        int16_t v = int16_t(std::lround(cl * 32767.0f));
        wr_u16(f, uint16_t(v));
    }
}

}  // namespace xlf5
