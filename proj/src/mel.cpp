#include "xlf5/mel.hpp"

#include <algorithm>
#include <complex>
#include <cstring>
#include <fstream>

#include "xlf5/dsp.hpp"
#include "xlf5/errors.hpp"
#include "xlf5/kernels.hpp"
#include "xlf5/rng.hpp"

namespace xlf5 {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_boundary_hz(const MelConfig& cfg) {
    // n_mels + 2 boundary points, equally spaced on the mel scale
    std::vector<double> pts(size_t(cfg.n_mels) + 2);
    double lo = hz_to_mel(cfg.fmin);
    double hi = hz_to_mel(cfg.fmax);
    for (size_t i = 0; i < pts.size(); ++i)
        pts[i] = mel_to_hz(lo + (hi - lo) * double(i) / double(cfg.n_mels + 1));
    return pts;
}

// Reflect (mirror without repeating the edge sample) index into [0, len).
size_t reflect_index(int64_t idx, int64_t len) {
    if (len == 1) return 0;
    int64_t period = 2 * (len - 1);
    int64_t m = idx % period;
    if (m < 0) m += period;
    if (m >= len) m = period - m;
    return size_t(m);
}

std::vector<float> hann_window(int n) {
    std::vector<float> w(size_t(n));
    for (int i = 0; i < n; ++i)
        w[size_t(i)] = float(0.5 - 0.5 * std::cos(2.0 * M_PI * double(i) / double(n)));
    return w;
}

// Power spectra [T, n_fft/2+1] of a center-padded signal.
Tensor stft_power(const std::vector<float>& samples, const MelConfig& cfg,
                  Tensor* magnitude_out = nullptr) {
    int64_t len = int64_t(samples.size());
    int64_t T = len / cfg.hop + 1;
    int64_t bins = cfg.n_fft / 2 + 1;
    Tensor power({T, bins});
    if (magnitude_out) *magnitude_out = Tensor({T, bins});
    std::vector<float> window = hann_window(cfg.n_fft);
    std::vector<std::complex<float>> frame(size_t(cfg.n_fft));
    int64_t half = cfg.n_fft / 2;
    for (int64_t t = 0; t < T; ++t) {
        int64_t start = t * cfg.hop - half;
        for (int64_t i = 0; i < cfg.n_fft; ++i) {
            float s = samples[reflect_index(start + i, len)];
            frame[size_t(i)] = s * window[size_t(i)];
        }
        dsp::fft(frame, false);
        for (int64_t b = 0; b < bins; ++b) {
            float re = frame[size_t(b)].real();
            float im = frame[size_t(b)].imag();
            float p = re * re + im * im;
            power.at(t, b) = p;
            if (magnitude_out) magnitude_out->at(t, b) = std::sqrt(p);
        }
    }
    return power;
}

}  // namespace

void MelConfig::validate() const {
    if (sample_rate <= 0) fail(ErrorCode::config_error, "sample_rate must be positive");
    if (hop <= 0 || hop > n_fft) fail(ErrorCode::config_error, "need 0 < hop <= n_fft");
    if (!dsp::is_power_of_two(size_t(n_fft)))
        fail(ErrorCode::config_error, "n_fft must be a power of two");
    if (n_mels <= 0) fail(ErrorCode::config_error, "n_mels must be positive");
    if (fmin < 0 || fmin >= fmax || fmax > sample_rate / 2.0)
        fail(ErrorCode::config_error, "need 0 <= fmin < fmax <= sample_rate/2");
}

Tensor mel_filterbank(const MelConfig& cfg) {
    cfg.validate();
    int64_t bins = cfg.n_fft / 2 + 1;
    auto pts = mel_boundary_hz(cfg);
    Tensor fb({cfg.n_mels, bins});
    double bin_hz = double(cfg.sample_rate) / double(cfg.n_fft);
    for (int k = 0; k < cfg.n_mels; ++k) {
        double left = pts[size_t(k)], center = pts[size_t(k) + 1], right = pts[size_t(k) + 2];
        for (int64_t b = 0; b < bins; ++b) {
            double f = b * bin_hz;
            double w = 0.0;
            if (f > left && f < center)
                w = (f - left) / (center - left);
            else if (f == center)
                w = 1.0;
            else if (f > center && f < right)
                w = (right - f) / (right - center);
            fb.at(k, b) = float(w);
        }
    }
    return fb;
}

std::vector<double> mel_filter_peaks_hz(const MelConfig& cfg) {
    auto pts = mel_boundary_hz(cfg);
    std::vector<double> peaks(size_t(cfg.n_mels));
    for (int k = 0; k < cfg.n_mels; ++k) peaks[size_t(k)] = pts[size_t(k) + 1];
    return peaks;
}

std::pair<double, double> mel_filter_support_hz(const MelConfig& cfg, int k) {
    auto pts = mel_boundary_hz(cfg);
    return {pts[size_t(k)], pts[size_t(k) + 2]};
}

MelSpectrogram compute_mel(const AudioClip& clip, const MelConfig& cfg) {
    cfg.validate();
    if (clip.samples.empty()) fail(ErrorCode::invalid_input, "empty clip");
    if (clip.sample_rate != cfg.sample_rate)
        fail(ErrorCode::config_mismatch, "clip sample rate " + std::to_string(clip.sample_rate) +
                                             " != config " + std::to_string(cfg.sample_rate));
    for (float s : clip.samples)
        if (!std::isfinite(s)) fail(ErrorCode::invalid_input, "non-finite sample");

    Tensor power = stft_power(clip.samples, cfg);
    Tensor fb = mel_filterbank(cfg);
    int64_t T = power.dim(0);
    int64_t bins = power.dim(1);
    Tensor mel({T, cfg.n_mels});
    // mel[T, M] = power[T, bins] * fb^T
    kern::ops().gemm_nt(size_t(T), size_t(cfg.n_mels), size_t(bins), power.data(), fb.data(),
                        mel.data(), false);
    float floor_power = std::exp(cfg.log_floor);
    for (int64_t i = 0; i < mel.numel(); ++i)
        mel[i] = std::log(std::max(mel[i], floor_power));
    return {std::move(mel), cfg};
}

double mel_duration_seconds(const MelSpectrogram& mel) {
    return double(mel.frames()) * mel.config.hop / mel.config.sample_rate;
}

AudioClip griffin_lim_invert(const MelSpectrogram& mel, int iters, uint64_t phase_seed) {
    if (iters < 1) fail(ErrorCode::invalid_input, "iters must be >= 1");
    const MelConfig& cfg = mel.config;
    cfg.validate();
    int64_t T = mel.frames();
    int64_t bins = cfg.n_fft / 2 + 1;

    // Target linear magnitudes via transposed filterbank with column
    // normalization (rough pseudo-inverse; fidelity is not a goal here).
    Tensor fb = mel_filterbank(cfg);
    std::vector<float> col_sum(size_t(bins), 0.0f);
    for (int k = 0; k < cfg.n_mels; ++k)
        for (int64_t b = 0; b < bins; ++b) col_sum[size_t(b)] += fb.at(k, b);
    Tensor target_mag({T, bins});
    for (int64_t t = 0; t < T; ++t)
        for (int64_t b = 0; b < bins; ++b) {
            float acc = 0.0f;
            for (int k = 0; k < cfg.n_mels; ++k)
                acc += fb.at(k, b) * std::exp(mel.data.at(t, k));
            target_mag.at(t, b) = std::sqrt(acc / std::max(col_sum[size_t(b)], 1e-8f));
        }

    std::vector<float> window = hann_window(cfg.n_fft);
    int64_t half = cfg.n_fft / 2;
    int64_t out_len = T * cfg.hop;
    int64_t padded_len = (T - 1) * cfg.hop + cfg.n_fft;

    Rng rng(phase_seed);
    Tensor phase({T, bins});
    for (int64_t i = 0; i < phase.numel(); ++i)
        phase[i] = float(rng.uniform() * 2.0 * M_PI - M_PI);

    std::vector<float> signal;
    std::vector<std::complex<float>> frame(size_t(cfg.n_fft));
    for (int iter = 0; iter < iters; ++iter) {
        // inverse STFT with current phase
        std::vector<float> acc(size_t(padded_len), 0.0f);
        std::vector<float> norm(size_t(padded_len), 0.0f);
        for (int64_t t = 0; t < T; ++t) {
            for (int64_t b = 0; b < cfg.n_fft; ++b) {
                int64_t src = b <= cfg.n_fft / 2 ? b : cfg.n_fft - b;
                float m = target_mag.at(t, src);
                float ph = phase.at(t, src);
                // conjugate symmetry for the upper half
                float sign = b <= cfg.n_fft / 2 ? 1.0f : -1.0f;
                frame[size_t(b)] = std::polar(m, sign * ph);
            }
            dsp::fft(frame, true);
            int64_t off = t * cfg.hop;
            for (int64_t i = 0; i < cfg.n_fft; ++i) {
                float w = window[size_t(i)];
                acc[size_t(off + i)] += frame[size_t(i)].real() * w;
                norm[size_t(off + i)] += w * w;
            }
        }
        for (int64_t i = 0; i < padded_len; ++i)
            acc[size_t(i)] /= std::max(norm[size_t(i)], 1e-8f);
        // the OLA buffer starts n_fft/2 before sample 0 (frames are centered)
        signal.assign(size_t(out_len), 0.0f);
        for (int64_t i = 0; i < out_len; ++i) {
            int64_t idx = i + half;
            if (idx < padded_len) signal[size_t(i)] = acc[size_t(idx)];
        }
        if (iter + 1 == iters) break;
        // re-estimate phase from the current signal
        std::vector<std::complex<float>> f2(size_t(cfg.n_fft));
        for (int64_t t = 0; t < T; ++t) {
            int64_t start = t * cfg.hop - half;
            for (int64_t i = 0; i < cfg.n_fft; ++i) {
                float s = signal.empty() ? 0.0f
                                         : signal[reflect_index(start + i, int64_t(signal.size()))];
                f2[size_t(i)] = s * window[size_t(i)];
            }
            dsp::fft(f2, false);
            for (int64_t b = 0; b < bins; ++b)
                phase.at(t, b) = std::arg(f2[size_t(b)]);
        }
    }
    AudioClip out;
    out.sample_rate = cfg.sample_rate;
    out.samples = std::move(signal);
    return out;
}

namespace {
void wr_i32(std::ofstream& f, int32_t v) {
    uint8_t b[4] = {uint8_t(uint32_t(v)), uint8_t(uint32_t(v) >> 8), uint8_t(uint32_t(v) >> 16),
                    uint8_t(uint32_t(v) >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}
int32_t rd_i32(std::istream& f) {
    uint8_t b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    return int32_t(uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
                   uint32_t(b[3]) << 24);
}
}  // namespace

void save_mel(const std::string& path, const MelSpectrogram& mel) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::io_error, "cannot write " + path);
    f.write("XLF5MEL1", 8);
    wr_i32(f, int32_t(mel.frames()));
    wr_i32(f, int32_t(mel.n_mels()));
    wr_i32(f, mel.config.sample_rate);
    wr_i32(f, mel.config.hop);
    static_assert(sizeof(float) == 4);
    f.write(reinterpret_cast<const char*>(mel.data.data()), std::streamsize(mel.data.numel() * 4));
    if (!f) fail(ErrorCode::io_error, "short write: " + path);
}

MelSpectrogram load_mel(const std::string& path, const MelConfig& base_cfg) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::io_error, "cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, "XLF5MEL1", 8) != 0)
        fail(ErrorCode::parse_error, "bad mel container magic: " + path);
    int32_t T = rd_i32(f), n_mels = rd_i32(f), sr = rd_i32(f), hop = rd_i32(f);
    if (!f || T < 1 || n_mels < 1 || sr < 1 || hop < 1)
        fail(ErrorCode::parse_error, "bad mel container header: " + path);
    MelSpectrogram mel;
    mel.config = base_cfg;
    mel.config.sample_rate = sr;
    mel.config.hop = hop;
    mel.config.n_mels = n_mels;
    mel.data = Tensor({T, n_mels});
    f.read(reinterpret_cast<char*>(mel.data.data()), std::streamsize(mel.data.numel() * 4));
    if (!f) fail(ErrorCode::parse_error, "truncated mel container: " + path);
    // keep the floor invariant for data written with a lower floor
    float lo = mel.data.numel() ? *std::min_element(mel.data.data(),
                                                    mel.data.data() + mel.data.numel())
                                : mel.config.log_floor;
    mel.config.log_floor = std::min(mel.config.log_floor, lo);
    return mel;
}

}  // namespace xlf5
