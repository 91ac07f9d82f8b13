#include "xlf5/dsp.hpp"

#include <cmath>

#include "xlf5/errors.hpp"

namespace xlf5::dsp {

bool is_power_of_two(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft(std::vector<std::complex<float>>& a, bool inverse) {
    size_t n = a.size();
    if (!is_power_of_two(n)) fail(ErrorCode::invalid_input, "fft size must be a power of two");
    // bit-reversal permutation
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = 2.0 * M_PI / double(len) * (inverse ? 1.0 : -1.0);
        std::complex<float> wlen(float(std::cos(ang)), float(std::sin(ang)));
        for (size_t i = 0; i < n; i += len) {
            std::complex<float> w(1.0f, 0.0f);
            for (size_t j = 0; j < len / 2; ++j) {
                std::complex<float> u = a[i + j];
                std::complex<float> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        float inv = 1.0f / float(n);
        for (auto& v : a) v *= inv;
    }
}

std::vector<float> real_magnitude(const std::vector<float>& x, size_t n) {
    std::vector<std::complex<float>> buf(n);
    for (size_t i = 0; i < n && i < x.size(); ++i) buf[i] = x[i];
    fft(buf, false);
    std::vector<float> mag(n / 2 + 1);
    for (size_t i = 0; i < mag.size(); ++i) mag[i] = std::abs(buf[i]);
    return mag;
}

}  // namespace xlf5::dsp
