#pragma once

#include <complex>
#include <vector>

namespace xlf5::dsp {

// In-place iterative radix-2 FFT. n must be a power of two.
void fft(std::vector<std::complex<float>>& a, bool inverse);

// Magnitude spectrum (first n/2+1 bins) of a real signal zero-padded or
// truncated to n samples. n must be a power of two.
std::vector<float> real_magnitude(const std::vector<float>& x, size_t n);

bool is_power_of_two(size_t n);

}  // namespace xlf5::dsp
