// NEON kernel variants for arm64. Same contracts and loop structure as the
// AVX2 file, 4-wide lanes.

#include "xlf5/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

namespace xlf5::kern {
namespace neon {

void saxpy(size_t n, float a, const float* x, float* y) {
    float32x4_t av = vdupq_n_f32(a);
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        vst1q_f32(y + i, vfmaq_f32(vld1q_f32(y + i), av, vld1q_f32(x + i)));
    for (; i < n; ++i) y[i] += a * x[i];
}

void axpby(size_t n, float a, const float* x, float b, const float* y, float* out) {
    float32x4_t av = vdupq_n_f32(a);
    float32x4_t bv = vdupq_n_f32(b);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float32x4_t r = vmulq_f32(av, vld1q_f32(x + i));
        r = vfmaq_f32(r, bv, vld1q_f32(y + i));
        vst1q_f32(out + i, r);
    }
    for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void vadd(size_t n, const float* a, const float* b, float* out) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        vst1q_f32(out + i, vaddq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void vsub(size_t n, const float* a, const float* b, float* out) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        vst1q_f32(out + i, vsubq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void vmul(size_t n, const float* a, const float* b, float* out) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        vst1q_f32(out + i, vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void vscale(size_t n, float a, const float* x, float* out) {
    float32x4_t av = vdupq_n_f32(a);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vmulq_f32(av, vld1q_f32(x + i)));
    for (; i < n; ++i) out[i] = a * x[i];
}

float dot(size_t n, const float* a, const float* b) {
    float32x4_t acc = vdupq_n_f32(0.0f);
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = vfmaq_f32(acc, vld1q_f32(a + i), vld1q_f32(b + i));
    float s = vaddvq_f32(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

float sum(size_t n, const float* x) {
    float32x4_t acc = vdupq_n_f32(0.0f);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = vaddq_f32(acc, vld1q_f32(x + i));
    float s = vaddvq_f32(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

float sqdiff_sum(size_t n, const float* a, const float* b) {
    float32x4_t acc = vdupq_n_f32(0.0f);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float32x4_t d = vsubq_f32(vld1q_f32(a + i), vld1q_f32(b + i));
        acc = vfmaq_f32(acc, d, d);
    }
    float s = vaddvq_f32(acc);
    for (; i < n; ++i) {
        float d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

void gemm_nn(size_t m, size_t n, size_t k,
             const float* A, const float* B, float* C, bool accumulate) {
    size_t n8 = n - n % 8;
    for (size_t i = 0; i < m; ++i) {
        const float* a = A + i * k;
        float* c = C + i * n;
        for (size_t j = 0; j < n8; j += 8) {
            float32x4_t c0 = vdupq_n_f32(0.0f);
            float32x4_t c1 = vdupq_n_f32(0.0f);
            const float* bp = B + j;
            for (size_t p = 0; p < k; ++p, bp += n) {
                float32x4_t av = vdupq_n_f32(a[p]);
                c0 = vfmaq_f32(c0, av, vld1q_f32(bp));
                c1 = vfmaq_f32(c1, av, vld1q_f32(bp + 4));
            }
            if (accumulate) {
                c0 = vaddq_f32(c0, vld1q_f32(c + j));
                c1 = vaddq_f32(c1, vld1q_f32(c + j + 4));
            }
            vst1q_f32(c + j, c0);
            vst1q_f32(c + j + 4, c1);
        }
        for (size_t j = n8; j < n; ++j) {
            float s = 0;
            const float* bp = B + j;
            for (size_t p = 0; p < k; ++p, bp += n) s += a[p] * *bp;
            c[j] = accumulate ? c[j] + s : s;
        }
    }
}

void gemm_nt(size_t m, size_t n, size_t k,
             const float* A, const float* B, float* C, bool accumulate) {
    for (size_t i = 0; i < m; ++i) {
        const float* a = A + i * k;
        float* c = C + i * n;
        for (size_t j = 0; j < n; ++j) {
            float s = dot(k, a, B + j * k);
            c[j] = accumulate ? c[j] + s : s;
        }
    }
}

void gemm_tn(size_t m, size_t n, size_t k,
             const float* A, const float* B, float* C, bool accumulate) {
    if (!accumulate)
        for (size_t i = 0; i < m * n; ++i) C[i] = 0.0f;
    for (size_t p = 0; p < k; ++p) {
        const float* a = A + p * m;
        const float* b = B + p * n;
        for (size_t i = 0; i < m; ++i) saxpy(n, a[i], b, C + i * n);
    }
}

}  // namespace neon

const Ops& neon_ops() {
    static const Ops t = {
        neon::saxpy, neon::axpby, neon::vadd,  neon::vsub,
        neon::vmul,  neon::vscale, neon::dot,  neon::sum,
        neon::sqdiff_sum, neon::gemm_nn, neon::gemm_nt, neon::gemm_tn,
    };
    return t;
}

}  // namespace xlf5::kern

#endif  // __aarch64__
