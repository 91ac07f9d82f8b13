// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma and must only be entered after the runtime dispatch has
// confirmed both features (see kernels.cpp).

#include "xlf5/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

namespace xlf5::kern {
namespace avx2 {

void saxpy(size_t n, float a, const float* x, float* y) {
    __m256 av = _mm256_set1_ps(a);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 yv = _mm256_loadu_ps(y + i);
        yv = _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), yv);
        _mm256_storeu_ps(y + i, yv);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void axpby(size_t n, float a, const float* x, float b, const float* y, float* out) {
    __m256 av = _mm256_set1_ps(a);
    __m256 bv = _mm256_set1_ps(b);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 r = _mm256_mul_ps(av, _mm256_loadu_ps(x + i));
        r = _mm256_fmadd_ps(bv, _mm256_loadu_ps(y + i), r);
        _mm256_storeu_ps(out + i, r);
    }
    for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void vadd(size_t n, const float* a, const float* b, float* out) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void vsub(size_t n, const float* a, const float* b, float* out) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void vmul(size_t n, const float* a, const float* b, float* out) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void vscale(size_t n, float a, const float* x, float* out) {
    __m256 av = _mm256_set1_ps(a);
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) out[i] = a * x[i];
}

static inline float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehl_ps(lo, lo);
    lo = _mm_add_ps(lo, sh);
    sh = _mm_shuffle_ps(lo, lo, 0x1);
    lo = _mm_add_ss(lo, sh);
    return _mm_cvtss_f32(lo);
}

float dot(size_t n, const float* a, const float* b) {
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
        acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
    }
    for (; i + 8 <= n; i += 8)
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    float acc = hsum(_mm256_add_ps(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

float sum(size_t n, const float* x) {
    __m256 acc = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    float s = hsum(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

float sqdiff_sum(size_t n, const float* a, const float* b) {
    __m256 acc = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 d = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
        acc = _mm256_fmadd_ps(d, d, acc);
    }
    float s = hsum(acc);
    for (; i < n; ++i) {
        float d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// --- gemm_nn: 4x16 register tile ------------------------------------------

static inline void nn_tile_4x16(size_t n, size_t k, const float* a0, const float* a1,
                                const float* a2, const float* a3, const float* B, size_t j,
                                float* c0, float* c1, float* c2, float* c3, bool accumulate) {
    __m256 c00, c01, c10, c11, c20, c21, c30, c31;
    c00 = c01 = c10 = c11 = c20 = c21 = c30 = c31 = _mm256_setzero_ps();
    const float* bp = B + j;
    for (size_t p = 0; p < k; ++p, bp += n) {
        __m256 b0 = _mm256_loadu_ps(bp);
        __m256 b1 = _mm256_loadu_ps(bp + 8);
        __m256 av;
        av = _mm256_set1_ps(a0[p]);
        c00 = _mm256_fmadd_ps(av, b0, c00);
        c01 = _mm256_fmadd_ps(av, b1, c01);
        av = _mm256_set1_ps(a1[p]);
        c10 = _mm256_fmadd_ps(av, b0, c10);
        c11 = _mm256_fmadd_ps(av, b1, c11);
        av = _mm256_set1_ps(a2[p]);
        c20 = _mm256_fmadd_ps(av, b0, c20);
        c21 = _mm256_fmadd_ps(av, b1, c21);
        av = _mm256_set1_ps(a3[p]);
        c30 = _mm256_fmadd_ps(av, b0, c30);
        c31 = _mm256_fmadd_ps(av, b1, c31);
    }
    if (accumulate) {
        c00 = _mm256_add_ps(c00, _mm256_loadu_ps(c0 + j));
        c01 = _mm256_add_ps(c01, _mm256_loadu_ps(c0 + j + 8));
        c10 = _mm256_add_ps(c10, _mm256_loadu_ps(c1 + j));
        c11 = _mm256_add_ps(c11, _mm256_loadu_ps(c1 + j + 8));
        c20 = _mm256_add_ps(c20, _mm256_loadu_ps(c2 + j));
        c21 = _mm256_add_ps(c21, _mm256_loadu_ps(c2 + j + 8));
        c30 = _mm256_add_ps(c30, _mm256_loadu_ps(c3 + j));
        c31 = _mm256_add_ps(c31, _mm256_loadu_ps(c3 + j + 8));
    }
    _mm256_storeu_ps(c0 + j, c00);
    _mm256_storeu_ps(c0 + j + 8, c01);
    _mm256_storeu_ps(c1 + j, c10);
    _mm256_storeu_ps(c1 + j + 8, c11);
    _mm256_storeu_ps(c2 + j, c20);
    _mm256_storeu_ps(c2 + j + 8, c21);
    _mm256_storeu_ps(c3 + j, c30);
    _mm256_storeu_ps(c3 + j + 8, c31);
}

static inline void nn_tile_1x16(size_t n, size_t k, const float* a, const float* B, size_t j,
                                float* c, bool accumulate) {
    __m256 c0 = _mm256_setzero_ps();
    __m256 c1 = _mm256_setzero_ps();
    const float* bp = B + j;
    for (size_t p = 0; p < k; ++p, bp += n) {
        __m256 av = _mm256_set1_ps(a[p]);
        c0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(bp), c0);
        c1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(bp + 8), c1);
    }
    if (accumulate) {
        c0 = _mm256_add_ps(c0, _mm256_loadu_ps(c + j));
        c1 = _mm256_add_ps(c1, _mm256_loadu_ps(c + j + 8));
    }
    _mm256_storeu_ps(c + j, c0);
    _mm256_storeu_ps(c + j + 8, c1);
}

void gemm_nn(size_t m, size_t n, size_t k,
             const float* A, const float* B, float* C, bool accumulate) {
    size_t n16 = n - n % 16;
    size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        const float* a0 = A + (i + 0) * k;
        const float* a1 = A + (i + 1) * k;
        const float* a2 = A + (i + 2) * k;
        const float* a3 = A + (i + 3) * k;
        float* c0 = C + (i + 0) * n;
        float* c1 = C + (i + 1) * n;
        float* c2 = C + (i + 2) * n;
        float* c3 = C + (i + 3) * n;
        for (size_t j = 0; j < n16; j += 16)
            nn_tile_4x16(n, k, a0, a1, a2, a3, B, j, c0, c1, c2, c3, accumulate);
        for (size_t j = n16; j < n; ++j) {
            float s0 = 0, s1 = 0, s2 = 0, s3 = 0;
            const float* bp = B + j;
            for (size_t p = 0; p < k; ++p, bp += n) {
                s0 += a0[p] * *bp;
                s1 += a1[p] * *bp;
                s2 += a2[p] * *bp;
                s3 += a3[p] * *bp;
            }
            c0[j] = accumulate ? c0[j] + s0 : s0;
            c1[j] = accumulate ? c1[j] + s1 : s1;
            c2[j] = accumulate ? c2[j] + s2 : s2;
            c3[j] = accumulate ? c3[j] + s3 : s3;
        }
    }
    for (; i < m; ++i) {
        const float* a = A + i * k;
        float* c = C + i * n;
        for (size_t j = 0; j < n16; j += 16) nn_tile_1x16(n, k, a, B, j, c, accumulate);
        for (size_t j = n16; j < n; ++j) {
            float s = 0;
            const float* bp = B + j;
            for (size_t p = 0; p < k; ++p, bp += n) s += a[p] * *bp;
            c[j] = accumulate ? c[j] + s : s;
        }
    }
}

// --- gemm_nt: vectorized dot products, 4 columns at a time ------------------

void gemm_nt(size_t m, size_t n, size_t k,
             const float* A, const float* B, float* C, bool accumulate) {
    size_t k8 = k - k % 8;
    for (size_t i = 0; i < m; ++i) {
        const float* a = A + i * k;
        float* c = C + i * n;
        size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            const float* b0 = B + (j + 0) * k;
            const float* b1 = B + (j + 1) * k;
            const float* b2 = B + (j + 2) * k;
            const float* b3 = B + (j + 3) * k;
            __m256 q0 = _mm256_setzero_ps();
            __m256 q1 = _mm256_setzero_ps();
            __m256 q2 = _mm256_setzero_ps();
            __m256 q3 = _mm256_setzero_ps();
            for (size_t p = 0; p < k8; p += 8) {
                __m256 av = _mm256_loadu_ps(a + p);
                q0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + p), q0);
                q1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + p), q1);
                q2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + p), q2);
                q3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + p), q3);
            }
            float s0 = hsum(q0), s1 = hsum(q1), s2 = hsum(q2), s3 = hsum(q3);
            for (size_t p = k8; p < k; ++p) {
                float av = a[p];
                s0 += av * b0[p];
                s1 += av * b1[p];
                s2 += av * b2[p];
                s3 += av * b3[p];
            }
            if (accumulate) {
                c[j + 0] += s0;
                c[j + 1] += s1;
                c[j + 2] += s2;
                c[j + 3] += s3;
            } else {
                c[j + 0] = s0;
                c[j + 1] = s1;
                c[j + 2] = s2;
                c[j + 3] = s3;
            }
        }
        for (; j < n; ++j) {
            float s = dot(k, a, B + j * k);
            c[j] = accumulate ? c[j] + s : s;
        }
    }
}

// --- gemm_tn: rank-1 updates in blocks of 4 --------------------------------

void gemm_tn(size_t m, size_t n, size_t k,
             const float* A, const float* B, float* C, bool accumulate) {
    if (!accumulate)
        for (size_t i = 0; i < m * n; ++i) C[i] = 0.0f;
    size_t n8 = n - n % 8;
    size_t p = 0;
    for (; p + 4 <= k; p += 4) {
        const float* a0 = A + (p + 0) * m;
        const float* a1 = A + (p + 1) * m;
        const float* a2 = A + (p + 2) * m;
        const float* a3 = A + (p + 3) * m;
        const float* b0 = B + (p + 0) * n;
        const float* b1 = B + (p + 1) * n;
        const float* b2 = B + (p + 2) * n;
        const float* b3 = B + (p + 3) * n;
        for (size_t i = 0; i < m; ++i) {
            __m256 v0 = _mm256_set1_ps(a0[i]);
            __m256 v1 = _mm256_set1_ps(a1[i]);
            __m256 v2 = _mm256_set1_ps(a2[i]);
            __m256 v3 = _mm256_set1_ps(a3[i]);
            float* c = C + i * n;
            size_t j = 0;
            for (; j < n8; j += 8) {
                __m256 cv = _mm256_loadu_ps(c + j);
                cv = _mm256_fmadd_ps(v0, _mm256_loadu_ps(b0 + j), cv);
                cv = _mm256_fmadd_ps(v1, _mm256_loadu_ps(b1 + j), cv);
                cv = _mm256_fmadd_ps(v2, _mm256_loadu_ps(b2 + j), cv);
                cv = _mm256_fmadd_ps(v3, _mm256_loadu_ps(b3 + j), cv);
                _mm256_storeu_ps(c + j, cv);
            }
            for (; j < n; ++j)
                c[j] += a0[i] * b0[j] + a1[i] * b1[j] + a2[i] * b2[j] + a3[i] * b3[j];
        }
    }
    for (; p < k; ++p) {
        const float* a = A + p * m;
        const float* b = B + p * n;
        for (size_t i = 0; i < m; ++i) saxpy(n, a[i], b, C + i * n);
    }
}

}  // namespace avx2

const Ops& avx2_ops() {
    static const Ops t = {
        avx2::saxpy, avx2::axpby, avx2::vadd,  avx2::vsub,
        avx2::vmul,  avx2::vscale, avx2::dot,  avx2::sum,
        avx2::sqdiff_sum, avx2::gemm_nn, avx2::gemm_nt, avx2::gemm_tn,
    };
    return t;
}

}  // namespace xlf5::kern

#endif  // x86_64
