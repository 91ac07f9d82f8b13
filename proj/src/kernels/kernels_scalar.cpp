#include "xlf5/kernels.hpp"

namespace xlf5::kern {
namespace scalar {

void saxpy(size_t n, float a, const float* x, float* y) {
    for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void axpby(size_t n, float a, const float* x, float b, const float* y, float* out) {
    for (size_t i = 0; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void vadd(size_t n, const float* a, const float* b, float* out) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void vsub(size_t n, const float* a, const float* b, float* out) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void vmul(size_t n, const float* a, const float* b, float* out) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void vscale(size_t n, float a, const float* x, float* out) {
    for (size_t i = 0; i < n; ++i) out[i] = a * x[i];
}

float dot(size_t n, const float* a, const float* b) {
    float acc = 0.0f;
    for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

float sum(size_t n, const float* x) {
    float acc = 0.0f;
    for (size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

float sqdiff_sum(size_t n, const float* a, const float* b) {
    float acc = 0.0f;
    for (size_t i = 0; i < n; ++i) {
        float d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

void gemm_nn(size_t m, size_t n, size_t k,
             const float* A, const float* B, float* C, bool accumulate) {
    for (size_t i = 0; i < m; ++i) {
        float* c = C + i * n;
        if (!accumulate)
            for (size_t j = 0; j < n; ++j) c[j] = 0.0f;
        const float* a = A + i * k;
        for (size_t p = 0; p < k; ++p) {
            float av = a[p];
            const float* b = B + p * n;
            for (size_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

void gemm_nt(size_t m, size_t n, size_t k,
             const float* A, const float* B, float* C, bool accumulate) {
    for (size_t i = 0; i < m; ++i) {
        const float* a = A + i * k;
        float* c = C + i * n;
        for (size_t j = 0; j < n; ++j) {
            const float* b = B + j * k;
            float acc = 0.0f;
            for (size_t p = 0; p < k; ++p) acc += a[p] * b[p];
            c[j] = accumulate ? c[j] + acc : acc;
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
        for (size_t i = 0; i < m; ++i) {
            float av = a[i];
            float* c = C + i * n;
            for (size_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

}  // namespace scalar

const Ops& scalar_ops() {
    static const Ops t = {
        scalar::saxpy, scalar::axpby, scalar::vadd,  scalar::vsub,
        scalar::vmul,  scalar::vscale, scalar::dot,  scalar::sum,
        scalar::sqdiff_sum, scalar::gemm_nn, scalar::gemm_nt, scalar::gemm_tn,
    };
    return t;
}

}  // namespace xlf5::kern
