#pragma once

#include <cstddef>

// Dense float kernels behind every hot loop in the project. Each operation
// has a scalar reference implementation plus SIMD variants (AVX2 on x86-64,
// NEON on arm64) selected once at runtime. All variants use a fixed
// accumulation order, so results are reproducible run-to-run on the same
// machine; scalar and SIMD variants agree to rounding and are
// equivalence-tested against each other.
namespace xlf5::kern {

enum class Isa { scalar, avx2, neon };

const char* isa_name(Isa isa);
bool isa_available(Isa isa);

// Active instruction set: best available, overridable with
// XLF5_KERNEL=scalar|avx2|neon (falls back to scalar if unavailable).
Isa active_isa();

struct Ops {
    // y += a * x
    void (*saxpy)(size_t n, float a, const float* x, float* y);
    // out = a*x + b*y
    void (*axpby)(size_t n, float a, const float* x, float b, const float* y, float* out);
    void (*vadd)(size_t n, const float* a, const float* b, float* out);
    void (*vsub)(size_t n, const float* a, const float* b, float* out);
    void (*vmul)(size_t n, const float* a, const float* b, float* out);
    void (*vscale)(size_t n, float a, const float* x, float* out);
    float (*dot)(size_t n, const float* a, const float* b);
    float (*sum)(size_t n, const float* x);
    // sum of (a[i] - b[i])^2
    float (*sqdiff_sum)(size_t n, const float* a, const float* b);

    // Packed row-major matrix products. accumulate=false overwrites C.
    // C[m,n] = A[m,k] * B[k,n]
    void (*gemm_nn)(size_t m, size_t n, size_t k,
                    const float* A, const float* B, float* C, bool accumulate);
    // C[m,n] = A[m,k] * B^T  with B stored [n,k]
    void (*gemm_nt)(size_t m, size_t n, size_t k,
                    const float* A, const float* B, float* C, bool accumulate);
    // C[m,n] = A^T * B  with A stored [k,m], B stored [k,n]
    void (*gemm_tn)(size_t m, size_t n, size_t k,
                    const float* A, const float* B, float* C, bool accumulate);
};

// Table for the active ISA.
const Ops& ops();

// Table for a specific ISA; used by the equivalence tests. Requesting an
// unavailable ISA returns the scalar table.
const Ops& ops_for(Isa isa);

}  // namespace xlf5::kern
