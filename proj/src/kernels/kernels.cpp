#include "xlf5/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace xlf5::kern {

const Ops& scalar_ops();
#if defined(__x86_64__) || defined(_M_X64)
const Ops& avx2_ops();
#endif
#if defined(__aarch64__)
const Ops& neon_ops();
#endif

const char* isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
        case Isa::neon: return "neon";
    }
    return "?";
}

bool isa_available(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return true;
        case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Isa::neon:
#if defined(__aarch64__)
            return true;
#else
            return false;
#endif
    }
    return false;
}

static Isa detect_isa() {
    if (const char* env = std::getenv("XLF5_KERNEL")) {
        if (std::strcmp(env, "scalar") == 0) return Isa::scalar;
        if (std::strcmp(env, "avx2") == 0 && isa_available(Isa::avx2)) return Isa::avx2;
        if (std::strcmp(env, "neon") == 0 && isa_available(Isa::neon)) return Isa::neon;
        return Isa::scalar;
    }
    if (isa_available(Isa::avx2)) return Isa::avx2;
    if (isa_available(Isa::neon)) return Isa::neon;
    return Isa::scalar;
}

Isa active_isa() {
    static const Isa isa = detect_isa();
    return isa;
}

const Ops& ops_for(Isa isa) {
    switch (isa) {
#if defined(__x86_64__) || defined(_M_X64)
        case Isa::avx2:
            if (isa_available(Isa::avx2)) return avx2_ops();
            break;
#endif
#if defined(__aarch64__)
        case Isa::neon: return neon_ops();
#endif
        default: break;
    }
    return scalar_ops();
}

const Ops& ops() {
    static const Ops& t = ops_for(active_isa());
    return t;
}

}  // namespace xlf5::kern
