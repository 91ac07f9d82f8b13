#include "xlf5/cfm.hpp"

#include <cmath>

#include "xlf5/errors.hpp"
#include "xlf5/kernels.hpp"

namespace xlf5 {

void LatentPair::validate() const {
    if (!x0.same_shape(x1))
        fail(ErrorCode::shape_error, "latent pair: " + x0.shape_str() + " vs " + x1.shape_str());
    if (!x0.all_finite() || !x1.all_finite())
        fail(ErrorCode::invalid_input, "latent pair: non-finite entries");
}

Tensor ot_interpolate(const LatentPair& pair, double t) {
    pair.validate();
    if (t < 0.0 || t > 1.0) fail(ErrorCode::invalid_input, "flow step outside [0,1]");
    Tensor out(pair.x0.shape());
    kern::ops().axpby(size_t(out.numel()), float(1.0 - t), pair.x0.data(), float(t),
                      pair.x1.data(), out.data());
    return out;
}

Tensor velocity_target(const LatentPair& pair) {
    pair.validate();
    Tensor out(pair.x0.shape());
    kern::ops().vsub(size_t(out.numel()), pair.x1.data(), pair.x0.data(), out.data());
    return out;
}

double cfm_loss(const VelocityModel& model, const LatentPair& pair, double t, bool conditioned,
                const std::vector<uint8_t>* frame_mask) {
    Tensor x_t = ot_interpolate(pair, t);
    Tensor target = velocity_target(pair);
    Tensor pred = model.evaluate(x_t, t, conditioned);
    if (!pred.same_shape(target))
        fail(ErrorCode::shape_error, "model output " + pred.shape_str() + " vs target " +
                                         target.shape_str());
    if (!frame_mask) {
        double total = double(
            kern::ops().sqdiff_sum(size_t(pred.numel()), pred.data(), target.data()));
        return total / double(pred.numel());
    }
    int64_t frames = pair.x0.dim(0);
    int64_t width = pair.x0.numel() / frames;
    if (int64_t(frame_mask->size()) != frames)
        fail(ErrorCode::invalid_mask, "mask length != frame count");
    double total = 0.0;
    int64_t count = 0;
    for (int64_t f = 0; f < frames; ++f) {
        if (!(*frame_mask)[size_t(f)]) continue;
        total += double(kern::ops().sqdiff_sum(size_t(width), pred.data() + f * width,
                                               target.data() + f * width));
        count += width;
    }
    if (count == 0) fail(ErrorCode::invalid_mask, "mask selects no frames");
    return total / double(count);
}

double sample_flow_step(Rng& rng) { return rng.uniform(); }

double sway(double t, double s) {
    if (t < 0.0 || t > 1.0) fail(ErrorCode::invalid_input, "flow step outside [0,1]");
    if (std::abs(s) > 1.0) fail(ErrorCode::invalid_coefficient, "sway coefficient outside [-1,1]");
    // cos(pi t / 2) written as sin(pi (1-t) / 2) so both endpoints evaluate
    // exactly in floating point
    double c = std::sin(0.5 * M_PI * (1.0 - t));
    return t + s * (c - 1.0 + t);
}

Tensor cfg_combine(const Tensor& v_cond, const Tensor& v_uncond, double strength) {
    if (!v_cond.same_shape(v_uncond))
        fail(ErrorCode::shape_error,
             "cfg: " + v_cond.shape_str() + " vs " + v_uncond.shape_str());
    // (1-s) u + s c: algebraically u + s (c - u), exact at s = 0 and s = 1
    Tensor out(v_cond.shape());
    kern::ops().axpby(size_t(out.numel()), float(strength), v_cond.data(),
                      float(1.0 - strength), v_uncond.data(), out.data());
    return out;
}

Tensor euler_solve(const VelocityModel& model, const Tensor& x0, const SamplerSettings& settings) {
    if (settings.nfe < 1) fail(ErrorCode::invalid_input, "nfe must be >= 1");
    int64_t n = x0.numel();
    // increment accumulator in double; the state handed to the model is
    // x0 + (float)accum
    std::vector<double> accum(size_t(n), 0.0);
    Tensor state = x0;
    auto refresh_state = [&]() {
        for (int64_t i = 0; i < n; ++i) state[i] = x0[i] + float(accum[size_t(i)]);
    };
    for (int k = 0; k < settings.nfe; ++k) {
        double t0 = sway(double(k) / settings.nfe, settings.sway_coeff);
        double t1 = sway(double(k + 1) / settings.nfe, settings.sway_coeff);
        double dt = t1 - t0;
        Tensor v_cond = model.evaluate(state, t0, true);
        Tensor v_uncond = model.evaluate(state, t0, false);
        Tensor v = cfg_combine(v_cond, v_uncond, settings.cfg_strength);
        if (!v.same_shape(x0)) fail(ErrorCode::shape_error, "model output shape");
        for (int64_t i = 0; i < n; ++i) {
            accum[size_t(i)] += dt * double(v[i]);
            if (!std::isfinite(accum[size_t(i)]))
                fail(ErrorCode::diverged, "non-finite state at step " + std::to_string(k));
        }
        refresh_state();
    }
    return state;
}

}  // namespace xlf5
