#pragma once

#include <optional>
#include <vector>

#include "xlf5/rng.hpp"
#include "xlf5/tensor.hpp"

// Optimal-transport conditional flow matching: straight-line interpolation,
// constant velocity targets, masked regression loss, and an Euler ODE solver
// with classifier-free guidance over a sway-warped time grid.
namespace xlf5 {

struct LatentPair {
    Tensor x0;  // noise sample
    Tensor x1;  // data sample

    void validate() const;
};

// Time-dependent vector field. `conditioned` selects the full conditioning;
// when false the model drops its text conditioning (the acoustic context, if
// any, stays).
class VelocityModel {
public:
    virtual ~VelocityModel() = default;
    virtual Tensor evaluate(const Tensor& x_t, double t, bool conditioned) const = 0;
};

// (1-t) x0 + t x1, exact at both endpoints.
Tensor ot_interpolate(const LatentPair& pair, double t);

// x1 - x0 (independent of t).
Tensor velocity_target(const LatentPair& pair);

// Mean squared error between the model's field at the interpolation point and
// the constant target. frame_mask (over the first dimension) selects the
// frames included in the average; empty mask is an error.
double cfm_loss(const VelocityModel& model, const LatentPair& pair, double t,
                bool conditioned = true,
                const std::vector<uint8_t>* frame_mask = nullptr);

// Uniform flow step in [0, 1].
double sample_flow_step(Rng& rng);

// t + s (cos(pi t / 2) - 1 + t); fixes 0 and 1 for s in [-1, 0].
double sway(double t, double s);

// v_uncond + strength (v_cond - v_uncond), exact branches at strengths 0, 1.
Tensor cfg_combine(const Tensor& v_cond, const Tensor& v_uncond, double strength);

struct SamplerSettings {
    int nfe = 32;
    double cfg_strength = 2.0;
    double sway_coeff = -1.0;
};

// Explicit Euler through the sway-warped grid {sway(k/nfe)}. Each step
// evaluates the conditional and unconditional branches and combines them.
// The integration increment is accumulated in double precision.
Tensor euler_solve(const VelocityModel& model, const Tensor& x0, const SamplerSettings& settings);

}  // namespace xlf5
