// Copyright (C) 2026 The streamedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "streamedit/errors.hpp"
#include "streamedit/tensor.hpp"

namespace streamedit {

/// Descending timestep grid t_N = 1 > ... > t_0 = 0.
class Schedule {
public:
    /// Uniform grid with `steps` intervals.
    static Schedule uniform(std::size_t steps) {
        detail::require(steps >= 1, "Schedule: step count must be at least 1");
        Schedule s;
        s.timesteps_.reserve(steps + 1);
        for (std::size_t k = steps + 1; k-- > 0;) s.timesteps_.push_back(static_cast<double>(k) / static_cast<double>(steps));
        return s;
    }

    std::size_t steps() const noexcept { return timesteps_.size() - 1; }

    /// t_i with t_0 = 0 and t_N = 1.
    double t(std::size_t i) const { return timesteps_.at(steps() - i); }

    /// Grid in descending order (front is 1.0, back is 0.0).
    const std::vector<double>& timesteps() const noexcept { return timesteps_; }

private:
    std::vector<double> timesteps_;
};

inline Schedule make_uniform_schedule(std::size_t steps) { return Schedule::uniform(steps); }

/// (1 - t) x0 + t eps.
inline Latent interpolate(const Latent& x0, const Latent& eps, double t) {
    require_same_shape(x0, eps, "interpolate");
    detail::require(t >= 0.0 && t <= 1.0, "interpolate: t must lie in [0,1]");
    Latent out(x0.shape(), 0.0f, x0.chunk_index());
    auto o = out.values();
    auto a = x0.values();
    auto b = eps.values();
    for (std::size_t i = 0; i < o.size(); ++i)
        o[i] = static_cast<float>((1.0 - t) * static_cast<double>(a[i]) + t * static_cast<double>(b[i]));
    return out;
}

/// One-step clean estimate z = x_t - t v.
inline Latent predict_clean(const Latent& x_t, const Latent& velocity, double t) {
    require_same_shape(x_t, velocity, "predict_clean");
    Latent out(x_t.shape(), 0.0f, x_t.chunk_index());
    auto o = out.values();
    auto x = x_t.values();
    auto v = velocity.values();
    for (std::size_t i = 0; i < o.size(); ++i)
        o[i] = static_cast<float>(static_cast<double>(x[i]) - t * static_cast<double>(v[i]));
    return out;
}

/// Paired source/target sampler state for one chunk at one step.
struct BranchState {
    Latent x0_src;  // fixed endpoint
    Latent z_tgt;   // current target clean estimate
    Latent eps;     // this step's shared noise
    double t = 1.0;
};

struct BranchInputs {
    Latent source;
    Latent target;
};

/// Noisy inputs of both branches. Both are formed from the same noise tensor.
inline BranchInputs dual_branch_inputs(const BranchState& state) {
    require_same_shape(state.x0_src, state.z_tgt, "dual_branch_inputs");
    return {interpolate(state.x0_src, state.eps, state.t), interpolate(state.z_tgt, state.eps, state.t)};
}

}  // namespace streamedit
