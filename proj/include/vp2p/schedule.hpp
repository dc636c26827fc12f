#pragma once

#include <vector>

#include "vp2p/tensor.hpp"

namespace vp2p {

// Cumulative signal coefficients over T diffusion steps.
// alpha_bar[0] = 1 exactly; strictly decreasing; entries in (0, 1].
struct NoiseSchedule {
    int num_steps = 0;                // T
    std::vector<double> alpha_bar;    // size T + 1
};

NoiseSchedule build_schedule(int num_steps, double beta_start, double beta_end);

// sqrt(abar_t) * z0 + sqrt(1 - abar_t) * eps
LatentVideo add_noise(const LatentVideo& z0, int t, const LatentVideo& eps,
                      const NoiseSchedule& sched);

// Consistency-preserving DDIM update t -> t-1:
//   zhat0 = (z_t - sqrt(1 - abar_t) * eps) / sqrt(abar_t)
//   z_{t-1} = sqrt(abar_{t-1}) * zhat0 + sqrt(1 - abar_{t-1}) * eps
LatentVideo ddim_step(const LatentVideo& z_t, const LatentVideo& eps_hat, int t,
                      const NoiseSchedule& sched);

// Exact algebraic inverse of ddim_step under a fixed eps_hat; t -> t+1.
LatentVideo ddim_inverse_step(const LatentVideo& z_t, const LatentVideo& eps_hat, int t,
                              const NoiseSchedule& sched);

// Coefficient of eps_hat in ddim_step; the linearization used by the null-text
// optimizer to push gradients through the update.
double ddim_step_eps_coeff(int t, const NoiseSchedule& sched);

}  // namespace vp2p
