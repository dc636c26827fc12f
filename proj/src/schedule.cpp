#include "vp2p/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace vp2p {

NoiseSchedule build_schedule(int num_steps, double beta_start, double beta_end) {
    if (num_steps < 1) throw std::invalid_argument("build_schedule: num_steps must be >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw std::invalid_argument("build_schedule: require 0 < beta_start <= beta_end < 1, got [" +
                                    std::to_string(beta_start) + ", " + std::to_string(beta_end) + "]");
    NoiseSchedule s;
    s.num_steps = num_steps;
    s.alpha_bar.resize(num_steps + 1);
    s.alpha_bar[0] = 1.0;
    double prod = 1.0;
    for (int t = 1; t <= num_steps; ++t) {
        double frac = num_steps == 1 ? 0.0 : double(t - 1) / double(num_steps - 1);
        double beta = beta_start + (beta_end - beta_start) * frac;
        prod *= 1.0 - beta;
        s.alpha_bar[t] = prod;
    }
    return s;
}

static void check_step(const NoiseSchedule& s, int t, int lo, int hi, const char* who) {
    if (t < lo || t > hi)
        throw std::out_of_range(std::string(who) + ": step index " + std::to_string(t) +
                                " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    (void)s;
}

LatentVideo add_noise(const LatentVideo& z0, int t, const LatentVideo& eps,
                      const NoiseSchedule& sched) {
    check_step(sched, t, 0, sched.num_steps, "add_noise");
    if (!z0.same_shape(eps)) throw std::invalid_argument("add_noise: z0/eps shape mismatch");
    const double a = std::sqrt(sched.alpha_bar[t]);
    const double b = std::sqrt(1.0 - sched.alpha_bar[t]);
    LatentVideo out = z0;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = a * z0.data[i] + b * eps.data[i];
    return out;
}

LatentVideo ddim_step(const LatentVideo& z_t, const LatentVideo& eps_hat, int t,
                      const NoiseSchedule& sched) {
    check_step(sched, t, 1, sched.num_steps, "ddim_step");
    if (!z_t.same_shape(eps_hat)) throw std::invalid_argument("ddim_step: shape mismatch");
    const double at = sched.alpha_bar[t];
    const double ap = sched.alpha_bar[t - 1];
    const double scale = std::sqrt(ap / at);
    const double ecoef = std::sqrt(1.0 - ap) - scale * std::sqrt(1.0 - at);
    LatentVideo out = z_t;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = scale * z_t.data[i] + ecoef * eps_hat.data[i];
    return out;
}

LatentVideo ddim_inverse_step(const LatentVideo& z_t, const LatentVideo& eps_hat, int t,
                              const NoiseSchedule& sched) {
    check_step(sched, t, 0, sched.num_steps - 1, "ddim_inverse_step");
    if (!z_t.same_shape(eps_hat)) throw std::invalid_argument("ddim_inverse_step: shape mismatch");
    const double at = sched.alpha_bar[t];
    const double an = sched.alpha_bar[t + 1];
    const double scale = std::sqrt(an / at);
    const double ecoef = std::sqrt(1.0 - an) - scale * std::sqrt(1.0 - at);
    LatentVideo out = z_t;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = scale * z_t.data[i] + ecoef * eps_hat.data[i];
    return out;
}

double ddim_step_eps_coeff(int t, const NoiseSchedule& sched) {
    check_step(sched, t, 1, sched.num_steps, "ddim_step_eps_coeff");
    const double at = sched.alpha_bar[t];
    const double ap = sched.alpha_bar[t - 1];
    return std::sqrt(1.0 - ap) - std::sqrt(ap / at) * std::sqrt(1.0 - at);
}

}  // namespace vp2p
