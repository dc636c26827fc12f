#pragma once

#include <vector>

#include "vp2p/denoiser.hpp"
#include "vp2p/schedule.hpp"
#include "vp2p/tensor.hpp"
#include "vp2p/text.hpp"

namespace vp2p {

struct Trajectory {
    enum class Direction { Diffusion, Denoising };
    Direction direction = Direction::Diffusion;
    // Diffusion direction: latents[t] = z*_t for t = 0..T.
    // Denoising direction: latents[k] = state after k steps from z_T.
    std::vector<LatentVideo> latents;
};

// Per-timestep unconditional embeddings, one per step (shared) or n per step.
struct NullSchedule {
    enum class Mode { Shared, PerFrame };
    Mode mode = Mode::Shared;
    int num_steps = 0;  // T
    // embeddings[t - 1] holds the slot(s) used when stepping t -> t-1
    std::vector<std::vector<PromptEmbedding>> embeddings;

    const std::vector<PromptEmbedding>& at(int t) const;
    size_t param_count() const;
};

PromptEmbedding make_null_embedding(int length, uint64_t seed, int dim = kTextDim);

// DDIM inversion of the whole clip at guidance w = 1. Each step solves the
// fixed point z_{t+1} = inverse_step(z_t, eps(z_{t+1}, t+1)) so that the
// conditional sampler retraces the trajectory exactly.
Trajectory ddim_invert_video(const ToyT2SDenoiser& model, const LatentVideo& z0,
                             const PromptEmbedding& cond, const NoiseSchedule& sched);

struct OptimizeNullResult {
    NullSchedule nulls;
    Trajectory recon;  // denoising trajectory under the optimized embeddings
    std::vector<double> initial_loss;  // index t-1
    std::vector<double> final_loss;
};

// Step-wise optimization of the unconditional embedding(s) so that guided
// denoising retraces the diffusion trajectory. Adam on the embedding only,
// best-iterate acceptance, early stop below 1e-5.
OptimizeNullResult optimize_null(const ToyT2SDenoiser& model, const Trajectory& traj,
                                 const PromptEmbedding& cond, double w, NullSchedule::Mode mode,
                                 int inner_steps, double lr, const PromptEmbedding& null_init,
                                 const NoiseSchedule& sched);

LatentVideo reconstruct_with_null(const ToyT2SDenoiser& model, const LatentVideo& zT,
                                  const PromptEmbedding& cond, const NullSchedule& nulls, double w,
                                  const NoiseSchedule& sched);

}  // namespace vp2p
