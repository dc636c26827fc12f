#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vp2p/control.hpp"
#include "vp2p/denoiser.hpp"
#include "vp2p/inversion.hpp"
#include "vp2p/scenegen.hpp"
#include "vp2p/schedule.hpp"
#include "vp2p/text.hpp"

namespace vp2p {

struct RunConfig {
    uint64_t seed = 7;
    int num_steps = 50;
    double beta_start = 1e-4, beta_end = 0.15;
    double guidance_w = 7.5;      // editing guidance; inversion always runs at w = 1
    int finetune_steps = 500;
    double finetune_lr = 2e-3;
    int inner_steps = 10;         // null-text optimization iterations per timestep
    double null_lr = 0.3;
    NullSchedule::Mode null_mode = NullSchedule::Mode::Shared;
    bool temporal_attention = true;
    bool decoupled_guidance = true;
    std::string src_prompt, dst_prompt;
    std::string edit_word_src, edit_word_dst;  // the swapped/edited words
    EditKind edit_kind = EditKind::Swap;
    double tau_ratio = 0.4;
    double refine_ratio = 0.4;
    double reweight_scale = 1.0;
    double mask_threshold = 0.3;
    SceneSpec scene;

    void validate() const;
};

struct FinetuneResult {
    ToyT2SDenoiser model;
    std::vector<double> loss_curve;
};

// One Adam step per iteration on || eps - eps_theta(z_t, t, C) ||^2 restricted
// to the tunable mask (frame/cross W^Q plus temporal attention).
FinetuneResult finetune_t2s(const ToyT2SDenoiser& model, const LatentVideo& video,
                            const PromptEmbedding& cond, int steps, double lr,
                            const NoiseSchedule& sched, uint64_t seed);

struct EditLoopOutput {
    LatentVideo reconstruction;  // source branch z_0
    LatentVideo edited;          // target branch z_0 after blending
    RegionMask final_mask;       // blend mask at the last step
    std::vector<uint8_t> injected;  // per completed step: source maps consumed?
    std::vector<double> mask_area;  // per step, fraction of sites in the union mask
    AttentionStore src_store, dst_store;
};

// The per-step two-branch loop: source guided by nulls_src, target by an
// initialized (or, for the no-decoupling arm, the optimized) embedding, with
// cross-attention injection and union-mask latent blending.
EditLoopOutput run_edit_loop(const ToyT2SDenoiser& model, const LatentVideo& zT,
                             const PromptEmbedding& cond_src, const PromptEmbedding& cond_dst,
                             const NullSchedule& nulls_src, const PromptEmbedding& null_init_dst,
                             double w, const NoiseSchedule& sched, const EditSpec& edit,
                             bool target_uses_optimized_nulls = false);

struct StageTimings {
    double finetune_s = 0, inversion_s = 0, null_opt_s = 0, edit_s = 0;
    double total_s() const { return finetune_s + inversion_s + null_opt_s + edit_s; }
};

struct VideoP2PResult {
    ToyT2SDenoiser tuned_model;
    Trajectory trajectory;
    OptimizeNullResult null_opt;
    EditLoopOutput loop;
    std::vector<double> finetune_loss;
    StageTimings timings;
    EditSpec resolved_edit;
};

// Full method: finetune -> invert -> optimize nulls -> two-branch edit loop.
VideoP2PResult run_video_p2p(const LatentVideo& video, const Prompt& src_prompt,
                             const Prompt& dst_prompt, const RunConfig& config,
                             const Vocabulary& vocab);

// Same tuned model and inversion, then plain guided denoising under the
// target prompt with the initialized embedding; no control, no blending.
LatentVideo baseline_edit(const ToyT2SDenoiser& tuned_model, const LatentVideo& zT,
                          const PromptEmbedding& cond_dst, const PromptEmbedding& null_init_dst,
                          double w, const NoiseSchedule& sched);

// Resolves word columns and alignment for the configured edit.
EditSpec resolve_edit_spec(const RunConfig& config, const Prompt& src, const Prompt& dst,
                           const Vocabulary& vocab);

ModelDims model_dims_from(const RunConfig& config);

}  // namespace vp2p
