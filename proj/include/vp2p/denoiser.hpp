#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "vp2p/schedule.hpp"
#include "vp2p/tensor.hpp"
#include "vp2p/text.hpp"

namespace vp2p {

struct ModelDims {
    int channels = 4;
    int hidden = 16;
    int text_dim = kTextDim;
    bool temporal = true;
    int max_timestep = 1000;  // timestep embedding table rows - 1
};

// Offsets of each parameter block inside the flat vector, declaration order.
struct ParamLayout {
    size_t conv_in_w = 0, conv_in_b = 0;
    size_t ln_frame_gain = 0, ln_frame_bias = 0;
    size_t frame_wq = 0, frame_wk = 0, frame_wv = 0;
    size_t ln_cross_gain = 0, ln_cross_bias = 0;
    size_t cross_wq = 0, cross_wk = 0, cross_wv = 0;
    size_t ln_temp_gain = 0, ln_temp_bias = 0;
    size_t temp_wq = 0, temp_wk = 0, temp_wv = 0;
    size_t conv_out_w = 0, conv_out_b = 0;
    size_t time_table = 0;
    size_t total = 0;
};

ParamLayout make_param_layout(const ModelDims& dims);

// Tiny seeded text-to-set noise predictor: per-frame 3x3 convs, single-head
// frame-attention (Q from frame i, K/V from frame 0), cross-attention over
// text tokens, optional temporal attention across the frame axis, sinusoidal
// timestep embedding added channel-wise after the input convolution.
struct ToyT2SDenoiser {
    ModelDims dims;
    ParamLayout layout;
    uint64_t seed = 0;
    std::vector<double> params;

    // true for frame-attention W^Q, cross-attention W^Q, and all
    // temporal-attention parameters; everything else is frozen.
    std::vector<uint8_t> tunable_mask() const;
};

ToyT2SDenoiser init_toy_t2s(uint64_t seed, const ModelDims& dims);

struct EpsPrediction {
    LatentVideo eps;
    // per frame, (H*W) x L row-stochastic cross-attention map
    std::vector<Eigen::MatrixXd> cross_maps;
};

// Opaque per-pass activation cache consumed by the backward pass.
struct ForwardCache;

struct ForwardOptions {
    bool record_cross_maps = false;
    // When set, replaces the softmax cross-attention maps (one per frame).
    const std::vector<Eigen::MatrixXd>* override_cross_maps = nullptr;
};

// embeds holds one matrix (shared by all frames) or one per frame.
EpsPrediction predict_noise_set_multi(const ToyT2SDenoiser& model, const LatentVideo& z, int t,
                                      const std::vector<PromptEmbedding>& embeds,
                                      const ForwardOptions& opts = {},
                                      ForwardCache* cache = nullptr);

EpsPrediction predict_noise_set(const ToyT2SDenoiser& model, const LatentVideo& z, int t,
                                const PromptEmbedding& cond, bool record = false);

// Classifier-free guidance: w * eps(cond) + (1 - w) * eps(uncond).
// Cross maps come from the conditional pass.
EpsPrediction guided_predict(const ToyT2SDenoiser& model, const LatentVideo& z, int t,
                             const PromptEmbedding& cond, const PromptEmbedding& uncond, double w);

EpsPrediction guided_predict_multi(const ToyT2SDenoiser& model, const LatentVideo& z, int t,
                                   const PromptEmbedding& cond,
                                   const std::vector<PromptEmbedding>& uncond, double w,
                                   const ForwardOptions& cond_opts = {});

// Closed-form noise estimate for a Gaussian data prior z0 ~ N(mu, sigma2 I).
LatentVideo analytic_eps(const LatentVideo& z_t, int t, const LatentVideo& mu, double sigma2,
                         const NoiseSchedule& sched);

struct BackwardResult {
    // gradient of <upstream, eps_tilde> w.r.t. each unconditional embedding slot
    std::vector<Eigen::MatrixXd> grad_uncond;
    // full-length parameter gradient, exactly zero outside the tunable mask
    std::vector<double> grad_params;
};

BackwardResult backward(const ToyT2SDenoiser& model, const LatentVideo& z, int t,
                        const PromptEmbedding& cond, const std::vector<PromptEmbedding>& uncond,
                        double w, const LatentVideo& upstream_grad);

// Single-pass gradient (no guidance split): gradients of <upstream, eps> w.r.t.
// the tunable parameters and the embedding slots of this pass.
BackwardResult backward_single(const ToyT2SDenoiser& model, const LatentVideo& z, int t,
                               const std::vector<PromptEmbedding>& embeds,
                               const LatentVideo& upstream_grad);

}  // namespace vp2p
