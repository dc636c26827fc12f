#include "vp2p/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "vp2p/adam.hpp"
#include "vp2p/rng.hpp"

namespace vp2p {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Union of binarized, max-normalized averaged maps of the given word columns.
std::vector<Eigen::VectorXd> word_set_average(const AttentionStore& store,
                                              const std::vector<int>& cols, int t, int frames,
                                              Eigen::Index sites) {
    std::vector<Eigen::VectorXd> avg(frames, Eigen::VectorXd::Zero(sites));
    if (cols.empty()) return avg;  // empty word set -> all-zero map -> empty mask
    for (int f = 0; f < frames; ++f) {
        // multiple words: take the per-site max of their normalized averages so
        // the union of their binarizations survives a single threshold pass
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(sites);
        for (int col : cols) {
            Eigen::VectorXd a = store.averaged_map(col, t, f);
            const double mx = a.maxCoeff();
            if (mx > 0.0) a /= mx;
            acc = acc.cwiseMax(a);
        }
        avg[f] = acc;
    }
    return avg;
}

}  // namespace

void RunConfig::validate() const {
    if (num_steps < 1) throw std::invalid_argument("config: num_steps must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw std::invalid_argument("config: bad beta range");
    if (!std::isfinite(guidance_w)) throw std::invalid_argument("config: bad guidance_w");
    if (finetune_steps < 0) throw std::invalid_argument("config: finetune_steps must be >= 0");
    if (inner_steps < 0) throw std::invalid_argument("config: inner_steps must be >= 0");
    if (!(finetune_lr > 0.0) || !(null_lr > 0.0))
        throw std::invalid_argument("config: learning rates must be positive");
    if (tau_ratio < 0.0 || tau_ratio > 1.0)
        throw std::invalid_argument("config: tau_ratio outside [0,1]");
    if (refine_ratio < 0.0 || refine_ratio > 1.0)
        throw std::invalid_argument("config: refine_ratio outside [0,1]");
    if (!(mask_threshold > 0.0 && mask_threshold < 1.0))
        throw std::invalid_argument("config: mask_threshold outside (0,1)");
    if (src_prompt.empty() || dst_prompt.empty())
        throw std::invalid_argument("config: prompts must be non-empty");
}

ModelDims model_dims_from(const RunConfig& config) {
    ModelDims d;
    d.channels = config.scene.channels;
    d.temporal = config.temporal_attention;
    return d;
}

FinetuneResult finetune_t2s(const ToyT2SDenoiser& model, const LatentVideo& video,
                            const PromptEmbedding& cond, int steps, double lr,
                            const NoiseSchedule& sched, uint64_t seed) {
    FinetuneResult res;
    res.model = model;
    res.loss_curve.reserve(steps);
    if (steps == 0) return res;

    const auto mask = model.tunable_mask();
    std::vector<size_t> idx;
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) idx.push_back(i);

    // tuning stream is independent of the init stream
    auto rng = make_rng(mix_seed(seed, 2));
    std::uniform_int_distribution<int> step_dist(1, sched.num_steps);

    AdamState adam(idx.size(), lr);
    std::vector<double> compact(idx.size()), cgrad(idx.size());
    LatentVideo eps(video.frames, video.channels, video.height, video.width);
    for (int s = 0; s < steps; ++s) {
        const int t = step_dist(rng);
        fill_gaussian(rng, eps.data.data(), eps.data.size());
        LatentVideo z_t = add_noise(video, t, eps, sched);
        EpsPrediction pred = predict_noise_set(res.model, z_t, t, cond);
        double loss = 0.0;
        LatentVideo upstream = eps;
        for (size_t i = 0; i < eps.data.size(); ++i) {
            const double d = pred.eps.data[i] - eps.data[i];
            loss += d * d;
            upstream.data[i] = 2.0 * d;
        }
        if (loss > 1e6)
            throw std::runtime_error("finetune_t2s: diverged at step " + std::to_string(s));
        res.loss_curve.push_back(loss);
        BackwardResult bw = backward_single(res.model, z_t, t, {cond}, upstream);
        for (size_t i = 0; i < idx.size(); ++i) {
            compact[i] = res.model.params[idx[i]];
            cgrad[i] = bw.grad_params[idx[i]];
        }
        adam.update(compact.data(), cgrad.data(), compact.size());
        for (size_t i = 0; i < idx.size(); ++i) res.model.params[idx[i]] = compact[i];
    }
    return res;
}

EditLoopOutput run_edit_loop(const ToyT2SDenoiser& model, const LatentVideo& zT,
                             const PromptEmbedding& cond_src, const PromptEmbedding& cond_dst,
                             const NullSchedule& nulls_src, const PromptEmbedding& null_init_dst,
                             double w, const NoiseSchedule& sched, const EditSpec& edit,
                             bool target_uses_optimized_nulls) {
    edit.validate();
    const int T = sched.num_steps;
    const int n = zT.frames;
    const Eigen::Index S = static_cast<Eigen::Index>(zT.height) * zT.width;
    const int tau_steps = static_cast<int>(std::lround(
        (edit.kind == EditKind::Refine ? edit.refine_ratio : edit.tau_ratio) * T));

    EditLoopOutput out;
    LatentVideo z_src = zT;
    LatentVideo z_dst = zT;
    ForwardOptions record;
    record.record_cross_maps = true;

    for (int t = T; t >= 1; --t) {
        const int step = T - t;  // completed denoising steps

        // source branch with the optimized unconditional embedding
        EpsPrediction src_pred =
            guided_predict_multi(model, z_src, t, cond_src, nulls_src.at(t), w, record);
        for (int f = 0; f < n; ++f) out.src_store.record(t, f, src_pred.cross_maps[f]);

        // target branch pass 1: its own maps
        const std::vector<PromptEmbedding> dst_nulls =
            target_uses_optimized_nulls ? nulls_src.at(t)
                                        : std::vector<PromptEmbedding>{null_init_dst};
        EpsPrediction dst_probe =
            guided_predict_multi(model, z_dst, t, cond_dst, dst_nulls, w, record);
        for (int f = 0; f < n; ++f) out.dst_store.record(t, f, dst_probe.cross_maps[f]);

        // edited maps
        std::vector<Eigen::MatrixXd> edited_maps;
        switch (edit.kind) {
            case EditKind::Swap:
                edited_maps = edit_swap(src_pred.cross_maps, dst_probe.cross_maps, step, tau_steps);
                break;
            case EditKind::Refine:
                edited_maps = edit_refine(src_pred.cross_maps, dst_probe.cross_maps, edit.word_map,
                                          step, tau_steps);
                break;
            case EditKind::Reweight:
                edited_maps = reweight(
                    edit_swap(src_pred.cross_maps, dst_probe.cross_maps, step, tau_steps),
                    edit.reweight_col, edit.reweight_scale);
                break;
        }
        out.injected.push_back(step < tau_steps ? 1 : 0);

        // target branch pass 2: denoise with the injected maps
        ForwardOptions inject;
        inject.override_cross_maps = &edited_maps;
        EpsPrediction dst_pred =
            guided_predict_multi(model, z_dst, t, cond_dst, dst_nulls, w, inject);

        LatentVideo z_src_next = ddim_step(z_src, src_pred.eps, t, sched);
        LatentVideo z_dst_next = ddim_step(z_dst, dst_pred.eps, t, sched);

        // union blend mask from the time-averaged word maps of both branches
        auto avg_src = word_set_average(out.src_store, edit.src_word_cols, t, n, S);
        auto avg_dst = word_set_average(out.dst_store, edit.dst_word_cols, t, n, S);
        RegionMask alpha =
            binarize_union(avg_src, avg_dst, edit.mask_threshold, zT.height, zT.width);
        double area = 0.0;
        for (uint8_t v : alpha.data) area += v;
        out.mask_area.push_back(area / double(alpha.data.size()));

        z_dst_next = blend(z_src_next, z_dst_next, alpha);
        z_src = std::move(z_src_next);
        z_dst = std::move(z_dst_next);
        if (t == 1) out.final_mask = alpha;
    }
    out.reconstruction = std::move(z_src);
    out.edited = std::move(z_dst);
    return out;
}

EditSpec resolve_edit_spec(const RunConfig& config, const Prompt& src, const Prompt& dst,
                           const Vocabulary& vocab) {
    EditSpec e;
    e.kind = config.edit_kind;
    e.tau_ratio = config.tau_ratio;
    e.refine_ratio = config.refine_ratio;
    e.reweight_scale = config.reweight_scale;
    e.mask_threshold = config.mask_threshold;
    if (e.kind == EditKind::Swap && src.length() != dst.length())
        throw std::invalid_argument("edit: word swap requires prompts of equal length");
    if (e.kind == EditKind::Refine) e.word_map = align_prompts(src, dst);

    auto cols_of = [&](const Prompt& p, const std::string& word) {
        std::vector<int> cols;
        if (word.empty()) return cols;
        const int id = vocab.id_of(word);
        for (int i = 0; i < p.length(); ++i)
            if (p.tokens[i] == id) cols.push_back(i);
        if (cols.empty())
            throw std::invalid_argument("edit: word '" + word + "' not found in prompt");
        return cols;
    };
    e.src_word_cols = cols_of(src, config.edit_word_src);
    e.dst_word_cols = cols_of(dst, config.edit_word_dst);
    if (e.kind == EditKind::Reweight) {
        if (e.dst_word_cols.empty())
            throw std::invalid_argument("edit: reweight needs edit_word_dst");
        e.reweight_col = e.dst_word_cols.front();
    }
    e.validate();
    return e;
}

VideoP2PResult run_video_p2p(const LatentVideo& video, const Prompt& src_prompt,
                             const Prompt& dst_prompt, const RunConfig& config,
                             const Vocabulary& vocab) {
    config.validate();
    VideoP2PResult res;
    res.resolved_edit = resolve_edit_spec(config, src_prompt, dst_prompt, vocab);

    const NoiseSchedule sched =
        build_schedule(config.num_steps, config.beta_start, config.beta_end);
    const PromptEmbedding cond_src = embed_prompt(src_prompt, config.seed);
    const PromptEmbedding cond_dst = embed_prompt(dst_prompt, config.seed);
    const PromptEmbedding null_src = make_null_embedding(src_prompt.length(), config.seed);
    const PromptEmbedding null_dst = make_null_embedding(dst_prompt.length(), config.seed);

    ToyT2SDenoiser model = init_toy_t2s(config.seed, model_dims_from(config));

    auto clock = std::chrono::steady_clock::now();
    FinetuneResult ft = finetune_t2s(model, video, cond_src, config.finetune_steps,
                                     config.finetune_lr, sched, config.seed);
    res.timings.finetune_s = seconds_since(clock);
    res.tuned_model = std::move(ft.model);
    res.finetune_loss = std::move(ft.loss_curve);

    clock = std::chrono::steady_clock::now();
    res.trajectory = ddim_invert_video(res.tuned_model, video, cond_src, sched);
    res.timings.inversion_s = seconds_since(clock);

    clock = std::chrono::steady_clock::now();
    res.null_opt = optimize_null(res.tuned_model, res.trajectory, cond_src, config.guidance_w,
                                 config.null_mode, config.inner_steps, config.null_lr, null_src,
                                 sched);
    res.timings.null_opt_s = seconds_since(clock);

    clock = std::chrono::steady_clock::now();
    res.loop = run_edit_loop(res.tuned_model, res.trajectory.latents.back(), cond_src, cond_dst,
                             res.null_opt.nulls, null_dst, config.guidance_w, sched,
                             res.resolved_edit,
                             /*target_uses_optimized_nulls=*/!config.decoupled_guidance);
    res.timings.edit_s = seconds_since(clock);
    return res;
}

LatentVideo baseline_edit(const ToyT2SDenoiser& tuned_model, const LatentVideo& zT,
                          const PromptEmbedding& cond_dst, const PromptEmbedding& null_init_dst,
                          double w, const NoiseSchedule& sched) {
    LatentVideo z = zT;
    for (int t = sched.num_steps; t >= 1; --t) {
        EpsPrediction p = guided_predict_multi(tuned_model, z, t, cond_dst, {null_init_dst}, w);
        z = ddim_step(z, p.eps, t, sched);
    }
    return z;
}

}  // namespace vp2p
