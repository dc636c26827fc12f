#include <cmath>

#include "doctest.h"
#include "vp2p/io.hpp"
#include "vp2p/metrics.hpp"
#include "vp2p/pipeline.hpp"
#include "vp2p/rng.hpp"

using namespace vp2p;

namespace {

const Vocabulary& vocab() {
    static Vocabulary v = Vocabulary::load(std::string(VP2P_DATA_DIR) + "/vocab.txt");
    return v;
}

// a small, fast configuration used by every pipeline test
RunConfig small_config() {
    RunConfig c;
    c.seed = 7;
    c.num_steps = 8;
    c.beta_start = 1e-3;
    c.beta_end = 0.25;
    c.guidance_w = 7.5;
    c.finetune_steps = 40;
    c.finetune_lr = 2e-3;
    c.inner_steps = 5;
    c.null_lr = 1e-2;
    c.src_prompt = "a red square";
    c.dst_prompt = "a blue square";
    c.edit_word_src = "red";
    c.edit_word_dst = "blue";
    c.scene.frames = 3;
    c.scene.channels = 2;
    c.scene.height = 12;
    c.scene.width = 12;
    return c;
}

Scene small_scene(const RunConfig& c) { return render_scene(c.scene, c.seed, vocab()); }

double rel_err(const LatentVideo& a, const LatentVideo& b) {
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        num += d * d;
        den += b.data[i] * b.data[i];
    }
    return std::sqrt(num / (den + 1e-300));
}

}  // namespace

TEST_CASE("config validation rejects out-of-range values") {
    RunConfig ok = small_config();
    CHECK_NOTHROW(ok.validate());
    auto reject = [&](auto mutate) {
        RunConfig bad = small_config();
        mutate(bad);
        CHECK_THROWS(bad.validate());
    };
    reject([](RunConfig& c) { c.num_steps = 0; });
    reject([](RunConfig& c) { c.beta_start = 0.0; });
    reject([](RunConfig& c) { c.beta_end = 1.0; });
    reject([](RunConfig& c) { c.beta_start = 0.5, c.beta_end = 0.1; });
    reject([](RunConfig& c) { c.finetune_steps = -1; });
    reject([](RunConfig& c) { c.finetune_lr = 0.0; });
    reject([](RunConfig& c) { c.tau_ratio = 1.1; });
    reject([](RunConfig& c) { c.mask_threshold = 1.0; });
    reject([](RunConfig& c) { c.src_prompt.clear(); });
}

TEST_CASE("edit spec resolution from prompts") {
    RunConfig c = small_config();
    auto src = tokenize(c.src_prompt, vocab());
    auto dst = tokenize(c.dst_prompt, vocab());

    auto spec = resolve_edit_spec(c, src, dst, vocab());
    CHECK(spec.kind == EditKind::Swap);
    CHECK(spec.src_word_cols == std::vector<int>{1});
    CHECK(spec.dst_word_cols == std::vector<int>{1});

    // swap needs equal lengths
    auto longer = tokenize("a big blue square", vocab());
    CHECK_THROWS(resolve_edit_spec(c, src, longer, vocab()));

    // refinement aligns by LCS instead
    RunConfig r = c;
    r.edit_kind = EditKind::Refine;
    r.dst_prompt = "a robotic red square";
    r.edit_word_dst = "robotic";
    auto spec_r = resolve_edit_spec(r, src, tokenize(r.dst_prompt, vocab()), vocab());
    CHECK(spec_r.word_map.map.at(0) == 0);
    CHECK(spec_r.word_map.map.at(2) == 1);
    CHECK(spec_r.word_map.map.at(3) == 2);
    CHECK(spec_r.word_map.new_tokens == std::vector<int>{1});
    CHECK(spec_r.dst_word_cols == std::vector<int>{1});

    // reweight resolves the scaled column
    RunConfig w = c;
    w.edit_kind = EditKind::Reweight;
    w.dst_prompt = c.src_prompt;
    w.edit_word_dst = "red";
    w.reweight_scale = 2.0;
    auto spec_w = resolve_edit_spec(w, src, src, vocab());
    CHECK(spec_w.reweight_col == 1);

    // word must occur in its prompt
    RunConfig m = c;
    m.edit_word_src = "circle";
    CHECK_THROWS(resolve_edit_spec(m, src, dst, vocab()));
}

TEST_CASE("fine-tuning touches only the tunable parameters") {
    RunConfig c = small_config();
    auto scene = small_scene(c);
    auto sched = build_schedule(c.num_steps, c.beta_start, c.beta_end);
    auto cond = embed_prompt(scene.prompt, c.seed);
    auto model = init_toy_t2s(c.seed, model_dims_from(c));

    auto zero = finetune_t2s(model, scene.video, cond, 0, c.finetune_lr, sched, c.seed);
    CHECK(zero.model.params == model.params);
    CHECK(zero.loss_curve.empty());

    auto tuned = finetune_t2s(model, scene.video, cond, c.finetune_steps, c.finetune_lr, sched,
                              c.seed);
    CHECK(tuned.loss_curve.size() == static_cast<size_t>(c.finetune_steps));
    auto mask = model.tunable_mask();
    bool any_moved = false;
    for (size_t i = 0; i < mask.size(); ++i) {
        if (mask[i])
            any_moved |= tuned.model.params[i] != model.params[i];
        else
            CHECK(tuned.model.params[i] == model.params[i]);
    }
    CHECK(any_moved);

    auto again = finetune_t2s(model, scene.video, cond, c.finetune_steps, c.finetune_lr, sched,
                              c.seed);
    CHECK(again.model.params == tuned.model.params);
}

TEST_CASE("self-edit without decoupled guidance is the identity") {
    RunConfig c = small_config();
    c.dst_prompt = c.src_prompt;
    c.edit_word_dst = "red";
    c.tau_ratio = 1.0;
    c.decoupled_guidance = false;  // both branches share the optimized embedding
    auto scene = small_scene(c);
    auto src = tokenize(c.src_prompt, vocab());
    auto res = run_video_p2p(scene.video, src, src, c, vocab());
    CHECK(rel_err(res.loop.edited, res.loop.reconstruction) <= 1e-6);
}

TEST_CASE("swap edit on a small scene") {
    RunConfig c = small_config();
    auto scene = small_scene(c);
    auto src = tokenize(c.src_prompt, vocab());
    auto dst = tokenize(c.dst_prompt, vocab());
    auto res = run_video_p2p(scene.video, src, dst, c, vocab());

    SUBCASE("bookkeeping is internally consistent") {
        const int T = c.num_steps;
        const int tau_steps = static_cast<int>(std::lround(c.tau_ratio * T));
        REQUIRE(static_cast<int>(res.loop.injected.size()) == T);
        for (int step = 0; step < T; ++step)
            CHECK(res.loop.injected[step] == (step < tau_steps ? 1 : 0));
        CHECK(res.loop.mask_area.size() == static_cast<size_t>(T));
        CHECK(res.finetune_loss.size() == static_cast<size_t>(c.finetune_steps));
        CHECK(res.timings.total_s() >= 0.0);
        CHECK(res.trajectory.latents.size() == static_cast<size_t>(T + 1));
    }

    SUBCASE("blend invariant: untouched sites are bit-equal to the reconstruction") {
        const auto& mask = res.loop.final_mask;
        REQUIRE(mask.frames == scene.video.frames);
        size_t inside = 0;
        for (int f = 0; f < mask.frames; ++f)
            for (int y = 0; y < mask.height; ++y)
                for (int x = 0; x < mask.width; ++x) {
                    if (mask.at(f, y, x)) {
                        ++inside;
                        continue;
                    }
                    for (int ch = 0; ch < scene.video.channels; ++ch)
                        CHECK(res.loop.edited.at(f, ch, y, x) ==
                              res.loop.reconstruction.at(f, ch, y, x));
                }
        CHECK(inside > 0);  // the edit actually targets something
        CHECK(rel_err(res.loop.edited, res.loop.reconstruction) > 0.0);
    }

    SUBCASE("the full pipeline is deterministic") {
        auto res2 = run_video_p2p(scene.video, src, dst, c, vocab());
        CHECK(res2.loop.edited.data == res.loop.edited.data);
        CHECK(res2.loop.reconstruction.data == res.loop.reconstruction.data);
        CHECK(res2.tuned_model.params == res.tuned_model.params);
    }

    SUBCASE("baseline and ablation arms differ from the full method") {
        auto sched = build_schedule(c.num_steps, c.beta_start, c.beta_end);
        auto cond_dst = embed_prompt(dst, c.seed);
        auto null_dst = make_null_embedding(dst.length(), c.seed);
        auto base = baseline_edit(res.tuned_model, res.trajectory.latents.back(), cond_dst,
                                  null_dst, c.guidance_w, sched);
        CHECK(rel_err(base, res.loop.edited) > 0.0);

        RunConfig nodg = c;
        nodg.decoupled_guidance = false;
        auto res_nodg = run_video_p2p(scene.video, src, dst, nodg, vocab());
        CHECK(res_nodg.loop.edited.data != res.loop.edited.data);
    }
}

TEST_CASE("baseline with the source prompt at w=1 is a pure round trip") {
    RunConfig c = small_config();
    c.guidance_w = 1.0;
    c.dst_prompt = c.src_prompt;
    c.edit_word_dst = "red";
    auto scene = small_scene(c);
    auto src = tokenize(c.src_prompt, vocab());
    auto res = run_video_p2p(scene.video, src, src, c, vocab());

    auto sched = build_schedule(c.num_steps, c.beta_start, c.beta_end);
    auto cond = embed_prompt(src, c.seed);
    auto null_src = make_null_embedding(src.length(), c.seed);
    auto back = baseline_edit(res.tuned_model, res.trajectory.latents.back(), cond, null_src, 1.0,
                              sched);
    CHECK(rel_err(back, scene.video) <= 1e-8);
}
