// vp2p: command-line driver for the synthetic video editing pipeline.
//
// Subcommands map 1:1 onto library stages: synth, finetune, invert, edit,
// baseline, metrics, ablate, export-attn. Exit codes: 0 success, 1 usage
// error, 2 runtime failure.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vp2p/control.hpp"
#include "vp2p/io.hpp"
#include "vp2p/metrics.hpp"
#include "vp2p/pipeline.hpp"
#include "vp2p/scenegen.hpp"

using json = nlohmann::ordered_json;
using namespace vp2p;

namespace {

constexpr int kReportSchemaVersion = 1;

struct CommonArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::string vocab_path = std::string(VP2P_DATA_DIR) + "/vocab.txt";
    std::optional<uint64_t> seed_flag;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
    auto* c = cmd->add_option("--config", args.config_path, "key=value run configuration");
    if (config_required) c->required();
    cmd->add_option("--out", args.out_dir, "output directory (created if missing)");
    cmd->add_option("--vocab", args.vocab_path, "vocabulary registry file");
    cmd->add_option("--seed", args.seed_flag,
                    "seed override (precedence: this flag > VP2P_SEED > config)");
}

EditKind parse_edit_kind(const std::string& s) {
    if (s == "swap") return EditKind::Swap;
    if (s == "refine") return EditKind::Refine;
    if (s == "reweight") return EditKind::Reweight;
    throw std::runtime_error("config: edit_kind must be swap, refine or reweight");
}

NullSchedule::Mode parse_null_mode(const std::string& s) {
    if (s == "shared") return NullSchedule::Mode::Shared;
    if (s == "per_frame") return NullSchedule::Mode::PerFrame;
    throw std::runtime_error("config: null_mode must be shared or per_frame");
}

// flag > VP2P_SEED env > config file > built-in default
RunConfig load_run_config(const CommonArgs& args) {
    RunConfig rc;
    if (!args.config_path.empty()) {
        Config cfg = Config::parse_file(args.config_path);
        rc.seed = static_cast<uint64_t>(cfg.get_int("seed", static_cast<long>(rc.seed)));
        rc.num_steps = static_cast<int>(cfg.get_int("num_steps", rc.num_steps));
        rc.beta_start = cfg.get_real("beta_start", rc.beta_start);
        rc.beta_end = cfg.get_real("beta_end", rc.beta_end);
        rc.guidance_w = cfg.get_real("guidance_w", rc.guidance_w);
        rc.finetune_steps = static_cast<int>(cfg.get_int("finetune_steps", rc.finetune_steps));
        rc.finetune_lr = cfg.get_real("finetune_lr", rc.finetune_lr);
        rc.inner_steps = static_cast<int>(cfg.get_int("inner_steps", rc.inner_steps));
        rc.null_lr = cfg.get_real("null_lr", rc.null_lr);
        rc.null_mode = parse_null_mode(cfg.get_string("null_mode", "shared"));
        rc.temporal_attention = cfg.get_bool("temporal_attention", rc.temporal_attention);
        rc.decoupled_guidance = cfg.get_bool("decoupled_guidance", rc.decoupled_guidance);
        rc.src_prompt = cfg.get_string("src_prompt", rc.src_prompt);
        rc.dst_prompt = cfg.get_string("dst_prompt", rc.dst_prompt);
        rc.edit_word_src = cfg.get_string("edit_word_src", rc.edit_word_src);
        rc.edit_word_dst = cfg.get_string("edit_word_dst", rc.edit_word_dst);
        rc.edit_kind = parse_edit_kind(cfg.get_string("edit_kind", "swap"));
        rc.tau_ratio = cfg.get_real("tau_ratio", rc.tau_ratio);
        rc.refine_ratio = cfg.get_real("refine_ratio", rc.refine_ratio);
        rc.reweight_scale = cfg.get_real("reweight_scale", rc.reweight_scale);
        rc.mask_threshold = cfg.get_real("mask_threshold", rc.mask_threshold);
        rc.scene.shape = cfg.get_string("scene_shape", rc.scene.shape);
        rc.scene.color = cfg.get_string("scene_color", rc.scene.color);
        rc.scene.background = cfg.get_string("scene_background", rc.scene.background);
        rc.scene.vel_y = static_cast<int>(cfg.get_int("scene_vel_y", rc.scene.vel_y));
        rc.scene.vel_x = static_cast<int>(cfg.get_int("scene_vel_x", rc.scene.vel_x));
        rc.scene.frames = static_cast<int>(cfg.get_int("scene_frames", rc.scene.frames));
        rc.scene.channels = static_cast<int>(cfg.get_int("scene_channels", rc.scene.channels));
        rc.scene.height = static_cast<int>(cfg.get_int("scene_height", rc.scene.height));
        rc.scene.width = static_cast<int>(cfg.get_int("scene_width", rc.scene.width));
        cfg.reject_unknown_keys();
    }
    if (const char* env = std::getenv("VP2P_SEED")) {
        size_t pos = 0;
        const std::string text(env);
        const unsigned long long v = std::stoull(text, &pos);
        if (pos != text.size()) throw std::runtime_error("VP2P_SEED is not an integer");
        rc.seed = static_cast<uint64_t>(v);
    }
    if (args.seed_flag) rc.seed = *args.seed_flag;
    return rc;
}

std::filesystem::path ensure_out_dir(const CommonArgs& args) {
    std::filesystem::path dir(args.out_dir);
    std::filesystem::create_directories(dir);
    return dir;
}

Tensor mask_to_tensor(const RegionMask& m) {
    Tensor t({static_cast<uint64_t>(m.frames), static_cast<uint64_t>(m.height),
              static_cast<uint64_t>(m.width)});
    for (size_t i = 0; i < m.data.size(); ++i) t.data[i] = m.data[i];
    return t;
}

RegionMask mask_from_tensor(const Tensor& t) {
    if (t.dims.size() != 3) throw std::runtime_error("mask tensor must have rank 3");
    RegionMask m(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]),
                 static_cast<int>(t.dims[2]));
    for (size_t i = 0; i < t.data.size(); ++i) m.data[i] = t.data[i] != 0.0 ? 1 : 0;
    m.provenance = "synthetic";
    return m;
}

void write_video_ppms(const std::filesystem::path& dir, const std::string& stem,
                      const LatentVideo& video, json& artifacts) {
    for (int f = 0; f < video.frames; ++f) {
        const std::string name = stem + "_" + std::to_string(f) + ".ppm";
        write_ppm((dir / name).string(), render_frame_image(video, f), video.height, video.width);
        artifacts.push_back(name);
    }
}

void write_report(const std::filesystem::path& dir, const json& report) {
    std::ofstream out(dir / "report.json");
    if (!out) throw std::runtime_error("cannot write report.json");
    out << report.dump(2) << "\n";
}

json base_report(const std::string& command, const RunConfig& rc) {
    json r;
    r["schema_version"] = kReportSchemaVersion;
    r["command"] = command;
    r["seed"] = rc.seed;
    return r;
}

struct Prepared {
    Vocabulary vocab;
    RunConfig rc;
    Scene scene;
    NoiseSchedule sched;
};

Prepared prepare(const CommonArgs& args) {
    Prepared p{Vocabulary::load(args.vocab_path), load_run_config(args), {}, {}};
    p.scene = render_scene(p.rc.scene, p.rc.seed, p.vocab);
    p.sched = build_schedule(p.rc.num_steps, p.rc.beta_start, p.rc.beta_end);
    if (p.rc.src_prompt.empty()) p.rc.src_prompt = p.scene.prompt.raw;
    if (p.rc.dst_prompt.empty()) p.rc.dst_prompt = p.rc.src_prompt;
    return p;
}

json metric_block(const LatentVideo& a, const LatentVideo& b, const RegionMask& mask) {
    json m;
    m["psnr"] = psnr(a, b);
    m["masked_psnr"] = masked_psnr(a, b, mask);
    m["osv_proxy"] = osv_proxy(b, mask);
    return m;
}

int cmd_synth(const CommonArgs& args) {
    auto dir = ensure_out_dir(args);
    auto p = prepare(args);
    write_tensor((dir / "video.vp2p").string(), p.scene.video.to_tensor());
    write_tensor((dir / "mask.vp2p").string(), mask_to_tensor(p.scene.masks));
    json report = base_report("synth", p.rc);
    report["prompt"] = p.scene.prompt.raw;
    report["artifacts"] = json::array({"video.vp2p", "mask.vp2p"});
    write_video_ppms(dir, "frame", p.scene.video, report["artifacts"]);
    write_report(dir, report);
    return 0;
}

int cmd_finetune(const CommonArgs& args) {
    auto dir = ensure_out_dir(args);
    auto p = prepare(args);
    const Prompt src = tokenize(p.rc.src_prompt, p.vocab);
    const PromptEmbedding cond = embed_prompt(src, p.rc.seed);
    auto model = init_toy_t2s(p.rc.seed, model_dims_from(p.rc));
    auto ft = finetune_t2s(model, p.scene.video, cond, p.rc.finetune_steps, p.rc.finetune_lr,
                           p.sched, p.rc.seed);
    write_model((dir / "model.vp2m").string(), ft.model);
    json report = base_report("finetune", p.rc);
    report["steps"] = p.rc.finetune_steps;
    report["loss_first"] = ft.loss_curve.empty() ? 0.0 : ft.loss_curve.front();
    report["loss_last"] = ft.loss_curve.empty() ? 0.0 : ft.loss_curve.back();
    report["loss_curve"] = ft.loss_curve;
    report["artifacts"] = json::array({"model.vp2m"});
    write_report(dir, report);
    return 0;
}

int cmd_invert(const CommonArgs& args) {
    auto dir = ensure_out_dir(args);
    auto p = prepare(args);
    const Prompt src = tokenize(p.rc.src_prompt, p.vocab);
    const PromptEmbedding cond = embed_prompt(src, p.rc.seed);
    auto model = init_toy_t2s(p.rc.seed, model_dims_from(p.rc));
    auto ft = finetune_t2s(model, p.scene.video, cond, p.rc.finetune_steps, p.rc.finetune_lr,
                           p.sched, p.rc.seed);
    auto traj = ddim_invert_video(ft.model, p.scene.video, cond, p.sched);

    // conditional w=1 resampling back down for the round-trip PSNR
    LatentVideo z = traj.latents.back();
    for (int t = p.sched.num_steps; t >= 1; --t)
        z = ddim_step(z, predict_noise_set(ft.model, z, t, cond).eps, t, p.sched);

    write_tensor((dir / "video.vp2p").string(), p.scene.video.to_tensor());
    write_tensor((dir / "zT.vp2p").string(), traj.latents.back().to_tensor());
    write_tensor((dir / "recon.vp2p").string(), z.to_tensor());
    json report = base_report("invert", p.rc);
    report["psnr"] = psnr(p.scene.video, z);
    report["artifacts"] = json::array({"video.vp2p", "zT.vp2p", "recon.vp2p"});
    write_report(dir, report);
    return 0;
}

int cmd_edit(const CommonArgs& args) {
    auto dir = ensure_out_dir(args);
    auto p = prepare(args);
    const Prompt src = tokenize(p.rc.src_prompt, p.vocab);
    const Prompt dst = tokenize(p.rc.dst_prompt, p.vocab);
    auto res = run_video_p2p(p.scene.video, src, dst, p.rc, p.vocab);

    write_tensor((dir / "reconstruction.vp2p").string(), res.loop.reconstruction.to_tensor());
    write_tensor((dir / "edited.vp2p").string(), res.loop.edited.to_tensor());
    write_tensor((dir / "final_mask.vp2p").string(), mask_to_tensor(res.loop.final_mask));

    json report = base_report("edit", p.rc);
    report["src_prompt"] = p.rc.src_prompt;
    report["dst_prompt"] = p.rc.dst_prompt;
    report["metrics"] = metric_block(p.scene.video, res.loop.reconstruction, p.scene.masks);
    report["metrics"]["edited_masked_psnr"] =
        masked_psnr(p.scene.video, res.loop.edited, p.scene.masks);
    report["null_initial_loss"] = res.null_opt.initial_loss;
    report["null_final_loss"] = res.null_opt.final_loss;
    report["finetune_loss_first"] =
        res.finetune_loss.empty() ? 0.0 : res.finetune_loss.front();
    report["finetune_loss_last"] = res.finetune_loss.empty() ? 0.0 : res.finetune_loss.back();
    report["mask_area"] = res.loop.mask_area;
    report["injected"] = res.loop.injected;
    report["timings"] = {{"finetune_s", res.timings.finetune_s},
                         {"inversion_s", res.timings.inversion_s},
                         {"null_opt_s", res.timings.null_opt_s},
                         {"edit_s", res.timings.edit_s},
                         {"total_s", res.timings.total_s()}};
    report["artifacts"] = json::array({"reconstruction.vp2p", "edited.vp2p", "final_mask.vp2p"});
    write_video_ppms(dir, "recon", res.loop.reconstruction, report["artifacts"]);
    write_video_ppms(dir, "edited", res.loop.edited, report["artifacts"]);
    write_report(dir, report);
    return 0;
}

int cmd_baseline(const CommonArgs& args) {
    auto dir = ensure_out_dir(args);
    auto p = prepare(args);
    const Prompt src = tokenize(p.rc.src_prompt, p.vocab);
    const Prompt dst = tokenize(p.rc.dst_prompt, p.vocab);
    const PromptEmbedding cond_src = embed_prompt(src, p.rc.seed);
    const PromptEmbedding cond_dst = embed_prompt(dst, p.rc.seed);
    auto model = init_toy_t2s(p.rc.seed, model_dims_from(p.rc));
    auto ft = finetune_t2s(model, p.scene.video, cond_src, p.rc.finetune_steps, p.rc.finetune_lr,
                           p.sched, p.rc.seed);
    auto traj = ddim_invert_video(ft.model, p.scene.video, cond_src, p.sched);
    auto edited = baseline_edit(ft.model, traj.latents.back(), cond_dst,
                                make_null_embedding(dst.length(), p.rc.seed), p.rc.guidance_w,
                                p.sched);
    write_tensor((dir / "baseline.vp2p").string(), edited.to_tensor());
    json report = base_report("baseline", p.rc);
    report["metrics"] = metric_block(p.scene.video, edited, p.scene.masks);
    report["artifacts"] = json::array({"baseline.vp2p"});
    write_video_ppms(dir, "baseline", edited, report["artifacts"]);
    write_report(dir, report);
    return 0;
}

int cmd_metrics(const CommonArgs& args, const std::string& a_path, const std::string& b_path,
                const std::string& mask_path, double peak) {
    auto dir = ensure_out_dir(args);
    const LatentVideo a = LatentVideo::from_tensor(read_tensor(a_path));
    const LatentVideo b = LatentVideo::from_tensor(read_tensor(b_path));
    json report;
    report["schema_version"] = kReportSchemaVersion;
    report["command"] = "metrics";
    report["psnr"] = psnr(a, b, peak);
    if (!mask_path.empty()) {
        const RegionMask mask = mask_from_tensor(read_tensor(mask_path));
        report["masked_psnr"] = masked_psnr(a, b, mask, peak);
        report["osv_proxy"] = osv_proxy(b, mask);
    }
    std::cout << report.dump(2) << "\n";
    write_report(dir, report);
    return 0;
}

int cmd_ablate(const CommonArgs& args) {
    auto dir = ensure_out_dir(args);
    auto p = prepare(args);
    const Prompt src = tokenize(p.rc.src_prompt, p.vocab);
    const Prompt dst = tokenize(p.rc.dst_prompt, p.vocab);

    struct Arm {
        std::string name;
        RunConfig rc;
    };
    std::vector<Arm> arms;
    {
        RunConfig a = p.rc;
        a.finetune_steps = 0;
        arms.push_back({"no_finetune", a});
    }
    {
        RunConfig a = p.rc;
        a.inner_steps = 0;
        arms.push_back({"initialized_null", a});
    }
    {
        RunConfig a = p.rc;
        a.null_mode = NullSchedule::Mode::Shared;
        a.decoupled_guidance = true;
        arms.push_back({"shared_null_dg_on", a});
    }
    {
        RunConfig a = p.rc;
        a.null_mode = NullSchedule::Mode::PerFrame;
        arms.push_back({"per_frame_null", a});
    }
    {
        RunConfig a = p.rc;
        a.decoupled_guidance = false;
        arms.push_back({"dg_off", a});
    }

    json table = json::array();
    for (const auto& arm : arms) {
        auto res = run_video_p2p(p.scene.video, src, dst, arm.rc, p.vocab);
        json row;
        row["arm"] = arm.name;
        row["recon_psnr"] = psnr(p.scene.video, res.loop.reconstruction);
        row["background_masked_psnr"] =
            masked_psnr(p.scene.video, res.loop.edited, p.scene.masks);
        row["osv_proxy"] = osv_proxy(res.loop.edited, p.scene.masks);
        row["null_params"] = res.null_opt.nulls.param_count();
        table.push_back(row);
        std::cout << arm.name << ": recon_psnr=" << row["recon_psnr"]
                  << " background_masked_psnr=" << row["background_masked_psnr"]
                  << " null_params=" << row["null_params"] << "\n";
    }
    json report = base_report("ablate", p.rc);
    report["arms"] = table;
    write_report(dir, report);
    return 0;
}

int cmd_export_attn(const CommonArgs& args) {
    auto dir = ensure_out_dir(args);
    auto p = prepare(args);
    const Prompt src = tokenize(p.rc.src_prompt, p.vocab);
    const Prompt dst = tokenize(p.rc.dst_prompt, p.vocab);
    auto res = run_video_p2p(p.scene.video, src, dst, p.rc, p.vocab);

    const int T = p.rc.num_steps;
    const int H = p.scene.video.height, W = p.scene.video.width;
    json index = base_report("export-attn", p.rc);
    index["entries"] = json::array();
    // one image per word/frame/step decile: averaged map over steps t..T
    for (int col = 0; col < src.length(); ++col) {
        const std::string word = p.vocab.word_of(src.tokens[col]);
        for (int f = 0; f < p.scene.video.frames; ++f) {
            for (int decile = 0; decile < 10; ++decile) {
                const int t = std::max(1, T - decile * T / 10);
                Eigen::VectorXd avg = res.loop.src_store.averaged_map(col, t, f);
                const double mx = avg.maxCoeff();
                std::vector<uint8_t> rgb(static_cast<size_t>(H) * W * 3);
                for (Eigen::Index s = 0; s < avg.size(); ++s) {
                    const double v = mx > 0.0 ? avg(s) / mx : 0.0;
                    const uint8_t g = static_cast<uint8_t>(std::lround(v * 255.0));
                    rgb[s * 3] = rgb[s * 3 + 1] = rgb[s * 3 + 2] = g;
                }
                const std::string name = "attn_" + word + "_f" + std::to_string(f) + "_d" +
                                         std::to_string(decile) + ".ppm";
                write_ppm((dir / name).string(), rgb, H, W);
                json entry;
                entry["word"] = word;
                entry["frame"] = f;
                entry["from_step"] = t;
                entry["file"] = name;
                index["entries"].push_back(entry);
            }
        }
    }
    std::ofstream out(dir / "attn_index.json");
    out << index.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic toy video editing pipeline"};
    app.require_subcommand(1);

    CommonArgs synth_args, finetune_args, invert_args, edit_args, baseline_args, ablate_args,
        attn_args, metrics_args;
    std::string metrics_a, metrics_b, metrics_mask;
    double metrics_peak = kDefaultPeak;

    add_common(app.add_subcommand("synth", "render the synthetic scene"), synth_args);
    add_common(app.add_subcommand("finetune", "tune the attention parameters on the scene"),
               finetune_args);
    add_common(app.add_subcommand("invert", "run the noising-direction trajectory"), invert_args);
    add_common(app.add_subcommand("edit", "full pipeline: tune, invert, optimize, edit"),
               edit_args);
    add_common(app.add_subcommand("baseline", "plain guided resampling, no attention control"),
               baseline_args);
    add_common(app.add_subcommand("ablate", "run the comparison arms"), ablate_args);
    add_common(app.add_subcommand("export-attn", "dump averaged attention maps as images"),
               attn_args);

    auto* metrics_cmd = app.add_subcommand("metrics", "compare two latent clips");
    add_common(metrics_cmd, metrics_args, /*config_required=*/false);
    metrics_cmd->add_option("--a", metrics_a, "reference clip tensor")->required();
    metrics_cmd->add_option("--b", metrics_b, "candidate clip tensor")->required();
    metrics_cmd->add_option("--mask", metrics_mask, "edited-region mask tensor");
    metrics_cmd->add_option("--peak", metrics_peak, "signal peak for the dB scale");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand("synth")) return cmd_synth(synth_args);
        if (app.got_subcommand("finetune")) return cmd_finetune(finetune_args);
        if (app.got_subcommand("invert")) return cmd_invert(invert_args);
        if (app.got_subcommand("edit")) return cmd_edit(edit_args);
        if (app.got_subcommand("baseline")) return cmd_baseline(baseline_args);
        if (app.got_subcommand("ablate")) return cmd_ablate(ablate_args);
        if (app.got_subcommand("export-attn")) return cmd_export_attn(attn_args);
        if (app.got_subcommand("metrics"))
            return cmd_metrics(metrics_args, metrics_a, metrics_b, metrics_mask, metrics_peak);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
