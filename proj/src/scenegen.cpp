#include "vp2p/scenegen.hpp"

#include <cfenv>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "vp2p/rng.hpp"

namespace vp2p {

namespace {

constexpr double kBackgroundAmp = 0.15;

bool shape_hit(const std::string& shape, int dy, int dx) {
    if (shape == "square") return std::abs(dy) <= 2 && std::abs(dx) <= 2;
    if (shape == "circle") return dy * dy + dx * dx <= 6;
    if (shape == "triangle") return dy >= -2 && dy <= 2 && std::abs(dx) <= dy + 2;
    throw std::invalid_argument("render_scene: unsupported shape '" + shape + "'");
}

}  // namespace

Scene render_scene(const SceneSpec& spec, uint64_t seed, const Vocabulary& vocab) {
    const int n = spec.frames, C = spec.channels, H = spec.height, W = spec.width;
    if (n < 1 || C < 1 || H < 7 || W < 7)
        throw std::invalid_argument("render_scene: dims too small");
    const int shape_id = vocab.id_of(spec.shape);
    const int color_id = vocab.id_of(spec.color);
    if (shape_id == vocab.unk_id() || color_id == vocab.unk_id())
        throw std::invalid_argument("render_scene: shape/color token not in vocabulary");

    Scene scene;
    scene.video = LatentVideo(n, C, H, W);
    scene.masks = RegionMask(n, H, W);
    scene.masks.provenance = "synthetic";
    scene.prompt = tokenize("a " + spec.color + " " + spec.shape, vocab);

    // background field: one seeded draw, shared bit-identically across frames
    std::vector<double> background =
        gaussian_vector(mix_seed(seed, 1), static_cast<size_t>(C) * H * W, kBackgroundAmp);
    for (int f = 0; f < n; ++f)
        for (size_t i = 0; i < background.size(); ++i)
            scene.video.data[static_cast<size_t>(f) * background.size() + i] = background[i];

    // token-keyed channel signature for the object
    auto sig_rng = make_rng(mix_seed(seed, 1000 + static_cast<uint64_t>(color_id) * 131 +
                                               static_cast<uint64_t>(shape_id)));
    std::uniform_real_distribution<double> mag(0.5, 0.9);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> signature(C);
    for (int c = 0; c < C; ++c) signature[c] = (sign(sig_rng) ? 1.0 : -1.0) * mag(sig_rng);

    // stamp the drifting object; trajectory auto-centered in the frame
    const int cy0 = H / 2 - spec.vel_y * (n - 1) / 2;
    const int cx0 = W / 2 - spec.vel_x * (n - 1) / 2;
    for (int f = 0; f < n; ++f) {
        const int cy = cy0 + f * spec.vel_y;
        const int cx = cx0 + f * spec.vel_x;
        if (cy - 2 < 0 || cy + 2 >= H || cx - 2 < 0 || cx + 2 >= W)
            throw std::invalid_argument("render_scene: trajectory leaves the frame at frame " +
                                        std::to_string(f));
        for (int dy = -2; dy <= 2; ++dy)
            for (int dx = -2; dx <= 2; ++dx) {
                if (!shape_hit(spec.shape, dy, dx)) continue;
                scene.masks.at(f, cy + dy, cx + dx) = 1;
                for (int c = 0; c < C; ++c) scene.video.at(f, c, cy + dy, cx + dx) = signature[c];
            }
    }
    return scene;
}

std::vector<uint8_t> render_frame_image(const LatentVideo& video, int frame) {
    if (frame < 0 || frame >= video.frames) throw std::out_of_range("render_frame_image: frame");
    for (double v : video.data)
        if (!std::isfinite(v)) throw std::invalid_argument("render_frame_image: non-finite latent");
    // fixed colorizer rows (C up to 4 channels contribute)
    static const double P[3][4] = {
        {0.60, 0.25, -0.10, 0.05},
        {-0.15, 0.55, 0.30, -0.05},
        {0.10, -0.20, 0.50, 0.35},
    };
    const int H = video.height, W = video.width, C = video.channels;
    std::vector<uint8_t> rgb(static_cast<size_t>(H) * W * 3);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int k = 0; k < 3; ++k) {
                double v = 0.0;
                for (int c = 0; c < std::min(C, 4); ++c) v += P[k][c] * video.at(frame, c, y, x);
                double scaled = (v + 1.0) * 0.5 * 255.0;
                scaled = std::min(255.0, std::max(0.0, scaled));
                // round half to even
                const double r = std::nearbyint(scaled);
                rgb[(static_cast<size_t>(y) * W + x) * 3 + k] = static_cast<uint8_t>(r);
            }
    return rgb;
}

void write_ppm(const std::string& path, const std::vector<uint8_t>& rgb, int height, int width) {
    if (rgb.size() != static_cast<size_t>(height) * width * 3)
        throw std::invalid_argument("write_ppm: byte count mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_ppm: cannot open " + path);
    out << "P6\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (!out) throw std::runtime_error("write_ppm: write failed for " + path);
}

SceneSpec reference_scene_spec() {
    SceneSpec s;
    s.shape = "square";
    s.color = "red";
    s.vel_y = 0;
    s.vel_x = 1;
    s.frames = 8;
    s.channels = 4;
    s.height = 16;
    s.width = 16;
    return s;
}

}  // namespace vp2p
