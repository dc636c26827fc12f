#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vp2p/tensor.hpp"
#include "vp2p/text.hpp"

namespace vp2p {

struct SceneSpec {
    std::string shape = "square";   // square | circle | triangle
    std::string color = "red";
    std::string background = "plain";
    int vel_y = 0, vel_x = 1;       // drift, sites per frame
    int frames = 8;
    int channels = 4;
    int height = 16, width = 16;
};

struct Scene {
    LatentVideo video;
    RegionMask masks;   // ground-truth object sites per frame
    Prompt prompt;      // "a <color> <shape>"
};

Scene render_scene(const SceneSpec& spec, uint64_t seed, const Vocabulary& vocab);

// Fixed linear C->3 colorizer, affine to [0,255], rounded half-to-even.
// Returns interleaved RGB bytes, row-major.
std::vector<uint8_t> render_frame_image(const LatentVideo& video, int frame);

void write_ppm(const std::string& path, const std::vector<uint8_t>& rgb, int height, int width);

// The canonical reference scene used by the end-to-end checks:
// 8 frames, 16x16, square moving (1,0), seed 7.
SceneSpec reference_scene_spec();
constexpr uint64_t kReferenceSceneSeed = 7;

}  // namespace vp2p
