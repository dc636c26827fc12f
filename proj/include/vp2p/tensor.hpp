#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace vp2p {

// Generic row-major double tensor; the on-disk interchange object.
struct Tensor {
    std::vector<uint64_t> dims;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<uint64_t> d) : dims(std::move(d)) {
        data.assign(element_count(dims), 0.0);
    }

    static uint64_t element_count(const std::vector<uint64_t>& dims) {
        uint64_t n = 1;
        for (uint64_t d : dims) {
            if (d == 0) return 0;
            if (n > UINT64_MAX / d) throw std::overflow_error("tensor dim overflow");
            n *= d;
        }
        return n;
    }

    size_t size() const { return data.size(); }
};

// n frames of C x H x W latents.
struct LatentVideo {
    int frames = 0, channels = 0, height = 0, width = 0;
    std::vector<double> data;  // [frame][channel][y][x]

    LatentVideo() = default;
    LatentVideo(int n, int c, int h, int w)
        : frames(n), channels(c), height(h), width(w),
          data(static_cast<size_t>(n) * c * h * w, 0.0) {}

    size_t size() const { return data.size(); }
    size_t frame_size() const { return static_cast<size_t>(channels) * height * width; }
    size_t sites() const { return static_cast<size_t>(height) * width; }

    double& at(int f, int c, int y, int x) {
        return data[((static_cast<size_t>(f) * channels + c) * height + y) * width + x];
    }
    double at(int f, int c, int y, int x) const {
        return data[((static_cast<size_t>(f) * channels + c) * height + y) * width + x];
    }

    bool same_shape(const LatentVideo& o) const {
        return frames == o.frames && channels == o.channels && height == o.height &&
               width == o.width;
    }

    Tensor to_tensor() const {
        Tensor t({static_cast<uint64_t>(frames), static_cast<uint64_t>(channels),
                  static_cast<uint64_t>(height), static_cast<uint64_t>(width)});
        t.data = data;
        return t;
    }
    static LatentVideo from_tensor(const Tensor& t) {
        if (t.dims.size() != 4) throw std::runtime_error("expected rank-4 tensor for latent video");
        LatentVideo v(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]),
                      static_cast<int>(t.dims[2]), static_cast<int>(t.dims[3]));
        v.data = t.data;
        return v;
    }
};

// Per-frame H x W binary maps (edited-object region, blend masks).
struct RegionMask {
    int frames = 0, height = 0, width = 0;
    std::vector<uint8_t> data;  // [frame][y][x], values in {0,1}
    std::string provenance;     // "synthetic" | "attention"

    RegionMask() = default;
    RegionMask(int n, int h, int w)
        : frames(n), height(h), width(w), data(static_cast<size_t>(n) * h * w, 0) {}

    uint8_t& at(int f, int y, int x) {
        return data[(static_cast<size_t>(f) * height + y) * width + x];
    }
    uint8_t at(int f, int y, int x) const {
        return data[(static_cast<size_t>(f) * height + y) * width + x];
    }
    size_t frame_size() const { return static_cast<size_t>(height) * width; }
};

}  // namespace vp2p
