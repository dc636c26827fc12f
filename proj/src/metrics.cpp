#include "vp2p/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace vp2p {

static double mse_to_db(double mse, double peak) {
    if (mse == 0.0) return kPsnrCap;
    const double db = 10.0 * std::log10(peak * peak / mse);
    return db > kPsnrCap ? kPsnrCap : db;
}

double psnr(const LatentVideo& a, const LatentVideo& b, double peak) {
    if (!a.same_shape(b)) throw std::invalid_argument("psnr: shape mismatch");
    if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be positive");
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return mse_to_db(acc / double(a.data.size()), peak);
}

double masked_psnr(const LatentVideo& a, const LatentVideo& b, const RegionMask& mask,
                   double peak) {
    if (!a.same_shape(b)) throw std::invalid_argument("masked_psnr: shape mismatch");
    if (!(peak > 0.0)) throw std::invalid_argument("masked_psnr: peak must be positive");
    if (mask.frames != a.frames || mask.height != a.height || mask.width != a.width)
        throw std::invalid_argument("masked_psnr: mask shape mismatch");
    const size_t S = a.sites();
    double acc = 0.0;
    size_t count = 0;
    for (int f = 0; f < a.frames; ++f)
        for (size_t s = 0; s < S; ++s) {
            if (mask.data[static_cast<size_t>(f) * S + s]) continue;
            for (int c = 0; c < a.channels; ++c) {
                const size_t i = (static_cast<size_t>(f) * a.channels + c) * S + s;
                const double d = a.data[i] - b.data[i];
                acc += d * d;
            }
            ++count;
        }
    if (count == 0) throw std::invalid_argument("masked_psnr: mask covers everything");
    return mse_to_db(acc / double(count * a.channels), peak);
}

double osv_proxy(const LatentVideo& video, const RegionMask& mask, int pool) {
    if (pool < 1) throw std::invalid_argument("osv_proxy: pool must be >= 1");
    if (mask.frames != video.frames || mask.height != video.height || mask.width != video.width)
        throw std::invalid_argument("osv_proxy: mask shape mismatch");
    const int ph = (video.height + pool - 1) / pool;
    const int pw = (video.width + pool - 1) / pool;
    const int n = video.frames, C = video.channels;

    // per-frame descriptor: mean of pooled latent vectors over masked pooled sites
    std::vector<std::vector<double>> desc(n, std::vector<double>(C, 0.0));
    for (int f = 0; f < n; ++f) {
        size_t count = 0;
        for (int py = 0; py < ph; ++py)
            for (int px = 0; px < pw; ++px) {
                bool masked = false;
                std::vector<double> pooled(C, 0.0);
                int cells = 0;
                for (int y = py * pool; y < std::min((py + 1) * pool, video.height); ++y)
                    for (int x = px * pool; x < std::min((px + 1) * pool, video.width); ++x) {
                        if (mask.at(f, y, x)) masked = true;
                        for (int c = 0; c < C; ++c) pooled[c] += video.at(f, c, y, x);
                        ++cells;
                    }
                if (!masked) continue;
                for (int c = 0; c < C; ++c) desc[f][c] += pooled[c] / double(cells);
                ++count;
            }
        if (count == 0) throw std::invalid_argument("osv_proxy: empty mask in frame");
        for (int c = 0; c < C; ++c) desc[f][c] /= double(count);
    }

    std::vector<double> mean(C, 0.0);
    for (int f = 0; f < n; ++f)
        for (int c = 0; c < C; ++c) mean[c] += desc[f][c] / double(n);
    double acc = 0.0;
    for (int f = 0; f < n; ++f)
        for (int c = 0; c < C; ++c) {
            const double d = desc[f][c] - mean[c];
            acc += d * d;
        }
    return acc / double(n);
}

}  // namespace vp2p
