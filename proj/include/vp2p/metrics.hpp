#pragma once

#include "vp2p/tensor.hpp"

namespace vp2p {

// Synthetic latent dynamic range used as the default PSNR peak.
constexpr double kDefaultPeak = 2.0;
// Zero-error PSNR sentinel (dB); values are capped here.
constexpr double kPsnrCap = 99.0;

double psnr(const LatentVideo& a, const LatentVideo& b, double peak = kDefaultPeak);

// PSNR restricted to sites where mask = 0 (the should-be-unchanged region).
double masked_psnr(const LatentVideo& a, const LatentVideo& b, const RegionMask& mask,
                   double peak = kDefaultPeak);

// Cross-frame variance of mean-pooled masked descriptors; a stand-in
// consistency score, not the published metric.
double osv_proxy(const LatentVideo& video, const RegionMask& mask, int pool = 1);

}  // namespace vp2p
