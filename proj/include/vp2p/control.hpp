#pragma once

#include <Eigen/Dense>
#include <map>
#include <vector>

#include "vp2p/tensor.hpp"
#include "vp2p/text.hpp"

namespace vp2p {

// Recorded cross-attention maps per (timestep, frame) plus an incrementally
// maintained running sum used for the time-averaged maps.
class AttentionStore {
public:
    // map must be row-stochastic (each row sums to 1 within 1e-6)
    void record(int t, int frame, const Eigen::MatrixXd& map);

    const Eigen::MatrixXd& at(int t, int frame) const;
    bool has(int t, int frame) const;
    int min_recorded_step() const { return min_step_; }
    int max_recorded_step() const { return max_step_; }

    // Eq.-10-style per-frame mean of the word's spatial maps over recorded
    // steps t..T, divided by the actual term count.
    Eigen::VectorXd averaged_map(int word, int t, int frame) const;

private:
    std::map<int, std::vector<Eigen::MatrixXd>> maps_;  // t -> per-frame maps
    std::vector<Eigen::MatrixXd> running_sum_;          // per frame
    std::vector<int> running_count_;
    int min_step_ = -1, max_step_ = -1;
};

enum class EditKind { Swap, Refine, Reweight };

struct EditSpec {
    EditKind kind = EditKind::Swap;
    Alignment word_map;               // refinement only
    std::vector<int> src_word_cols;   // prompt positions of the edited word(s), source side
    std::vector<int> dst_word_cols;   // and target side
    double tau_ratio = 0.4;           // cross-attention replacing ratio
    double refine_ratio = 0.4;
    double reweight_scale = 1.0;
    int reweight_col = -1;            // column in the target prompt
    double mask_threshold = 0.3;

    void validate() const;
};

// step is the number of completed denoising steps (0 at t = T); the injection
// window covers the first tau_steps of them.
std::vector<Eigen::MatrixXd> edit_swap(const std::vector<Eigen::MatrixXd>& src_maps,
                                       const std::vector<Eigen::MatrixXd>& dst_maps, int step,
                                       int tau_steps);

std::vector<Eigen::MatrixXd> edit_refine(const std::vector<Eigen::MatrixXd>& src_maps,
                                         const std::vector<Eigen::MatrixXd>& dst_maps,
                                         const Alignment& align, int step, int tau_steps);

std::vector<Eigen::MatrixXd> reweight(const std::vector<Eigen::MatrixXd>& maps, int word_col,
                                      double scale);

// Max-normalizes each map, thresholds, ORs. All-zero maps binarize to zero.
RegionMask binarize_union(const std::vector<Eigen::VectorXd>& avg_src,
                          const std::vector<Eigen::VectorXd>& avg_dst, double threshold, int height,
                          int width);

// Per-site binary selection, mask broadcast over channels; bit-exact copies.
LatentVideo blend(const LatentVideo& z_src, const LatentVideo& z_dst, const RegionMask& alpha);

}  // namespace vp2p
