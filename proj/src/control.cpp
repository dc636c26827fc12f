#include "vp2p/control.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace vp2p {

void AttentionStore::record(int t, int frame, const Eigen::MatrixXd& map) {
    for (Eigen::Index r = 0; r < map.rows(); ++r) {
        const double s = map.row(r).sum();
        if (std::abs(s - 1.0) > 1e-6)
            throw std::invalid_argument("AttentionStore::record: row " + std::to_string(r) +
                                        " sums to " + std::to_string(s) + ", not 1");
    }
    if (frame < 0) throw std::out_of_range("AttentionStore::record: bad frame");
    auto& slot = maps_[t];
    if (static_cast<int>(slot.size()) <= frame) slot.resize(frame + 1);
    if (static_cast<int>(running_sum_.size()) <= frame) {
        running_sum_.resize(frame + 1);
        running_count_.resize(frame + 1, 0);
    }
    if (slot[frame].size() > 0) {
        running_sum_[frame] -= slot[frame];  // overwrite: drop the old contribution
        running_count_[frame] -= 1;
    }
    if (running_sum_[frame].size() == 0)
        running_sum_[frame] = Eigen::MatrixXd::Zero(map.rows(), map.cols());
    slot[frame] = map;
    running_sum_[frame] += map;
    running_count_[frame] += 1;
    if (min_step_ < 0 || t < min_step_) min_step_ = t;
    if (t > max_step_) max_step_ = t;
}

bool AttentionStore::has(int t, int frame) const {
    auto it = maps_.find(t);
    return it != maps_.end() && frame < static_cast<int>(it->second.size()) &&
           it->second[frame].size() > 0;
}

const Eigen::MatrixXd& AttentionStore::at(int t, int frame) const {
    if (!has(t, frame)) throw std::out_of_range("AttentionStore: no map at requested slot");
    return maps_.at(t)[frame];
}

Eigen::VectorXd AttentionStore::averaged_map(int word, int t, int frame) const {
    if (min_step_ < 0 || t > max_step_)
        throw std::out_of_range("AttentionStore::averaged_map: empty step range");
    if (t == min_step_ && frame < static_cast<int>(running_sum_.size()) &&
        running_sum_[frame].size() > 0) {
        return running_sum_[frame].col(word) / double(running_count_[frame]);
    }
    Eigen::VectorXd sum;
    int count = 0;
    for (auto it = maps_.lower_bound(t); it != maps_.end(); ++it) {
        if (frame >= static_cast<int>(it->second.size()) || it->second[frame].size() == 0) continue;
        const auto& m = it->second[frame];
        if (count == 0) sum = Eigen::VectorXd::Zero(m.rows());
        sum += m.col(word);
        ++count;
    }
    if (count == 0) throw std::out_of_range("AttentionStore::averaged_map: empty step range");
    return sum / double(count);
}

void EditSpec::validate() const {
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in01(tau_ratio)) throw std::invalid_argument("EditSpec: tau_ratio outside [0,1]");
    if (!in01(refine_ratio)) throw std::invalid_argument("EditSpec: refine_ratio outside [0,1]");
    if (!(mask_threshold > 0.0 && mask_threshold < 1.0))
        throw std::invalid_argument("EditSpec: mask_threshold outside (0,1)");
    if (!std::isfinite(reweight_scale)) throw std::invalid_argument("EditSpec: bad reweight_scale");
}

std::vector<Eigen::MatrixXd> edit_swap(const std::vector<Eigen::MatrixXd>& src_maps,
                                       const std::vector<Eigen::MatrixXd>& dst_maps, int step,
                                       int tau_steps) {
    if (src_maps.size() != dst_maps.size())
        throw std::invalid_argument("edit_swap: frame count mismatch");
    for (size_t i = 0; i < src_maps.size(); ++i)
        if (src_maps[i].rows() != dst_maps[i].rows() || src_maps[i].cols() != dst_maps[i].cols())
            throw std::invalid_argument("edit_swap: map shape mismatch (prompts of equal length required)");
    return step < tau_steps ? src_maps : dst_maps;
}

std::vector<Eigen::MatrixXd> edit_refine(const std::vector<Eigen::MatrixXd>& src_maps,
                                         const std::vector<Eigen::MatrixXd>& dst_maps,
                                         const Alignment& align, int step, int tau_steps) {
    if (src_maps.size() != dst_maps.size())
        throw std::invalid_argument("edit_refine: frame count mismatch");
    if (step >= tau_steps) return dst_maps;
    std::vector<Eigen::MatrixXd> out(dst_maps.size());
    for (size_t i = 0; i < dst_maps.size(); ++i) {
        Eigen::MatrixXd m = dst_maps[i];
        for (const auto& [dst_col, src_col] : align.map) {
            if (dst_col < 0 || dst_col >= m.cols() || src_col < 0 || src_col >= src_maps[i].cols())
                throw std::out_of_range("edit_refine: alignment index out of range");
            m.col(dst_col) = src_maps[i].col(src_col);
        }
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            const double s = m.row(r).sum();
            if (s > 0.0) m.row(r) /= s;
        }
        out[i] = std::move(m);
    }
    return out;
}

std::vector<Eigen::MatrixXd> reweight(const std::vector<Eigen::MatrixXd>& maps, int word_col,
                                      double scale) {
    std::vector<Eigen::MatrixXd> out(maps.size());
    for (size_t i = 0; i < maps.size(); ++i) {
        if (word_col < 0 || word_col >= maps[i].cols())
            throw std::out_of_range("reweight: word column out of range");
        out[i] = maps[i];
        out[i].col(word_col) *= scale;  // deliberately no renormalization
    }
    return out;
}

static void binarize_into(const Eigen::VectorXd& avg, double threshold, RegionMask& mask, int f) {
    const double mx = avg.maxCoeff();
    if (mx <= 0.0) return;  // all-zero map -> contributes nothing
    for (Eigen::Index s = 0; s < avg.size(); ++s)
        if (avg(s) / mx > threshold) mask.data[static_cast<size_t>(f) * mask.frame_size() + s] = 1;
}

RegionMask binarize_union(const std::vector<Eigen::VectorXd>& avg_src,
                          const std::vector<Eigen::VectorXd>& avg_dst, double threshold, int height,
                          int width) {
    if (avg_src.size() != avg_dst.size())
        throw std::invalid_argument("binarize_union: frame count mismatch");
    RegionMask mask(static_cast<int>(avg_src.size()), height, width);
    mask.provenance = "attention";
    for (size_t f = 0; f < avg_src.size(); ++f) {
        if (avg_src[f].size() != static_cast<Eigen::Index>(mask.frame_size()) ||
            avg_dst[f].size() != static_cast<Eigen::Index>(mask.frame_size()))
            throw std::invalid_argument("binarize_union: map size mismatch");
        binarize_into(avg_src[f], threshold, mask, static_cast<int>(f));
        binarize_into(avg_dst[f], threshold, mask, static_cast<int>(f));
    }
    return mask;
}

LatentVideo blend(const LatentVideo& z_src, const LatentVideo& z_dst, const RegionMask& alpha) {
    if (!z_src.same_shape(z_dst)) throw std::invalid_argument("blend: latent shape mismatch");
    if (alpha.frames != z_src.frames || alpha.height != z_src.height ||
        alpha.width != z_src.width)
        throw std::invalid_argument("blend: mask shape mismatch");
    LatentVideo out = z_dst;
    const size_t S = z_src.sites();
    for (int f = 0; f < z_src.frames; ++f)
        for (size_t s = 0; s < S; ++s)
            if (!alpha.data[static_cast<size_t>(f) * S + s])
                for (int c = 0; c < z_src.channels; ++c)
                    out.data[(static_cast<size_t>(f) * z_src.channels + c) * S + s] =
                        z_src.data[(static_cast<size_t>(f) * z_src.channels + c) * S + s];
    return out;
}

}  // namespace vp2p
