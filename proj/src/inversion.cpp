#include "vp2p/inversion.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "vp2p/adam.hpp"

namespace vp2p {

namespace {

bool all_finite(const LatentVideo& v) {
    for (double x : v.data)
        if (!std::isfinite(x)) return false;
    return true;
}

double rel_change(const LatentVideo& a, const LatentVideo& b) {
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        num += d * d;
        den += a.data[i] * a.data[i];
    }
    return std::sqrt(num / (den + 1e-300));
}

double sq_loss(const LatentVideo& a, const LatentVideo& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace

const std::vector<PromptEmbedding>& NullSchedule::at(int t) const {
    if (t < 1 || t > num_steps)
        throw std::out_of_range("NullSchedule: step " + std::to_string(t) + " not covered (T=" +
                                std::to_string(num_steps) + ")");
    return embeddings[t - 1];
}

size_t NullSchedule::param_count() const {
    size_t n = 0;
    for (const auto& slot : embeddings)
        for (const auto& e : slot) n += static_cast<size_t>(e.size());
    return n;
}

PromptEmbedding make_null_embedding(int length, uint64_t seed, int dim) {
    Eigen::RowVectorXd row = embed_token(0, seed, dim);  // reserved <null> token
    PromptEmbedding e(length, dim);
    for (int i = 0; i < length; ++i) e.row(i) = row;
    return e;
}

Trajectory ddim_invert_video(const ToyT2SDenoiser& model, const LatentVideo& z0,
                             const PromptEmbedding& cond, const NoiseSchedule& sched) {
    constexpr int kMaxFixedPointIters = 200;
    constexpr double kFixedPointTol = 1e-13;

    Trajectory traj;
    traj.direction = Trajectory::Direction::Diffusion;
    traj.latents.reserve(sched.num_steps + 1);
    traj.latents.push_back(z0);
    LatentVideo z = z0;
    for (int t = 0; t < sched.num_steps; ++t) {
        // solve z_next = inverse_step(z, eps(z_next, t+1)) so the sampler
        // inverts this step exactly
        LatentVideo eps = predict_noise_set(model, z, t + 1, cond).eps;
        LatentVideo z_next = ddim_inverse_step(z, eps, t, sched);
        for (int it = 0; it < kMaxFixedPointIters; ++it) {
            eps = predict_noise_set(model, z_next, t + 1, cond).eps;
            LatentVideo refined = ddim_inverse_step(z, eps, t, sched);
            const double change = rel_change(refined, z_next);
            z_next = std::move(refined);
            if (change < kFixedPointTol) break;
        }
        if (!all_finite(z_next))
            throw std::runtime_error("ddim_invert_video: non-finite latent at step " +
                                     std::to_string(t + 1));
        traj.latents.push_back(z_next);
        z = traj.latents.back();
    }
    return traj;
}

OptimizeNullResult optimize_null(const ToyT2SDenoiser& model, const Trajectory& traj,
                                 const PromptEmbedding& cond, double w, NullSchedule::Mode mode,
                                 int inner_steps, double lr, const PromptEmbedding& null_init,
                                 const NoiseSchedule& sched) {
    if (traj.direction != Trajectory::Direction::Diffusion)
        throw std::invalid_argument("optimize_null: need a diffusion-direction trajectory");
    const int T = sched.num_steps;
    if (static_cast<int>(traj.latents.size()) != T + 1)
        throw std::invalid_argument("optimize_null: trajectory/schedule length mismatch");
    const int n = traj.latents[0].frames;
    const int slots = mode == NullSchedule::Mode::Shared ? 1 : n;
    const size_t embed_size = static_cast<size_t>(null_init.size());

    OptimizeNullResult res;
    res.nulls.mode = mode;
    res.nulls.num_steps = T;
    res.nulls.embeddings.assign(T, std::vector<PromptEmbedding>(slots, null_init));
    res.initial_loss.assign(T, 0.0);
    res.final_loss.assign(T, 0.0);
    res.recon.direction = Trajectory::Direction::Denoising;

    std::vector<PromptEmbedding> phi(slots, null_init);
    LatentVideo zbar = traj.latents[T];
    res.recon.latents.push_back(zbar);

    std::vector<double> flat_grad(embed_size * slots);
    for (int t = T; t >= 1; --t) {
        const LatentVideo& target = traj.latents[t - 1];
        const double eps_coeff = ddim_step_eps_coeff(t, sched);
        AdamState adam(embed_size * slots, lr);

        auto eval = [&](const std::vector<PromptEmbedding>& emb) {
            EpsPrediction p = guided_predict_multi(model, zbar, t, cond, emb, w);
            return ddim_step(zbar, p.eps, t, sched);
        };

        std::vector<PromptEmbedding> best = phi;
        double best_loss = std::numeric_limits<double>::infinity();
        for (int k = 0; k <= inner_steps; ++k) {
            LatentVideo zhat = eval(phi);
            const double loss = sq_loss(zhat, target);
            if (k == 0) res.initial_loss[t - 1] = loss;
            if (loss > 1e6)
                throw std::runtime_error("optimize_null: diverged at t=" + std::to_string(t) +
                                         " iter=" + std::to_string(k) +
                                         " loss=" + std::to_string(loss));
            if (loss < best_loss) {
                best_loss = loss;
                best = phi;
            }
            if (loss < 1e-5 || k == inner_steps) break;

            LatentVideo upstream = zhat;
            for (size_t i = 0; i < upstream.data.size(); ++i)
                upstream.data[i] = 2.0 * eps_coeff * (zhat.data[i] - target.data[i]);
            BackwardResult bw = backward(model, zbar, t, cond, phi, w, upstream);
            for (int s = 0; s < slots; ++s)
                for (size_t i = 0; i < embed_size; ++i)
                    flat_grad[static_cast<size_t>(s) * embed_size + i] = bw.grad_uncond[s].data()[i];
            std::vector<double> flat(embed_size * slots);
            for (int s = 0; s < slots; ++s)
                for (size_t i = 0; i < embed_size; ++i)
                    flat[static_cast<size_t>(s) * embed_size + i] = phi[s].data()[i];
            adam.update(flat.data(), flat_grad.data(), flat.size());
            for (int s = 0; s < slots; ++s)
                for (size_t i = 0; i < embed_size; ++i)
                    phi[s].data()[i] = flat[static_cast<size_t>(s) * embed_size + i];
        }

        phi = best;
        res.final_loss[t - 1] = best_loss;
        res.nulls.embeddings[t - 1] = best;
        zbar = eval(best);  // Eq.-8 carry to the next step
        res.recon.latents.push_back(zbar);
    }
    res.recon.latents.shrink_to_fit();
    return res;
}

LatentVideo reconstruct_with_null(const ToyT2SDenoiser& model, const LatentVideo& zT,
                                  const PromptEmbedding& cond, const NullSchedule& nulls, double w,
                                  const NoiseSchedule& sched) {
    if (nulls.num_steps != sched.num_steps)
        throw std::invalid_argument("reconstruct_with_null: null schedule covers " +
                                    std::to_string(nulls.num_steps) + " steps, schedule has " +
                                    std::to_string(sched.num_steps));
    LatentVideo z = zT;
    for (int t = sched.num_steps; t >= 1; --t) {
        EpsPrediction p = guided_predict_multi(model, z, t, cond, nulls.at(t), w);
        z = ddim_step(z, p.eps, t, sched);
    }
    return z;
}

}  // namespace vp2p
