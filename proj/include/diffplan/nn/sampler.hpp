#pragma once

#include <cstdint>
#include <thread>
#include <vector>

#include "diffplan/core/diffusion.hpp"
#include "diffplan/nn/denoiser.hpp"

namespace diffplan::nn {

// Binds a network + observation into the architecture-agnostic sampler
// interface. Predictions are converted to clean-trajectory form and clamped
// to the world bound (in normalized units) before the reverse step.
inline DenoiseFn make_denoise_fn(const Denoiser& net, const Observation& obs,
                                 const DiffusionSchedule& sched,
                                 Parameterization param = Parameterization::trajectory,
                                 double world_bound = kDefaultWorldBound) {
    const double clamp = world_bound * net.config().traj_scale;
    MatrixXd static_mem = net.encode_static_memory(obs);
    return [&net, static_mem, &sched, param, clamp](const TrajMat& tauk, int k) {
        MatrixXd mem = net.memory_with_step(static_mem, k, nullptr);
        TrajMat pred = net.decode(tauk, mem, k);
        TrajMat x0 = convert_parameterization(pred, tauk, k, sched, param);
        return TrajMat(x0.cwiseMax(-clamp).cwiseMin(clamp));
    };
}

// Batched ensemble planner. One frame costs: one static-memory encoding,
// per step one memory row + cross-attention key/value projection shared by
// all candidates, and per candidate the stacked decoder. Candidate chunks
// run the decoder as single GEMMs over (8 * chunk) query rows; self-attention
// stays inside each candidate's 8-row slice. Results match the generic
// per-candidate sampler because candidate i always draws noise from stream
// (seed, i).
class BatchPlanner {
public:
    explicit BatchPlanner(const Denoiser& net, int jobs = 1,
                          Parameterization param = Parameterization::trajectory,
                          double world_bound = kDefaultWorldBound)
        : net_(net),
          sched_(make_schedule(net.config().K_train, ScheduleKind::cosine)),
          jobs_(jobs < 1 ? 1 : jobs),
          param_(param),
          world_bound_(world_bound) {}

    BatchPlanner(const Denoiser& net, DiffusionSchedule sched, int jobs,
                 Parameterization param = Parameterization::trajectory,
                 double world_bound = kDefaultWorldBound)
        : net_(net), sched_(std::move(sched)), jobs_(jobs < 1 ? 1 : jobs), param_(param),
          world_bound_(world_bound) {}

    const DiffusionSchedule& schedule() const { return sched_; }

    // candidates in meters, clamped to the world bound
    TrajectoryEnsemble sample(const Observation& obs, int n, int ddim_steps, std::uint64_t seed,
                              std::int64_t frame_id = 0) const {
        if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
        if (ddim_steps < 1) throw std::invalid_argument("sample: ddim_steps must be >= 1");

        const MatrixXd static_mem = net_.encode_static_memory(obs);
        const std::vector<int> ks = ddim_timesteps(sched_, ddim_steps);

        // per-step shared state: full memory and cross-attention K/V per block
        struct StepShared {
            MatrixXd memory;
            MatrixXd k_raw;
            std::vector<KVCache> kv;
        };
        std::vector<StepShared> shared(ks.size() - 1);
        for (std::size_t si = 0; si + 1 < ks.size(); ++si) {
            StepShared& s = shared[si];
            s.k_raw = net_.step_token_raw(ks[si]);
            MatrixXd row = net_.ln_mem_.forward(net_.ps_, s.k_raw);
            s.memory.resize(static_mem.rows() + 1, static_mem.cols());
            s.memory.topRows(static_mem.rows()) = static_mem;
            s.memory.bottomRows(1) = row;
            s.kv.reserve(net_.dec_blocks_.size());
            for (const auto& b : net_.dec_blocks_)
                s.kv.push_back(b.cross_attn.project_kv(net_.ps_, s.memory));
        }

        TrajectoryEnsemble ens;
        ens.frame_id = frame_id;
        ens.seed = seed;
        ens.candidates.resize(static_cast<std::size_t>(n));

        const int jobs = std::min(jobs_, n);
        auto worker = [&](int w) {
            const int chunk = (n + jobs - 1) / jobs;
            const int lo = w * chunk;
            const int hi = std::min(n, lo + chunk);
            if (lo >= hi) return;
            run_chunk(ens, shared, ks, seed, lo, hi);
        };
        if (jobs == 1) {
            worker(0);
        } else {
            std::vector<std::thread> pool;
            for (int w = 0; w < jobs; ++w) pool.emplace_back(worker, w);
            for (auto& t : pool) t.join();
        }
        return ens;
    }

private:
    template <typename Shared>
    void run_chunk(TrajectoryEnsemble& ens, const std::vector<Shared>& shared,
                   const std::vector<int>& ks, std::uint64_t seed, int lo, int hi) const {
        const int c = hi - lo;
        const int rows = c * kNumWaypoints;
        const double clamp = world_bound_ * net_.config().traj_scale;

        MatrixXd x(rows, 2);
        for (int i = 0; i < c; ++i) {
            Rng rng = derive_rng(seed, "ensemble", {static_cast<std::uint64_t>(lo + i)});
            for (int r = 0; r < kNumWaypoints; ++r)
                for (int col = 0; col < 2; ++col) x(i * kNumWaypoints + r, col) = rng.normal();
        }

        for (std::size_t si = 0; si + 1 < ks.size(); ++si) {
            const int k = ks[si], k_next = ks[si + 1];
            MatrixXd pred = decode_stacked(x, shared[si].k_raw, shared[si].kv, c);
            if (param_ == Parameterization::noise) {
                const double ab = sched_.alpha_bar[static_cast<std::size_t>(k)];
                if (ab <= 0.0) throw std::invalid_argument("noise parameterization needs alpha_bar > 0");
                pred = (x - sched_.sqrt_one_minus_ab(k) * pred) / sched_.sqrt_ab(k);
            }
            pred = pred.cwiseMax(-clamp).cwiseMin(clamp);
            const double eps_scale = sched_.sqrt_one_minus_ab(k);
            if (eps_scale == 0.0) {
                x = pred;
            } else {
                MatrixXd eps_hat = (x - sched_.sqrt_ab(k) * pred) / eps_scale;
                x = sched_.sqrt_ab(k_next) * pred + sched_.sqrt_one_minus_ab(k_next) * eps_hat;
            }
        }
        if (!x.allFinite()) throw DivergenceError("batched sampler produced non-finite candidates");

        const double inv_scale = 1.0 / net_.config().traj_scale;
        for (int i = 0; i < c; ++i) {
            TrajMat wp = x.middleRows(i * kNumWaypoints, kNumWaypoints) * inv_scale;
            ens.candidates[static_cast<std::size_t>(lo + i)].wp =
                wp.cwiseMax(-world_bound_).cwiseMin(world_bound_);
        }
    }

    // stacked decoder over c candidates (8c query rows)
    MatrixXd decode_stacked(const MatrixXd& tau_stack, const MatrixXd& k_raw,
                            const std::vector<KVCache>& kv, int c) const {
        const ParamStore& ps = net_.ps_;
        MatrixXd q = net_.query_proj_.forward(ps, tau_stack);
        if (net_.cfg_.query_pos_embed)
            for (int i = 0; i < c; ++i)
                q.middleRows(i * kNumWaypoints, kNumWaypoints) += ps.view(net_.query_pos_);
        q.rowwise() += k_raw.row(0);

        for (std::size_t bi = 0; bi < net_.dec_blocks_.size(); ++bi) {
            const auto& blk = net_.dec_blocks_[bi];
            MatrixXd a = blk.ln1.forward(ps, q);
            q += self_attention_stacked(blk.self_attn, a, c);
            MatrixXd b = blk.ln2.forward(ps, q);
            q += cross_attention_stacked(blk.cross_attn, b, kv[bi]);
            MatrixXd d = blk.ln3.forward(ps, q);
            q += blk.mlp.forward(ps, d);
        }
        MatrixXd h = net_.ln_f_.forward(ps, q);
        return net_.head_.forward(ps, h);
    }

    MatrixXd self_attention_stacked(const MultiHeadAttention& attn, const MatrixXd& a, int c) const {
        const ParamStore& ps = net_.ps_;
        MatrixXd Q = attn.q.forward(ps, a);
        MatrixXd K = attn.k.forward(ps, a);
        MatrixXd V = attn.v.forward(ps, a);
        MatrixXd mixed(a.rows(), a.cols());
        const int dh = attn.head_dim;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        for (int i = 0; i < c; ++i) {
            const int r0 = i * kNumWaypoints;
            for (int h = 0; h < attn.heads; ++h) {
                auto Qh = Q.block(r0, h * dh, kNumWaypoints, dh);
                auto Kh = K.block(r0, h * dh, kNumWaypoints, dh);
                auto Vh = V.block(r0, h * dh, kNumWaypoints, dh);
                MatrixXd S = (Qh * Kh.transpose()) * scale;
                MultiHeadAttention::softmax_rows(S);
                mixed.block(r0, h * dh, kNumWaypoints, dh).noalias() = S * Vh;
            }
        }
        return attn.out.forward(ps, mixed);
    }

    MatrixXd cross_attention_stacked(const MultiHeadAttention& attn, const MatrixXd& b,
                                     const KVCache& kv) const {
        const ParamStore& ps = net_.ps_;
        MatrixXd Q = attn.q.forward(ps, b);
        MatrixXd mixed(b.rows(), b.cols());
        const int dh = attn.head_dim;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        for (int h = 0; h < attn.heads; ++h) {
            auto Qh = Q.middleCols(h * dh, dh);
            auto Kh = kv.K.middleCols(h * dh, dh);
            auto Vh = kv.V.middleCols(h * dh, dh);
            MatrixXd S = (Qh * Kh.transpose()) * scale;
            MultiHeadAttention::softmax_rows(S);
            mixed.middleCols(h * dh, dh).noalias() = S * Vh;
        }
        return attn.out.forward(ps, mixed);
    }

    const Denoiser& net_;
    DiffusionSchedule sched_;
    int jobs_;
    Parameterization param_;
    double world_bound_;
};

}  // namespace diffplan::nn
