#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "diffplan/core/types.hpp"
#include "diffplan/nn/layers.hpp"
#include "diffplan/nn/observation.hpp"
#include "diffplan/nn/param_store.hpp"

namespace diffplan::nn {

// Raised when a forward pass produces non-finite activations; surfaced by the
// trainer as a divergence diagnostic.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DenoiserConfig {
    int grid_size = 32;
    int patch = 8;            // cells per patch side; (grid/patch)^2 spatial tokens
    int token_dim = 64;       // the reference system uses 256; desk default is 64
    int n_heads = 4;
    int n_layers = 2;         // decoder blocks
    int memory_layers = 2;    // mixing blocks over the observation tokens
    int mlp_ratio = 4;
    int K_train = 100;
    double traj_scale = 0.1;  // meters -> diffusion units (also applied to the target point)
    double vel_scale = 0.1;
    bool spatial_pos_embed = true;  // disabled by the memory-permutation test
    bool query_pos_embed = true;
    bool zero_init_head = true;  // output starts at the data mean; speeds up early training
    std::uint64_t rng_seed = 1;

    int spatial_tokens() const { return (grid_size / patch) * (grid_size / patch); }
    int memory_tokens() const { return spatial_tokens() + 3; }  // + target point, velocity, step

    void validate() const {
        if (grid_size <= 0 || patch <= 0 || grid_size % patch != 0)
            throw std::invalid_argument("denoiser config: grid_size must be a multiple of patch");
        if (token_dim <= 0 || n_heads <= 0 || token_dim % n_heads != 0)
            throw std::invalid_argument("denoiser config: token_dim must divide by n_heads");
        if (n_layers < 1 || memory_layers < 0 || mlp_ratio < 1 || K_train < 2)
            throw std::invalid_argument("denoiser config: non-positive size");
    }
};

// sinusoidal embedding of the diffusion step
inline VectorXd step_sinusoid(int k, int dim) {
    VectorXd e(dim);
    for (int i = 0; i < dim / 2; ++i) {
        const double omega = std::pow(10000.0, -2.0 * i / dim);
        e(2 * i) = std::sin(k * omega);
        e(2 * i + 1) = std::cos(k * omega);
    }
    if (dim % 2 == 1) e(dim - 1) = 0.0;
    return e;
}

namespace detail {

struct EncBlockCache {
    MatrixXd x_in, x_mid;
    LayerNormCache ln1, ln2;
    AttentionCache attn;
    MlpCache mlp;
};

// pre-norm residual block: self-attention + MLP
struct EncBlock {
    LayerNorm ln1, ln2;
    MultiHeadAttention attn;
    Mlp mlp;

    static EncBlock create(ParamStore& ps, const std::string& name, int dim, int heads, int hidden,
                           Rng& rng) {
        EncBlock b;
        b.ln1 = LayerNorm::create(ps, name + ".ln1", dim);
        b.attn = MultiHeadAttention::create(ps, name + ".attn", dim, heads, rng);
        b.ln2 = LayerNorm::create(ps, name + ".ln2", dim);
        b.mlp = Mlp::create(ps, name + ".mlp", dim, hidden, rng);
        return b;
    }

    MatrixXd forward(const ParamStore& ps, const MatrixXd& x, EncBlockCache* c = nullptr) const {
        MatrixXd a = ln1.forward(ps, x, c ? &c->ln1 : nullptr);
        MatrixXd x1 = x + attn.forward(ps, a, a, c ? &c->attn : nullptr);
        MatrixXd b = ln2.forward(ps, x1, c ? &c->ln2 : nullptr);
        MatrixXd y = x1 + mlp.forward(ps, b, c ? &c->mlp : nullptr);
        if (c) {
            c->x_in = x;
            c->x_mid = std::move(x1);
        }
        return y;
    }

    MatrixXd backward(const ParamStore& ps, GradBuffer& g, const EncBlockCache& c,
                      const MatrixXd& dy) const {
        MatrixXd db = mlp.backward(ps, g, c.mlp, dy);
        MatrixXd dx1 = dy + ln2.backward(ps, g, c.ln2, db);
        // q and k/v both read the same normalized input
        MatrixXd dself = MatrixXd::Zero(c.x_in.rows(), c.x_in.cols());
        MatrixXd da = attn.backward(ps, g, c.attn, dx1, dself);
        return dx1 + ln1.backward(ps, g, c.ln1, da + dself);
    }
};

struct DecBlockCache {
    MatrixXd x_in, x1, x2;
    LayerNormCache ln1, ln2, ln3;
    AttentionCache self_a, cross_a;
    MlpCache mlp;
};

// pre-norm residual block: self-attention + cross-attention + MLP
struct DecBlock {
    LayerNorm ln1, ln2, ln3;
    MultiHeadAttention self_attn, cross_attn;
    Mlp mlp;

    static DecBlock create(ParamStore& ps, const std::string& name, int dim, int heads, int hidden,
                           Rng& rng) {
        DecBlock b;
        b.ln1 = LayerNorm::create(ps, name + ".ln1", dim);
        b.self_attn = MultiHeadAttention::create(ps, name + ".self", dim, heads, rng);
        b.ln2 = LayerNorm::create(ps, name + ".ln2", dim);
        b.cross_attn = MultiHeadAttention::create(ps, name + ".cross", dim, heads, rng);
        b.ln3 = LayerNorm::create(ps, name + ".ln3", dim);
        b.mlp = Mlp::create(ps, name + ".mlp", dim, hidden, rng);
        return b;
    }

    MatrixXd forward(const ParamStore& ps, const MatrixXd& x, const MatrixXd& memory,
                     DecBlockCache* c = nullptr) const {
        MatrixXd a = ln1.forward(ps, x, c ? &c->ln1 : nullptr);
        MatrixXd x1 = x + self_attn.forward(ps, a, a, c ? &c->self_a : nullptr);
        MatrixXd b = ln2.forward(ps, x1, c ? &c->ln2 : nullptr);
        MatrixXd x2 = x1 + cross_attn.forward(ps, b, memory, c ? &c->cross_a : nullptr);
        MatrixXd d = ln3.forward(ps, x2, c ? &c->ln3 : nullptr);
        MatrixXd y = x2 + mlp.forward(ps, d, c ? &c->mlp : nullptr);
        if (c) {
            c->x_in = x;
            c->x1 = std::move(x1);
            c->x2 = std::move(x2);
        }
        return y;
    }

    // inference against precomputed cross-attention keys/values; works on
    // stacked query batches as long as self-attention stays per-candidate,
    // which the caller guarantees by passing 8-row slices
    MatrixXd forward_with_kv(const ParamStore& ps, const MatrixXd& x, const KVCache& kv) const {
        MatrixXd a = ln1.forward(ps, x);
        MatrixXd x1 = x + self_attn.forward(ps, a, a);
        MatrixXd b = ln2.forward(ps, x1);
        MatrixXd x2 = x1 + cross_attn.forward_with_kv(ps, b, kv);
        MatrixXd d = ln3.forward(ps, x2);
        return x2 + mlp.forward(ps, d);
    }

    // returns dx; adds the memory gradient into dmem
    MatrixXd backward(const ParamStore& ps, GradBuffer& g, const DecBlockCache& c,
                      const MatrixXd& dy, MatrixXd& dmem) const {
        MatrixXd dd = mlp.backward(ps, g, c.mlp, dy);
        MatrixXd dx2 = dy + ln3.backward(ps, g, c.ln3, dd);
        MatrixXd db = cross_attn.backward(ps, g, c.cross_a, dx2, dmem);
        MatrixXd dx1 = dx2 + ln2.backward(ps, g, c.ln2, db);
        MatrixXd dself = MatrixXd::Zero(c.x_in.rows(), c.x_in.cols());
        MatrixXd da = self_attn.backward(ps, g, c.self_a, dx1, dself);
        return dx1 + ln1.backward(ps, g, c.ln1, da + dself);
    }
};

}  // namespace detail

// Activations of one full forward pass, kept for backpropagation. One
// instance per in-flight sample; the network itself stays immutable.
struct DenoiserActs {
    MatrixXd patch_feats;  // S x (patch^2 * channels)
    MatrixXd tp_in;        // 1 x 2 (scaled)
    MatrixXd vel_in;       // 1 x 1 (scaled)
    std::vector<detail::EncBlockCache> enc;
    LayerNormCache ln_static;
    VectorXd k_sin;        // d
    MatrixXd k_tok_raw;    // 1 x d
    LayerNormCache ln_k;
    MatrixXd memory;       // M x d
    MatrixXd tau_in;       // 8 x 2
    std::vector<detail::DecBlockCache> dec;
    LayerNormCache ln_f;
    MatrixXd h_final;      // 8 x d, input of the output head
};

// Conditional denoising network: 8 noisy-waypoint query tokens cross-attend
// to the encoded observation memory and are projected back to (x, y). The
// static part of the memory is independent of the diffusion step, so samplers
// compute it once per frame; the step enters as an extra memory token and as
// an additive term on the queries.
class Denoiser {
public:
    explicit Denoiser(const DenoiserConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        Rng rng = derive_rng(cfg_.rng_seed, "init");
        const int d = cfg_.token_dim;
        const int hidden = d * cfg_.mlp_ratio;
        const int S = cfg_.spatial_tokens();
        const int patch_feat = cfg_.patch * cfg_.patch * kBevChannels;

        patch_proj_ = Linear::create(ps_, "enc.patch", patch_feat, d, rng);
        spatial_pos_ = ps_.add("enc.spatial_pos", S, d);
        init_gaussian(ps_, spatial_pos_, rng, 0.02);
        tp_proj_ = Linear::create(ps_, "enc.tp", 2, d, rng);
        vel_proj_ = Linear::create(ps_, "enc.vel", 1, d, rng);
        step_proj_ = Linear::create(ps_, "enc.step", d, d, rng);
        for (int i = 0; i < cfg_.memory_layers; ++i)
            enc_blocks_.push_back(detail::EncBlock::create(ps_, "enc.block" + std::to_string(i), d,
                                                           cfg_.n_heads, hidden, rng));
        ln_mem_ = LayerNorm::create(ps_, "enc.ln_mem", d);

        query_proj_ = Linear::create(ps_, "dec.query", 2, d, rng);
        query_pos_ = ps_.add("dec.query_pos", kNumWaypoints, d);
        init_gaussian(ps_, query_pos_, rng, 0.02);
        for (int i = 0; i < cfg_.n_layers; ++i)
            dec_blocks_.push_back(detail::DecBlock::create(ps_, "dec.block" + std::to_string(i), d,
                                                           cfg_.n_heads, hidden, rng));
        ln_f_ = LayerNorm::create(ps_, "dec.ln_f", d);
        head_ = Linear::create(ps_, "dec.head", d, 2, rng);
        if (cfg_.zero_init_head) init_constant(ps_, head_.W, 0.0);
    }

    const DenoiserConfig& config() const { return cfg_; }
    ParamStore& params() { return ps_; }
    const ParamStore& params() const { return ps_; }
    std::size_t param_count() const { return ps_.size(); }
    int memory_tokens() const { return cfg_.memory_tokens(); }

    // --- observation encoding ---------------------------------------------

    // k-independent memory rows: spatial patches + target point + velocity
    MatrixXd encode_static_memory(const Observation& obs, DenoiserActs* acts = nullptr) const {
        validate_observation(obs);
        if (obs.grid_size != cfg_.grid_size)
            throw std::invalid_argument("observation grid does not match encoder config");
        const int S = cfg_.spatial_tokens();

        MatrixXd patches = patch_features(obs);
        MatrixXd tokens(S + 2, cfg_.token_dim);
        tokens.topRows(S) = patch_proj_.forward(ps_, patches);
        if (cfg_.spatial_pos_embed) tokens.topRows(S) += ps_.view(spatial_pos_);
        MatrixXd tp_in(1, 2);
        tp_in << obs.target_point.x() * cfg_.traj_scale, obs.target_point.y() * cfg_.traj_scale;
        tokens.row(S) = tp_proj_.forward(ps_, tp_in);
        MatrixXd vel_in(1, 1);
        vel_in << obs.velocity * cfg_.vel_scale;
        tokens.row(S + 1) = vel_proj_.forward(ps_, vel_in);

        if (acts) {
            acts->patch_feats = std::move(patches);
            acts->tp_in = std::move(tp_in);
            acts->vel_in = std::move(vel_in);
            acts->enc.resize(enc_blocks_.size());
        }
        for (std::size_t i = 0; i < enc_blocks_.size(); ++i)
            tokens = enc_blocks_[i].forward(ps_, tokens, acts ? &acts->enc[i] : nullptr);
        return ln_mem_.forward(ps_, tokens, acts ? &acts->ln_static : nullptr);
    }

    // projected step embedding, added to queries and appended to the memory
    MatrixXd step_token_raw(int k, DenoiserActs* acts = nullptr) const {
        VectorXd sine = step_sinusoid(k, cfg_.token_dim);
        MatrixXd raw = step_proj_.forward(ps_, sine.transpose());
        if (acts) {
            acts->k_sin = std::move(sine);
            acts->k_tok_raw = raw;
        }
        return raw;
    }

    // full memory for step k; the step row goes through the same per-row
    // normalization as the static rows
    MatrixXd memory_with_step(const MatrixXd& static_mem, int k, DenoiserActs* acts = nullptr) const {
        MatrixXd raw = step_token_raw(k, acts);
        MatrixXd mem(static_mem.rows() + 1, cfg_.token_dim);
        mem.topRows(static_mem.rows()) = static_mem;
        mem.bottomRows(1) = ln_mem_.forward(ps_, raw, acts ? &acts->ln_k : nullptr);
        if (acts) acts->memory = mem;
        return mem;
    }

    // spec surface: full token memory for (observation, diffusion step)
    MatrixXd encode_observation(const Observation& obs, int k) const {
        return memory_with_step(encode_static_memory(obs), k);
    }

    // --- decoding -----------------------------------------------------------

    // runs the decoder stack against an explicit memory (used by tests and
    // the batched sampler); recomputes the query-side step embedding from k
    TrajMat decode(const TrajMat& tauk, const MatrixXd& memory, int k,
                   DenoiserActs* acts = nullptr) const {
        if (!tauk.allFinite()) throw std::invalid_argument("denoise: non-finite input trajectory");
        MatrixXd k_raw = acts && acts->k_tok_raw.size() > 0 ? acts->k_tok_raw : step_token_raw(k);
        MatrixXd q = query_proj_.forward(ps_, tauk);
        if (cfg_.query_pos_embed) q += ps_.view(query_pos_);
        q.rowwise() += k_raw.row(0);
        if (acts) {
            acts->tau_in = tauk;
            acts->dec.resize(dec_blocks_.size());
        }
        for (std::size_t i = 0; i < dec_blocks_.size(); ++i)
            q = dec_blocks_[i].forward(ps_, q, memory, acts ? &acts->dec[i] : nullptr);
        MatrixXd h = ln_f_.forward(ps_, q, acts ? &acts->ln_f : nullptr);
        if (acts) acts->h_final = h;
        TrajMat out = head_.forward(ps_, h);
        if (!out.allFinite()) throw DivergenceError("denoiser produced non-finite activations");
        return out;
    }

    // predicts the clean (normalized) trajectory for a noisy input
    TrajMat denoise(const TrajMat& tauk, const Observation& obs, int k) const {
        return decode(tauk, memory_with_step(encode_static_memory(obs), k), k);
    }

    // training-path forward: caches every intermediate for backward()
    TrajMat forward_cached(const TrajMat& tauk, const Observation& obs, int k,
                           DenoiserActs& acts) const {
        MatrixXd static_mem = encode_static_memory(obs, &acts);
        MatrixXd mem = memory_with_step(static_mem, k, &acts);
        return decode(tauk, mem, k, &acts);
    }

    // accumulates the parameter gradient of a scalar loss with upstream
    // gradient dpred (8 x 2) into g
    void backward(const DenoiserActs& acts, const TrajMat& dpred, GradBuffer& g) const {
        const int S = cfg_.spatial_tokens();
        MatrixXd dh = head_.backward(ps_, g, acts.h_final, dpred);
        MatrixXd dx = ln_f_.backward(ps_, g, acts.ln_f, dh);
        MatrixXd dmem = MatrixXd::Zero(acts.memory.rows(), acts.memory.cols());
        for (std::size_t i = dec_blocks_.size(); i-- > 0;)
            dx = dec_blocks_[i].backward(ps_, g, acts.dec[i], dx, dmem);

        // queries: waypoint projection + positional embedding + step token
        query_proj_.backward(ps_, g, acts.tau_in, dx);
        if (cfg_.query_pos_embed) g.view(query_pos_) += dx;
        MatrixXd dk_raw = dx.colwise().sum();

        // memory: step row and static rows
        dk_raw += ln_mem_.backward(ps_, g, acts.ln_k, dmem.bottomRows(1));
        step_proj_.backward(ps_, g, acts.k_sin.transpose(), dk_raw);

        MatrixXd denr = ln_mem_.backward(ps_, g, acts.ln_static, dmem.topRows(dmem.rows() - 1));
        for (std::size_t i = enc_blocks_.size(); i-- > 0;)
            denr = enc_blocks_[i].backward(ps_, g, acts.enc[i], denr);

        MatrixXd dspatial = denr.topRows(S);
        patch_proj_.backward(ps_, g, acts.patch_feats, dspatial);
        if (cfg_.spatial_pos_embed) g.view(spatial_pos_) += dspatial;
        tp_proj_.backward(ps_, g, acts.tp_in, denr.row(S));
        vel_proj_.backward(ps_, g, acts.vel_in, denr.row(S + 1));
    }

private:
    MatrixXd patch_features(const Observation& obs) const {
        const int p = cfg_.patch;
        const int per_side = cfg_.grid_size / p;
        MatrixXd feats(per_side * per_side, p * p * kBevChannels);
        for (int pi = 0; pi < per_side; ++pi)
            for (int pj = 0; pj < per_side; ++pj) {
                const int s = pi * per_side + pj;
                for (int ch = 0; ch < kBevChannels; ++ch)
                    for (int r = 0; r < p; ++r)
                        for (int c = 0; c < p; ++c)
                            feats(s, ch * p * p + r * p + c) =
                                obs.grid[static_cast<std::size_t>(ch)](pi * p + r, pj * p + c);
            }
        return feats;
    }

    DenoiserConfig cfg_;
    ParamStore ps_;
    Linear patch_proj_, tp_proj_, vel_proj_, step_proj_;
    TensorRef spatial_pos_;
    std::vector<detail::EncBlock> enc_blocks_;
    LayerNorm ln_mem_;
    Linear query_proj_;
    TensorRef query_pos_;
    std::vector<detail::DecBlock> dec_blocks_;
    LayerNorm ln_f_;
    Linear head_;

    friend class BatchPlanner;
};

}  // namespace diffplan::nn
