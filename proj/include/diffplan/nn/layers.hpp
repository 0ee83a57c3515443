#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "diffplan/nn/param_store.hpp"

// Layer primitives with explicit forward/backward passes. Backward methods
// accumulate parameter gradients into a GradBuffer and return the gradient
// w.r.t. their input; every intermediate needed by a backward pass is kept in
// a per-call cache so passes are reentrant across threads.
namespace diffplan::nn {

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

inline double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    const double pdf = std::exp(-0.5 * x * x) * 0.3989422804014326779;
    return cdf + x * pdf;
}

// ---------------------------------------------------------------------------
// y = x W + b, rows are tokens
struct Linear {
    TensorRef W, b;

    static Linear create(ParamStore& ps, const std::string& name, int in, int out, Rng& rng) {
        Linear l;
        l.W = ps.add(name + ".W", in, out);
        l.b = ps.add(name + ".b", 1, out);
        init_gaussian(ps, l.W, rng, 1.0 / std::sqrt(static_cast<double>(in)));
        return l;
    }

    MatrixXd forward(const ParamStore& ps, const MatrixXd& x) const {
        return (x * ps.view(W)).rowwise() + ps.view(b).row(0);
    }

    MatrixXd backward(const ParamStore& ps, GradBuffer& g, const MatrixXd& x,
                      const MatrixXd& dy) const {
        g.view(W) += x.transpose() * dy;
        g.view(b) += dy.colwise().sum();
        return dy * ps.view(W).transpose();
    }
};

// ---------------------------------------------------------------------------
struct LayerNormCache {
    MatrixXd xhat;
    VectorXd inv_std;
};

struct LayerNorm {
    TensorRef gain, bias;
    static constexpr double kEps = 1e-5;

    static LayerNorm create(ParamStore& ps, const std::string& name, int dim) {
        LayerNorm ln;
        ln.gain = ps.add(name + ".g", 1, dim);
        ln.bias = ps.add(name + ".b", 1, dim);
        init_constant(ps, ln.gain, 1.0);
        return ln;
    }

    MatrixXd forward(const ParamStore& ps, const MatrixXd& x, LayerNormCache* cache = nullptr) const {
        const auto n = static_cast<double>(x.cols());
        VectorXd mean = x.rowwise().mean();
        MatrixXd centered = x.colwise() - mean;
        VectorXd var = centered.array().square().rowwise().sum() / n;
        VectorXd inv_std = (var.array() + kEps).rsqrt();
        MatrixXd xhat = centered.array().colwise() * inv_std.array();
        MatrixXd y = (xhat.array().rowwise() * ps.view(gain).row(0).array()).rowwise() +
                     ps.view(bias).row(0).array();
        if (cache) {
            cache->xhat = std::move(xhat);
            cache->inv_std = std::move(inv_std);
        }
        return y;
    }

    MatrixXd backward(const ParamStore& ps, GradBuffer& g, const LayerNormCache& c,
                      const MatrixXd& dy) const {
        const auto n = static_cast<double>(dy.cols());
        g.view(gain) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
        g.view(bias) += dy.colwise().sum();
        MatrixXd dxhat = dy.array().rowwise() * ps.view(gain).row(0).array();
        VectorXd m1 = dxhat.rowwise().mean();
        VectorXd m2 = (dxhat.array() * c.xhat.array()).rowwise().sum() / n;
        MatrixXd dx = dxhat;
        dx.colwise() -= m1;
        dx.array() -= c.xhat.array().colwise() * m2.array();
        dx.array().colwise() *= c.inv_std.array();
        return dx;
    }
};

// ---------------------------------------------------------------------------
struct AttentionCache {
    MatrixXd xq, xkv;            // inputs (token rows)
    MatrixXd Q, K, V;            // projected
    std::vector<MatrixXd> A;     // per-head softmax weights
    MatrixXd mixed;              // concatenated head outputs, pre out-proj
};

// Keys/values of a fixed memory, shared across many query batches.
struct KVCache {
    MatrixXd K, V;
};

struct MultiHeadAttention {
    int heads = 1;
    int head_dim = 0;
    Linear q, k, v, out;

    static MultiHeadAttention create(ParamStore& ps, const std::string& name, int dim, int heads,
                                     Rng& rng) {
        if (dim % heads != 0) throw std::invalid_argument("token_dim must be divisible by n_heads");
        MultiHeadAttention a;
        a.heads = heads;
        a.head_dim = dim / heads;
        a.q = Linear::create(ps, name + ".q", dim, dim, rng);
        a.k = Linear::create(ps, name + ".k", dim, dim, rng);
        a.v = Linear::create(ps, name + ".v", dim, dim, rng);
        a.out = Linear::create(ps, name + ".o", dim, dim, rng);
        return a;
    }

    KVCache project_kv(const ParamStore& ps, const MatrixXd& xkv) const {
        return {k.forward(ps, xkv), v.forward(ps, xkv)};
    }

    // full forward, caching everything the backward pass needs
    MatrixXd forward(const ParamStore& ps, const MatrixXd& xq, const MatrixXd& xkv,
                     AttentionCache* cache = nullptr) const {
        MatrixXd Q = q.forward(ps, xq);
        KVCache kv = project_kv(ps, xkv);
        MatrixXd mixed(xq.rows(), Q.cols());
        std::vector<MatrixXd> weights(static_cast<std::size_t>(heads));
        const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
        for (int h = 0; h < heads; ++h) {
            auto Qh = Q.middleCols(h * head_dim, head_dim);
            auto Kh = kv.K.middleCols(h * head_dim, head_dim);
            auto Vh = kv.V.middleCols(h * head_dim, head_dim);
            MatrixXd S = (Qh * Kh.transpose()) * scale;
            softmax_rows(S);
            mixed.middleCols(h * head_dim, head_dim) = S * Vh;
            weights[static_cast<std::size_t>(h)] = std::move(S);
        }
        MatrixXd y = out.forward(ps, mixed);
        if (cache) {
            cache->xq = xq;
            cache->xkv = xkv;
            cache->Q = std::move(Q);
            cache->K = std::move(kv.K);
            cache->V = std::move(kv.V);
            cache->A = std::move(weights);
            cache->mixed = std::move(mixed);
        }
        return y;
    }

    // inference-only path against precomputed keys/values
    MatrixXd forward_with_kv(const ParamStore& ps, const MatrixXd& xq, const KVCache& kv) const {
        MatrixXd Q = q.forward(ps, xq);
        MatrixXd mixed(xq.rows(), Q.cols());
        const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
        for (int h = 0; h < heads; ++h) {
            auto Qh = Q.middleCols(h * head_dim, head_dim);
            auto Kh = kv.K.middleCols(h * head_dim, head_dim);
            auto Vh = kv.V.middleCols(h * head_dim, head_dim);
            MatrixXd S = (Qh * Kh.transpose()) * scale;
            softmax_rows(S);
            mixed.middleCols(h * head_dim, head_dim).noalias() = S * Vh;
        }
        return out.forward(ps, mixed);
    }

    // returns d(xq); adds d(xkv) into dxkv
    MatrixXd backward(const ParamStore& ps, GradBuffer& g, const AttentionCache& c,
                      const MatrixXd& dy, MatrixXd& dxkv) const {
        MatrixXd dmixed = out.backward(ps, g, c.mixed, dy);
        MatrixXd dQ = MatrixXd::Zero(c.Q.rows(), c.Q.cols());
        MatrixXd dK = MatrixXd::Zero(c.K.rows(), c.K.cols());
        MatrixXd dV = MatrixXd::Zero(c.V.rows(), c.V.cols());
        const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
        for (int h = 0; h < heads; ++h) {
            const MatrixXd& A = c.A[static_cast<std::size_t>(h)];
            auto Kh = c.K.middleCols(h * head_dim, head_dim);
            auto Qh = c.Q.middleCols(h * head_dim, head_dim);
            auto Vh = c.V.middleCols(h * head_dim, head_dim);
            MatrixXd dOh = dmixed.middleCols(h * head_dim, head_dim);
            MatrixXd dA = dOh * Vh.transpose();
            dV.middleCols(h * head_dim, head_dim) += A.transpose() * dOh;
            // softmax backward: dS = A .* (dA - rowsum(dA .* A))
            VectorXd rs = (dA.array() * A.array()).rowwise().sum();
            MatrixXd dS = A.array() * (dA.colwise() - rs).array();
            dQ.middleCols(h * head_dim, head_dim) += dS * Kh * scale;
            dK.middleCols(h * head_dim, head_dim) += dS.transpose() * Qh * scale;
        }
        MatrixXd dxq = q.backward(ps, g, c.xq, dQ);
        dxkv += k.backward(ps, g, c.xkv, dK);
        dxkv += v.backward(ps, g, c.xkv, dV);
        return dxq;
    }

    static void softmax_rows(MatrixXd& s) {
        for (int i = 0; i < s.rows(); ++i) {
            auto row = s.row(i);
            row = (row.array() - row.maxCoeff()).exp();
            row /= row.sum();
        }
    }
};

// ---------------------------------------------------------------------------
struct MlpCache {
    MatrixXd x, pre, act;
};

struct Mlp {
    Linear fc1, fc2;

    static Mlp create(ParamStore& ps, const std::string& name, int dim, int hidden, Rng& rng) {
        Mlp m;
        m.fc1 = Linear::create(ps, name + ".fc1", dim, hidden, rng);
        m.fc2 = Linear::create(ps, name + ".fc2", hidden, dim, rng);
        return m;
    }

    MatrixXd forward(const ParamStore& ps, const MatrixXd& x, MlpCache* cache = nullptr) const {
        MatrixXd pre = fc1.forward(ps, x);
        MatrixXd act = pre.unaryExpr([](double v) { return gelu(v); });
        MatrixXd y = fc2.forward(ps, act);
        if (cache) {
            cache->x = x;
            cache->pre = std::move(pre);
            cache->act = std::move(act);
        }
        return y;
    }

    MatrixXd backward(const ParamStore& ps, GradBuffer& g, const MlpCache& c,
                      const MatrixXd& dy) const {
        MatrixXd dact = fc2.backward(ps, g, c.act, dy);
        MatrixXd dpre = dact.array() * c.pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
        return fc1.backward(ps, g, c.x, dpre);
    }
};

}  // namespace diffplan::nn
