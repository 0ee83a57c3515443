#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "diffplan/core/diffusion.hpp"
#include "diffplan/core/schedule.hpp"
#include "diffplan/nn/denoiser.hpp"

namespace diffplan::nn {

struct TrainSample {
    Observation obs;
    TrajMat tau_gt;  // meters, ego frame
};

struct TrainConfig {
    int epochs = 20;
    int batch_size = 32;
    double learning_rate = 3e-4;
    int K_train = 100;
    ScheduleKind schedule_kind = ScheduleKind::cosine;
    Parameterization parameterization = Parameterization::trajectory;
    std::string optimizer = "sgd";  // "sgd" (default) or "adam"
    std::uint64_t seed = 1;
    int jobs = 1;
    double stop_loss = -1.0;  // end training early once the running loss drops below (>0 enables)
    std::string dataset_path;     // provenance echo only
    std::string checkpoint_path;  // provenance echo only

    void validate() const {
        if (epochs <= 0 || batch_size <= 0 || learning_rate <= 0.0 || K_train < 2 || jobs <= 0)
            throw std::invalid_argument("train config: all numeric fields must be positive");
        if (optimizer != "sgd" && optimizer != "adam")
            throw std::invalid_argument("train config: unknown optimizer " + optimizer);
    }
};

struct LossPoint {
    int step;
    double loss;
};

// Adam state kept separately so the default path stays plain SGD.
struct AdamState {
    std::vector<double> m, v;
    std::int64_t t = 0;
};

class Trainer {
public:
    Trainer(Denoiser& net, const TrainConfig& cfg)
        : net_(net), cfg_(cfg), sched_(make_schedule(cfg.K_train, cfg.schedule_kind)) {
        cfg_.validate();
        if (cfg_.optimizer == "adam") {
            adam_.m.assign(net.params().size(), 0.0);
            adam_.v.assign(net.params().size(), 0.0);
        }
    }

    const DiffusionSchedule& schedule() const { return sched_; }
    const std::vector<LossPoint>& loss_curve() const { return curve_; }
    int step() const { return step_; }
    void set_step(int s) { step_ = s; }  // checkpoint resume
    AdamState& adam_state() { return adam_; }

    // one optimization step over a batch of sample indices
    double train_step(const std::vector<TrainSample>& data, const std::vector<int>& batch) {
        const int B = static_cast<int>(batch.size());
        const int jobs = std::min(cfg_.jobs, B);
        std::vector<GradBuffer> grads(static_cast<std::size_t>(jobs), GradBuffer(net_.params()));
        std::vector<double> losses(static_cast<std::size_t>(jobs), 0.0);

        auto worker = [&](int w) {
            for (int bi = w; bi < B; bi += jobs) {
                const TrainSample& s = data[static_cast<std::size_t>(batch[static_cast<std::size_t>(bi)])];
                Rng rng = derive_rng(cfg_.seed, "noise",
                                     {static_cast<std::uint64_t>(step_), static_cast<std::uint64_t>(bi)});
                const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg_.K_train)));
                TrajMat eps;
                for (int i = 0; i < eps.rows(); ++i)
                    for (int j = 0; j < eps.cols(); ++j) eps(i, j) = rng.normal();

                const TrajMat tau0 = s.tau_gt * net_.config().traj_scale;
                const TrajMat tauk = forward_diffuse(tau0, k, eps, sched_);
                const TrajMat target = cfg_.parameterization == Parameterization::trajectory ? tau0 : eps;

                DenoiserActs acts;
                TrajMat pred = net_.forward_cached(tauk, s.obs, k, acts);
                losses[static_cast<std::size_t>(w)] += training_loss(pred, target);
                TrajMat dpred = 2.0 * (pred - target) / (static_cast<double>(pred.size()) * B);
                net_.backward(acts, dpred, grads[static_cast<std::size_t>(w)]);
            }
        };
        if (jobs == 1) {
            worker(0);
        } else {
            std::vector<std::thread> pool;
            for (int w = 0; w < jobs; ++w) pool.emplace_back(worker, w);
            for (auto& t : pool) t.join();
        }
        for (int w = 1; w < jobs; ++w) grads[0].add(grads[static_cast<std::size_t>(w)]);

        const double loss = std::accumulate(losses.begin(), losses.end(), 0.0) / B;
        if (!std::isfinite(loss))
            throw DivergenceError("training diverged at step " + std::to_string(step_) +
                                  " (loss is not finite)");
        apply_update(grads[0]);
        curve_.push_back({step_, loss});
        ++step_;
        return loss;
    }

    // Full run: epochs * ceil(n / batch) steps, each batch drawn uniformly
    // with replacement from the dataset (a 1-sample dataset still fills a
    // whole batch with independent corruption draws).
    void fit(const std::vector<TrainSample>& data,
             const std::function<void(int, double)>& on_step = nullptr) {
        if (data.empty()) throw std::invalid_argument("train: empty dataset");
        const int n = static_cast<int>(data.size());
        const int steps_per_epoch = (n + cfg_.batch_size - 1) / cfg_.batch_size;
        const int total_steps = cfg_.epochs * steps_per_epoch;
        const int first = step_;  // nonzero after a checkpoint resume
        for (int s = first; s < total_steps; ++s) {
            Rng batch_rng = derive_rng(cfg_.seed, "batch", {static_cast<std::uint64_t>(s)});
            std::vector<int> batch(static_cast<std::size_t>(cfg_.batch_size));
            for (auto& idx : batch) idx = static_cast<int>(batch_rng.below(static_cast<std::uint64_t>(n)));
            const double loss = train_step(data, batch);
            if (on_step) on_step(step_ - 1, loss);
            if (cfg_.stop_loss > 0.0 && running_loss() < cfg_.stop_loss) return;
        }
    }

    double running_loss(int window = 20) const {
        if (curve_.empty()) return std::numeric_limits<double>::infinity();
        const int n = std::min<int>(window, static_cast<int>(curve_.size()));
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += curve_[curve_.size() - 1 - static_cast<std::size_t>(i)].loss;
        return s / n;
    }

private:
    void apply_update(GradBuffer& g) {
        auto& theta = net_.params().raw();
        const auto& grad = g.raw();
        if (cfg_.optimizer == "sgd") {
            for (std::size_t i = 0; i < theta.size(); ++i)
                theta[i] -= cfg_.learning_rate * grad[i];
            return;
        }
        // adam
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        adam_.t += 1;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_.t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_.t));
        for (std::size_t i = 0; i < theta.size(); ++i) {
            adam_.m[i] = b1 * adam_.m[i] + (1.0 - b1) * grad[i];
            adam_.v[i] = b2 * adam_.v[i] + (1.0 - b2) * grad[i] * grad[i];
            theta[i] -= cfg_.learning_rate * (adam_.m[i] / c1) / (std::sqrt(adam_.v[i] / c2) + eps);
        }
    }

    Denoiser& net_;
    TrainConfig cfg_;
    DiffusionSchedule sched_;
    std::vector<LossPoint> curve_;
    AdamState adam_;
    int step_ = 0;
};

// spec surface: trains a fresh network on the dataset
inline Denoiser train(const TrainConfig& cfg, const std::vector<TrainSample>& data,
                      const DenoiserConfig& model_cfg) {
    Denoiser net(model_cfg);
    Trainer trainer(net, cfg);
    trainer.fit(data);
    return net;
}

}  // namespace diffplan::nn
