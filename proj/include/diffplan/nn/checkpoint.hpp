#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffplan/core/schedule.hpp"
#include "diffplan/nn/train.hpp"

// Checkpoint container: "DPCK" magic, format version, JSON metadata echo
// (model + train config, parameterization, step counter), the diffusion
// schedule, and the flat parameter arrays with their named shapes. All
// multi-byte fields little-endian host order; payload doubles are raw.
namespace diffplan::nn {

using json = nlohmann::json;

inline void to_json(json& j, const DenoiserConfig& c) {
    j = json{{"grid_size", c.grid_size},
             {"patch", c.patch},
             {"token_dim", c.token_dim},
             {"n_heads", c.n_heads},
             {"n_layers", c.n_layers},
             {"memory_layers", c.memory_layers},
             {"mlp_ratio", c.mlp_ratio},
             {"K_train", c.K_train},
             {"traj_scale", c.traj_scale},
             {"vel_scale", c.vel_scale},
             {"spatial_pos_embed", c.spatial_pos_embed},
             {"query_pos_embed", c.query_pos_embed},
             {"zero_init_head", c.zero_init_head},
             {"rng_seed", c.rng_seed}};
}

inline void from_json(const json& j, DenoiserConfig& c) {
    j.at("grid_size").get_to(c.grid_size);
    j.at("patch").get_to(c.patch);
    j.at("token_dim").get_to(c.token_dim);
    j.at("n_heads").get_to(c.n_heads);
    j.at("n_layers").get_to(c.n_layers);
    j.at("memory_layers").get_to(c.memory_layers);
    j.at("mlp_ratio").get_to(c.mlp_ratio);
    j.at("K_train").get_to(c.K_train);
    j.at("traj_scale").get_to(c.traj_scale);
    j.at("vel_scale").get_to(c.vel_scale);
    j.at("spatial_pos_embed").get_to(c.spatial_pos_embed);
    j.at("query_pos_embed").get_to(c.query_pos_embed);
    j.at("zero_init_head").get_to(c.zero_init_head);
    j.at("rng_seed").get_to(c.rng_seed);
}

inline void to_json(json& j, const TrainConfig& c) {
    j = json{{"epochs", c.epochs},
             {"batch_size", c.batch_size},
             {"learning_rate", c.learning_rate},
             {"K_train", c.K_train},
             {"schedule_kind", to_string(c.schedule_kind)},
             {"parameterization", to_string(c.parameterization)},
             {"optimizer", c.optimizer},
             {"seed", c.seed},
             {"jobs", c.jobs},
             {"stop_loss", c.stop_loss},
             {"dataset_path", c.dataset_path},
             {"checkpoint_path", c.checkpoint_path}};
}

inline void from_json(const json& j, TrainConfig& c) {
    j.at("epochs").get_to(c.epochs);
    j.at("batch_size").get_to(c.batch_size);
    j.at("learning_rate").get_to(c.learning_rate);
    j.at("K_train").get_to(c.K_train);
    c.schedule_kind = schedule_kind_from_string(j.at("schedule_kind").get<std::string>());
    c.parameterization = parameterization_from_string(j.at("parameterization").get<std::string>());
    j.at("optimizer").get_to(c.optimizer);
    j.at("seed").get_to(c.seed);
    j.at("jobs").get_to(c.jobs);
    j.at("stop_loss").get_to(c.stop_loss);
    j.at("dataset_path").get_to(c.dataset_path);
    j.at("checkpoint_path").get_to(c.checkpoint_path);
}

namespace detail {
template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}
inline void write_blob(std::ostream& out, const void* data, std::size_t bytes) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}
}  // namespace detail

inline constexpr char kCheckpointMagic[4] = {'D', 'P', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    DenoiserConfig model;
    TrainConfig train;
    DiffusionSchedule schedule;
    int step = 0;
    json extra;  // free-form provenance echoed by the CLI
    std::vector<std::pair<std::string, std::vector<double>>> tensors;  // name -> flat values
    AdamState adam;
    bool has_adam = false;
};

inline void save_checkpoint(const std::string& path, const Denoiser& net, const TrainConfig& tc,
                            const DiffusionSchedule& sched, int step, const AdamState* adam = nullptr,
                            const json& extra = json::object()) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    out.write(kCheckpointMagic, 4);
    detail::write_pod(out, kCheckpointVersion);

    json meta;
    meta["model"] = net.config();
    meta["train"] = tc;
    meta["step"] = step;
    meta["param_count"] = net.param_count();
    meta["extra"] = extra;
    const std::string meta_str = meta.dump();
    detail::write_pod(out, static_cast<std::uint64_t>(meta_str.size()));
    detail::write_blob(out, meta_str.data(), meta_str.size());

    detail::write_pod(out, static_cast<std::uint32_t>(sched.K_train));
    detail::write_pod(out, static_cast<std::uint32_t>(sched.kind));
    detail::write_blob(out, sched.alpha_bar.data(), sched.alpha_bar.size() * sizeof(double));

    const auto& ps = net.params();
    detail::write_pod(out, static_cast<std::uint32_t>(ps.entries().size()));
    for (const auto& e : ps.entries()) {
        detail::write_pod(out, static_cast<std::uint32_t>(e.name.size()));
        detail::write_blob(out, e.name.data(), e.name.size());
        detail::write_pod(out, static_cast<std::uint32_t>(e.rows));
        detail::write_pod(out, static_cast<std::uint32_t>(e.cols));
        detail::write_blob(out, ps.raw().data() + e.offset,
                           static_cast<std::size_t>(e.rows) * static_cast<std::size_t>(e.cols) * sizeof(double));
    }

    const std::uint8_t has_adam = adam != nullptr ? 1 : 0;
    detail::write_pod(out, has_adam);
    if (adam) {
        detail::write_pod(out, static_cast<std::int64_t>(adam->t));
        detail::write_pod(out, static_cast<std::uint64_t>(adam->m.size()));
        detail::write_blob(out, adam->m.data(), adam->m.size() * sizeof(double));
        detail::write_blob(out, adam->v.data(), adam->v.size() * sizeof(double));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint_meta(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic");
    const auto version = detail::read_pod<std::uint32_t>(in);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

    const auto meta_len = detail::read_pod<std::uint64_t>(in);
    std::string meta_str(meta_len, '\0');
    in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
    json meta = json::parse(meta_str);

    Checkpoint ck;
    ck.model = meta.at("model").get<DenoiserConfig>();
    ck.train = meta.at("train").get<TrainConfig>();
    ck.step = meta.at("step").get<int>();
    ck.extra = meta.value("extra", json::object());

    const auto K = detail::read_pod<std::uint32_t>(in);
    const auto kind = detail::read_pod<std::uint32_t>(in);
    std::vector<double> ab(K + 1);
    in.read(reinterpret_cast<char*>(ab.data()), static_cast<std::streamsize>(ab.size() * sizeof(double)));
    ck.schedule = make_schedule(static_cast<int>(K), static_cast<ScheduleKind>(kind));
    ck.schedule.alpha_bar = std::move(ab);  // stored values win over the reconstruction

    const auto n_tensors = detail::read_pod<std::uint32_t>(in);
    ck.tensors.resize(n_tensors);
    for (auto& [name, values] : ck.tensors) {
        const auto name_len = detail::read_pod<std::uint32_t>(in);
        name.resize(name_len);
        in.read(name.data(), name_len);
        const auto rows = detail::read_pod<std::uint32_t>(in);
        const auto cols = detail::read_pod<std::uint32_t>(in);
        values.resize(static_cast<std::size_t>(rows) * cols);
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(values.size() * sizeof(double)));
    }

    const auto has_adam = detail::read_pod<std::uint8_t>(in);
    if (has_adam) {
        ck.has_adam = true;
        ck.adam.t = detail::read_pod<std::int64_t>(in);
        const auto n = detail::read_pod<std::uint64_t>(in);
        ck.adam.m.resize(n);
        ck.adam.v.resize(n);
        in.read(reinterpret_cast<char*>(ck.adam.m.data()), static_cast<std::streamsize>(n * sizeof(double)));
        in.read(reinterpret_cast<char*>(ck.adam.v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    }
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    return load_checkpoint_meta(in);
}

// rebuilds the network from a loaded checkpoint
inline Denoiser restore_denoiser(const Checkpoint& ck) {
    Denoiser net(ck.model);
    auto& ps = net.params();
    if (ck.tensors.size() != ps.entries().size())
        throw std::runtime_error("checkpoint: tensor count mismatch");
    for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
        const auto& e = ps.entries()[i];
        const auto& [name, values] = ck.tensors[i];
        if (name != e.name || values.size() != static_cast<std::size_t>(e.rows) * e.cols)
            throw std::runtime_error("checkpoint: tensor layout mismatch at " + name);
        std::copy(values.begin(), values.end(), ps.raw().begin() + static_cast<std::ptrdiff_t>(e.offset));
    }
    return net;
}

inline void write_loss_curve_csv(const std::string& path, const std::vector<LossPoint>& curve) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open loss curve file " + path);
    out << "step,loss\n";
    char buf[64];
    for (const auto& p : curve) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g\n", p.step, p.loss);
        out << buf;
    }
}

}  // namespace diffplan::nn
