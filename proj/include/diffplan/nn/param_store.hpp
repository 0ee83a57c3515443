#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffplan/core/rng.hpp"

namespace diffplan::nn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Handle into a ParamStore. Parameters live in one flat buffer so that the
// optimizer, the finite-difference checker and the checkpoint writer can all
// treat the model as a single vector.
struct TensorRef {
    int index = -1;
    int rows = 0;
    int cols = 0;
};

class ParamStore {
public:
    struct Entry {
        std::string name;
        std::size_t offset;
        int rows, cols;
    };

    TensorRef add(const std::string& name, int rows, int cols) {
        for (const auto& e : entries_)
            if (e.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
        Entry e{name, values_.size(), rows, cols};
        entries_.push_back(e);
        values_.resize(values_.size() + static_cast<std::size_t>(rows) * cols, 0.0);
        return TensorRef{static_cast<int>(entries_.size()) - 1, rows, cols};
    }

    Eigen::Map<MatrixXd> view(TensorRef r) {
        const Entry& e = entries_.at(static_cast<std::size_t>(r.index));
        return {values_.data() + e.offset, e.rows, e.cols};
    }
    Eigen::Map<const MatrixXd> view(TensorRef r) const {
        const Entry& e = entries_.at(static_cast<std::size_t>(r.index));
        return {values_.data() + e.offset, e.rows, e.cols};
    }

    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<double>& raw() { return values_; }
    const std::vector<double>& raw() const { return values_; }
    std::size_t size() const { return values_.size(); }

private:
    std::vector<Entry> entries_;
    std::vector<double> values_;
};

// Gradient buffer with the same layout as a ParamStore. Threads accumulate
// into private buffers which are then summed in a fixed order.
class GradBuffer {
public:
    explicit GradBuffer(const ParamStore& ps) : ps_(&ps), grads_(ps.size(), 0.0) {}

    void zero() { std::fill(grads_.begin(), grads_.end(), 0.0); }

    Eigen::Map<MatrixXd> view(TensorRef r) {
        const auto& e = ps_->entries().at(static_cast<std::size_t>(r.index));
        return {grads_.data() + e.offset, e.rows, e.cols};
    }

    void add(const GradBuffer& other) {
        for (std::size_t i = 0; i < grads_.size(); ++i) grads_[i] += other.grads_[i];
    }
    void scale(double s) {
        for (double& g : grads_) g *= s;
    }

    std::vector<double>& raw() { return grads_; }
    const std::vector<double>& raw() const { return grads_; }

private:
    const ParamStore* ps_;
    std::vector<double> grads_;
};

inline void init_gaussian(ParamStore& ps, TensorRef r, Rng& rng, double std_dev) {
    auto m = ps.view(r);
    for (int j = 0; j < m.cols(); ++j)
        for (int i = 0; i < m.rows(); ++i) m(i, j) = std_dev * rng.normal();
}

inline void init_constant(ParamStore& ps, TensorRef r, double v) { ps.view(r).setConstant(v); }

}  // namespace diffplan::nn
