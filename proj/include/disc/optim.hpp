#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "disc/tape.hpp"

namespace disc {

// Named trainable leaves. Ordered map so iteration (Adam, checkpoints,
// gradient reductions) is deterministic.
struct ParamStore {
    std::map<std::string, VarPtr> params;

    VarPtr add(const std::string& name, Tensor init);
    VarPtr get(const std::string& name) const;
    bool has(const std::string& name) const { return params.count(name) != 0; }
    void zero_grads();
    std::size_t total_size() const;
    std::vector<std::pair<std::string, VarPtr>> items() const;
};

// Standard Adam with bias correction on one tensor. `t` is the 1-based step.
void adam_step(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, std::int64_t t, double lr,
               double beta1, double beta2, double eps);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    // One update over every param in the store, using the grads accumulated
    // on the leaves (missing grad = zero). Grads are cleared afterwards.
    void step(ParamStore& store);

    std::int64_t steps_taken() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::map<std::string, std::pair<Tensor, Tensor>> moments_;
};

struct GradCheckEntry {
    std::string name;
    std::size_t index = 0;
    double tape_grad = 0.0;
    double fd_grad = 0.0;
    double rel_err = 0.0;
};

struct GradCheckReport {
    bool pass = true;
    double max_rel_err = 0.0;
    std::size_t coords_checked = 0;
    std::vector<GradCheckEntry> entries;  // one per checked coordinate
    GradCheckEntry worst;
};

// Central finite differences against the tape gradient. `f` rebuilds the loss
// from the current parameter values and must be deterministic (verified by a
// double evaluation). `max_coords_per_param` = 0 checks every coordinate;
// otherwise a deterministic subsample is used.
GradCheckReport grad_check(const std::function<VarPtr()>& f,
                           const std::vector<std::pair<std::string, VarPtr>>& params, double tol,
                           double h = 1e-5, std::size_t max_coords_per_param = 0,
                           std::uint64_t subsample_seed = 0);

}  // namespace disc
