#pragma once

#include <functional>
#include <vector>

#include "disc/rng.hpp"
#include "disc/tape.hpp"
#include "disc/tensor.hpp"

namespace disc {

// Linear-ramp variance schedule. Vectors are 1-based: index 0 is the t=0
// extension (beta 0, alpha_bar 1) so formulas read like the math.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;       // [0..T], beta[0] = 0
    std::vector<double> alpha;      // alpha[t] = 1 - beta[t]
    std::vector<double> alpha_bar;  // alpha_bar[t] = alpha_bar[t-1] * alpha[t]
};

NoiseSchedule make_schedule(int T, double beta_start, double beta_end);

// Strictly increasing timestep subsequence ending at T; eta fixed at 0, the
// sampler is fully deterministic.
struct DdimPlan {
    std::vector<int> steps;  // ascending, front >= 1, back == T
};

DdimPlan make_ddim_plan(int T, int n_steps);

// z_t = sqrt(ab_t) z0 + sqrt(1-ab_t) eps; t=0 returns z0 exactly.
Tensor forward_noise(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched);

// Noise predictors. The tape form is used inside training losses; the plain
// form drives sampling. Conditioning is baked into the closure by the caller.
using EpsFnVar = std::function<VarPtr(const VarPtr& z_t, int t)>;
using EpsFn = std::function<Tensor(const Tensor& z_t, int t)>;

// eps-prediction objective at a fixed draw (t, eps): mean over elements of
// (eps - eps_hat(z_t, t))^2 with z_t built from z0. z0 enters as a constant.
VarPtr ldm_loss_at(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched,
                   const EpsFnVar& eps_fn);

// Draws t ~ U{1..T} and eps ~ N(0,I) from rng, then defers to ldm_loss_at.
VarPtr ldm_loss(const Tensor& z0, Rng& rng, const NoiseSchedule& sched, const EpsFnVar& eps_fn);

// Deterministic DDIM (eta = 0). Each step:
//   z0_hat = (z_t - sqrt(1-ab_t) eps_hat) / sqrt(ab_t)
//   z_prev = sqrt(ab_prev) z0_hat + sqrt(1-ab_prev) eps_hat
// with ab_0 = 1, so the final step returns z0_hat itself. When `trace` is
// given it receives z after every update (one entry per plan step, last ==
// return value).
Tensor ddim_sample(const Tensor& z_T, const DdimPlan& plan, const NoiseSchedule& sched,
                   const EpsFn& eps_fn, std::vector<Tensor>* trace = nullptr);

}  // namespace disc
