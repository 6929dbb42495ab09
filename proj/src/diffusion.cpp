#include "disc/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace disc {

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
    if (T < 2) throw std::invalid_argument("make_schedule: T must be >= 2, got " + std::to_string(T));
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw std::invalid_argument("make_schedule: need 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.T = T;
    s.beta.assign(T + 1, 0.0);
    s.alpha.assign(T + 1, 1.0);
    s.alpha_bar.assign(T + 1, 1.0);
    for (int t = 1; t <= T; ++t) {
        s.beta[t] = beta_start + (beta_end - beta_start) * double(t - 1) / double(T - 1);
        s.alpha[t] = 1.0 - s.beta[t];
        s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
    }
    return s;
}

DdimPlan make_ddim_plan(int T, int n_steps) {
    if (n_steps < 1 || n_steps > T)
        throw std::invalid_argument("make_ddim_plan: need 1 <= n_steps <= T");
    DdimPlan p;
    p.steps.resize(n_steps);
    for (int i = 0; i < n_steps; ++i) {
        // evenly spaced from the top so the plan always ends at T
        p.steps[i] = T - int(std::int64_t(n_steps - 1 - i) * T / n_steps);
    }
    return p;
}

Tensor forward_noise(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched) {
    if (t < 0 || t > sched.T)
        throw std::out_of_range("forward_noise: t=" + std::to_string(t) + " outside [0," +
                                std::to_string(sched.T) + "]");
    if (!z0.same_shape(eps)) throw std::invalid_argument("forward_noise: z0/eps shape mismatch");
    const double ab = sched.alpha_bar[t];
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    Tensor out = z0;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a * z0.data[i] + b * eps.data[i];
    return out;
}

VarPtr ldm_loss_at(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched,
                   const EpsFnVar& eps_fn) {
    if (t < 1 || t > sched.T) throw std::out_of_range("ldm_loss_at: t outside [1,T]");
    auto z_t = Var::constant(forward_noise(z0, t, eps, sched));
    auto eps_hat = eps_fn(z_t, t);
    if (!eps_hat->value.same_shape(eps))
        throw std::invalid_argument("ldm_loss_at: eps_hat shape mismatch");
    return mean(square(sub(Var::constant(eps), eps_hat)));
}

VarPtr ldm_loss(const Tensor& z0, Rng& rng, const NoiseSchedule& sched, const EpsFnVar& eps_fn) {
    const int t = int(rng.uniform_int(1, sched.T));
    Tensor eps = Tensor::randn(rng, z0.dims);
    return ldm_loss_at(z0, t, eps, sched, eps_fn);
}

Tensor ddim_sample(const Tensor& z_T, const DdimPlan& plan, const NoiseSchedule& sched,
                   const EpsFn& eps_fn, std::vector<Tensor>* trace) {
    if (plan.steps.empty() || plan.steps.back() != sched.T || plan.steps.front() < 1)
        throw std::invalid_argument("ddim_sample: plan must end at T and start >= 1");
    for (std::size_t i = 1; i < plan.steps.size(); ++i)
        if (plan.steps[i] <= plan.steps[i - 1])
            throw std::invalid_argument("ddim_sample: plan not strictly increasing");

    Tensor z = z_T;
    for (int j = int(plan.steps.size()) - 1; j >= 0; --j) {
        const int t = plan.steps[j];
        const int t_prev = j > 0 ? plan.steps[j - 1] : 0;
        const double ab = sched.alpha_bar[t];
        const double ab_prev = sched.alpha_bar[t_prev];
        const Tensor eps_hat = eps_fn(z, t);
        if (!eps_hat.same_shape(z)) throw std::invalid_argument("ddim_sample: eps_hat shape mismatch");
        const double inv_sa = 1.0 / std::sqrt(ab);
        const double s1m = std::sqrt(1.0 - ab);
        const double sa_prev = std::sqrt(ab_prev);
        const double s1m_prev = std::sqrt(1.0 - ab_prev);
        for (std::size_t i = 0; i < z.data.size(); ++i) {
            const double z0_hat = (z.data[i] - s1m * eps_hat.data[i]) * inv_sa;
            z.data[i] = sa_prev * z0_hat + s1m_prev * eps_hat.data[i];
        }
        if (trace) trace->push_back(z);
    }
    z.check_finite("ddim_sample output");
    return z;
}

}  // namespace disc
