#include "disc/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "disc/rng.hpp"

namespace disc {

VarPtr ParamStore::add(const std::string& name, Tensor init) {
    if (params.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    auto v = Var::leaf(std::move(init), true);
    params[name] = v;
    return v;
}

VarPtr ParamStore::get(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
}

void ParamStore::zero_grads() {
    for (auto& [name, p] : params) p->zero_grad();
}

std::size_t ParamStore::total_size() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params) n += p->value.numel();
    return n;
}

std::vector<std::pair<std::string, VarPtr>> ParamStore::items() const {
    return {params.begin(), params.end()};
}

void adam_step(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, std::int64_t t, double lr,
               double beta1, double beta2, double eps) {
    if (!param.same_shape(grad) || !param.same_shape(m) || !param.same_shape(v)) {
        throw std::invalid_argument("adam_step: shape mismatch");
    }
    if (t < 1) throw std::invalid_argument("adam_step: step count must be >= 1");
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < param.numel(); ++i) {
        const double g = grad.data[i];
        m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * g;
        v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * g * g;
        const double mhat = m.data[i] / bc1;
        const double vhat = v.data[i] / bc2;
        param.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

void Adam::step(ParamStore& store) {
    ++t_;
    for (auto& [name, p] : store.params) {
        auto it = moments_.find(name);
        if (it == moments_.end()) {
            it = moments_.emplace(name, std::make_pair(Tensor::zeros(p->value.dims), Tensor::zeros(p->value.dims)))
                     .first;
        }
        if (p->grad.data.empty()) {
            Tensor zero = Tensor::zeros(p->value.dims);
            adam_step(p->value, zero, it->second.first, it->second.second, t_, cfg_.lr, cfg_.beta1,
                      cfg_.beta2, cfg_.eps);
        } else {
            adam_step(p->value, p->grad, it->second.first, it->second.second, t_, cfg_.lr,
                      cfg_.beta1, cfg_.beta2, cfg_.eps);
        }
        p->zero_grad();
    }
}

GradCheckReport grad_check(const std::function<VarPtr()>& f,
                           const std::vector<std::pair<std::string, VarPtr>>& params, double tol,
                           double h, std::size_t max_coords_per_param, std::uint64_t subsample_seed) {
    GradCheckReport report;
    {
        NoGradGuard ng;
        const double v1 = f()->scalar();
        const double v2 = f()->scalar();
        if (v1 != v2) throw std::runtime_error("grad_check: f is not deterministic");
    }
    if (params.empty()) return report;  // vacuous pass

    for (auto& [name, p] : params) p->zero_grad();
    VarPtr loss = f();
    backward(loss);

    std::vector<std::vector<double>> tape_grads;
    tape_grads.reserve(params.size());
    for (auto& [name, p] : params) {
        tape_grads.push_back(p->grad.data.empty()
                                 ? std::vector<double>(p->value.numel(), 0.0)
                                 : std::vector<double>(p->grad.data.begin(), p->grad.data.end()));
    }

    NoGradGuard ng;
    Rng pick(subsample_seed);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& [name, p] = params[pi];
        const std::size_t n = p->value.numel();
        std::vector<std::size_t> coords;
        if (max_coords_per_param == 0 || n <= max_coords_per_param) {
            coords.resize(n);
            for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            Rng sub = pick.substream(name);
            for (std::size_t i = 0; i < max_coords_per_param; ++i) {
                coords.push_back(static_cast<std::size_t>(sub.uniform_int(0, static_cast<std::int64_t>(n) - 1)));
            }
        }
        for (std::size_t ci : coords) {
            const double orig = p->value.data[ci];
            p->value.data[ci] = orig + h;
            const double fp = f()->scalar();
            p->value.data[ci] = orig - h;
            const double fm = f()->scalar();
            p->value.data[ci] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double tg = tape_grads[pi][ci];
            const double denom = std::max({std::fabs(tg), std::fabs(fd), 1.0});
            const double rel = std::fabs(tg - fd) / denom;
            GradCheckEntry e{name, ci, tg, fd, rel};
            report.entries.push_back(e);
            ++report.coords_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst = e;
            }
        }
    }
    report.pass = report.max_rel_err <= tol;
    return report;
}

}  // namespace disc
