#include "disc/pipeline.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace disc {

// ---------------------------------------------------------------------------
// CondModel
// ---------------------------------------------------------------------------

void CondModel::init(Rng& rng) {
    if (enc.cfg.d != den.cfg.cond_ch)
        throw std::invalid_argument("cond model: mask embedding width must match cond_ch");
    enc.init(rng);
    den.init(rng);
}

ParamStore CondModel::all_params() const {
    ParamStore u;
    for (const auto& kv : enc.params.params) u.params.insert(kv);
    for (const auto& kv : den.params.params) u.params.insert(kv);
    if (u.params.size() != enc.params.params.size() + den.params.params.size())
        throw std::logic_error("cond model: parameter name collision");
    return u;
}

CondEpsFnVar CondModel::eps_var() const {
    return [this](const VarPtr& z_t, int t, const LabelMask& m) {
        return den.forward(z_t, t, enc.forward(m));
    };
}

CondEpsFn CondModel::eps_fn() const {
    return [this](const Tensor& z_t, int t, const LabelMask& m) {
        NoGradGuard ng;
        return den.forward(Var::constant(z_t), t, enc.forward(m))->value;
    };
}

// ---------------------------------------------------------------------------
// Checkpoint glue
// ---------------------------------------------------------------------------

Checkpoint params_to_checkpoint(const ParamStore& store, const std::string& tag,
                                const std::string& config_hash, const NoiseSchedule* sched,
                                std::uint64_t rng_key, std::uint64_t rng_counter) {
    Checkpoint ckpt;
    ckpt.tag = tag;
    ckpt.config_hash = config_hash;
    if (sched) {
        ckpt.schedule_t = sched->T;
        ckpt.beta_start = sched->beta[1];
        ckpt.beta_end = sched->beta[std::size_t(sched->T)];
    }
    ckpt.rng_key = rng_key;
    ckpt.rng_counter = rng_counter;
    for (const auto& [name, var] : store.params) ckpt.tensors.emplace(name, var->value);
    return ckpt;
}

void load_params(ParamStore& store, const Checkpoint& ckpt) {
    if (ckpt.tensors.size() != store.params.size())
        throw std::runtime_error("load_params: tensor count mismatch (" +
                                 std::to_string(ckpt.tensors.size()) + " in checkpoint, " +
                                 std::to_string(store.params.size()) + " in model)");
    for (auto& [name, var] : store.params) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end())
            throw std::runtime_error("load_params: checkpoint missing tensor " + name);
        if (it->second.dims != var->value.dims)
            throw std::runtime_error("load_params: shape mismatch for " + name);
        var->value.data = it->second.data;
    }
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

namespace {

void check_fit(std::size_t n, const FitConfig& cfg, const char* who) {
    if (n == 0) throw std::invalid_argument(std::string(who) + ": empty training set");
    if (cfg.steps < 1 || cfg.batch < 1)
        throw std::invalid_argument(std::string(who) + ": bad steps/batch");
}

std::vector<int> draw_indices(Rng& rng, std::size_t n, int batch) {
    std::vector<int> out(static_cast<std::size_t>(batch));
    for (int& i : out) i = int(rng.uniform_int(0, std::int64_t(n) - 1));
    return out;
}

}  // namespace

std::vector<double> train_ae(Autoencoder& ae, const std::vector<Tensor>& tiles,
                             const FitConfig& cfg) {
    check_fit(tiles.size(), cfg, "train_ae");
    Rng root(cfg.seed);
    Rng stream = root.substream("ae");
    Adam opt(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    std::vector<double> losses;
    losses.reserve(std::size_t(cfg.steps));
    for (int step = 0; step < cfg.steps; ++step) {
        VarPtr acc;
        for (int i : draw_indices(stream, tiles.size(), cfg.batch)) {
            auto x = Var::constant(tiles[std::size_t(i)]);
            auto li = mean(square(sub(ae.decode(ae.encode(x)), x)));
            acc = acc ? add(acc, li) : li;
        }
        auto loss = affine(acc, 1.0 / double(cfg.batch));
        ae.params.zero_grads();
        backward(loss);
        opt.step(ae.params);
        losses.push_back(loss->scalar());
    }
    return losses;
}

std::vector<double> train_ldm(CondModel& model, const std::vector<LdmItem>& items,
                              const NoiseSchedule& sched, const FitConfig& cfg) {
    check_fit(items.size(), cfg, "train_ldm");
    Rng root(cfg.seed);
    Rng stream = root.substream("ldm");
    ParamStore params = model.all_params();
    Adam opt(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    auto eps_fn = model.eps_var();
    std::vector<double> losses;
    losses.reserve(std::size_t(cfg.steps));
    for (int step = 0; step < cfg.steps; ++step) {
        auto ids = draw_indices(stream, items.size(), cfg.batch);
        VarPtr acc;
        for (int i : ids) {
            const LdmItem& it = items[std::size_t(i)];
            auto li = ldm_loss(it.z0, stream, sched,
                               [&](const VarPtr& z_t, int t) { return eps_fn(z_t, t, it.m); });
            acc = acc ? add(acc, li) : li;
        }
        auto loss = affine(acc, 1.0 / double(cfg.batch));
        params.zero_grads();
        backward(loss);
        opt.step(params);
        losses.push_back(loss->scalar());
    }
    return losses;
}

std::vector<double> distill_train(CondModel& model, const std::vector<DistillSample>& set,
                                  const std::vector<LdmItem>& real_items,
                                  const std::vector<FreqShapeMask>& shapes,
                                  const NoiseSchedule& sched, const DistillFitConfig& cfg) {
    check_fit(set.size(), cfg, "distill_train");
    if (shapes.empty()) throw std::invalid_argument("distill_train: empty shape pool");
    if (cfg.cotrain && real_items.empty())
        throw std::invalid_argument("distill_train: cotrain needs real items");
    Rng root(cfg.seed);
    Rng stream = root.substream("distill-train");
    ParamStore params = model.all_params();
    Adam opt(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    auto eps_fn = model.eps_var();
    const std::vector<double> uniform(std::size_t(kNumLabels), 1.0);
    std::vector<double> losses;
    losses.reserve(std::size_t(cfg.steps));
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<DistillSample> batch;
        std::vector<LabelMask> masks;
        for (int i : draw_indices(stream, set.size(), cfg.batch)) {
            batch.push_back(set[std::size_t(i)]);
            const auto& shape =
                shapes[std::size_t(stream.uniform_int(0, std::int64_t(shapes.size()) - 1))];
            masks.push_back(assign_labels(shape, uniform, stream));
        }
        std::vector<LdmItem> real_batch;
        if (cfg.cotrain)
            for (int i : draw_indices(stream, real_items.size(), cfg.batch))
                real_batch.push_back(real_items[std::size_t(i)]);
        losses.push_back(cotrain_step(real_batch, batch, masks, stream, sched, eps_fn, params, opt));
    }
    return losses;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

Tensor draw_z_T(std::uint64_t seed, const std::vector<int>& latent_dims) {
    Rng rng(seed);
    return Tensor::randn(rng, latent_dims);
}

Tensor generate_tile(const CondModel& model, const Autoencoder& ae, const LabelMask& m,
                     std::uint64_t seed, const DdimPlan& plan, const NoiseSchedule& sched,
                     const std::vector<int>& latent_dims) {
    NoGradGuard ng;
    auto eps = model.eps_fn();
    Tensor z0 = ddim_sample(draw_z_T(seed, latent_dims), plan, sched,
                            [&](const Tensor& z_t, int t) { return eps(z_t, t, m); });
    return ae.decode(Var::constant(z0))->value;
}

Tensor generate_tile_sc(const CondModel& model, const Autoencoder& ae, const LabelMask& m,
                        std::uint64_t seed, const DdimPlan& plan, const NoiseSchedule& sched,
                        const std::vector<int>& latent_dims) {
    NoGradGuard ng;
    return sc_generate(m, draw_z_T(seed, latent_dims), plan, sched, model.eps_fn(),
                       [&](const Tensor& z) { return ae.decode(Var::constant(z))->value; });
}

// ---------------------------------------------------------------------------
// Paired test
// ---------------------------------------------------------------------------

namespace {

// One-sided 95% Student-t critical values; lookup takes the largest table
// entry not exceeding the dof, which rounds the threshold conservatively.
double t_crit_95(int dof) {
    static const std::pair<int, double> table[] = {
        {1, 6.314},  {2, 2.920},  {3, 2.353},  {4, 2.132},  {5, 2.015},   {6, 1.943},
        {7, 1.895},  {8, 1.860},  {9, 1.833},  {10, 1.812}, {12, 1.782},  {15, 1.753},
        {20, 1.725}, {25, 1.708}, {30, 1.697}, {40, 1.684}, {50, 1.676},  {60, 1.671},
        {80, 1.664}, {100, 1.660}, {200, 1.653}, {1000, 1.646}};
    double crit = table[0].second;
    for (const auto& [d, v] : table)
        if (dof >= d) crit = v;
    return crit;
}

}  // namespace

PairedStats paired_one_sided(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("paired_one_sided: size mismatch");
    if (a.size() < 2) throw std::invalid_argument("paired_one_sided: need at least 2 pairs");
    PairedStats st;
    st.n = int(a.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] - b[i];
    st.mean_delta = sum / double(st.n);
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = (a[i] - b[i]) - st.mean_delta;
        ss += d * d;
    }
    const double sd = std::sqrt(ss / double(st.n - 1));
    if (sd == 0.0) {
        st.t_stat = st.mean_delta > 0.0 ? std::numeric_limits<double>::infinity()
                    : st.mean_delta < 0.0 ? -std::numeric_limits<double>::infinity()
                                          : 0.0;
    } else {
        st.t_stat = st.mean_delta / (sd / std::sqrt(double(st.n)));
    }
    st.significant_95 = st.t_stat > t_crit_95(st.n - 1);
    return st;
}

}  // namespace disc
