#include "disc/sc.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "disc/checkpoint.hpp"
#include "disc/io.hpp"

namespace disc {

std::vector<Tensor> partition_masks(const LabelMask& m, int h, int w) {
    if (h < 1 || w < 1) throw std::invalid_argument("partition_masks: bad target dims");
    if (m.h % h != 0 || m.w % w != 0 || m.h / h != m.w / w)
        throw std::invalid_argument("partition_masks: mask not an integer multiple of target");
    const LabelMask small = m.h == h ? m : downsample_mask(m, m.h / h);
    std::vector<Tensor> out;
    out.reserve(kNumLabels);
    for (int k = 0; k < kNumLabels; ++k) {
        Tensor b = Tensor::zeros({h, w});
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) b.at2(i, j) = small.at(i, j) == k ? 1.0 : 0.0;
        out.push_back(std::move(b));
    }
    return out;
}

Tensor fuse(const std::vector<Tensor>& latents, const std::vector<Tensor>& binary_masks) {
    if (latents.size() != std::size_t(kNumLabels))
        throw std::invalid_argument("fuse: expected one latent per label");
    if (binary_masks.size() != latents.size())
        throw std::invalid_argument("fuse: mask/latent count mismatch");
    const Tensor& first = latents[0];
    if (first.rank() != 3) throw std::invalid_argument("fuse: latents must be (c,h,w)");
    const int c = first.dims[0], h = first.dims[1], w = first.dims[2];
    for (const Tensor& z : latents)
        if (z.dims != first.dims) throw std::invalid_argument("fuse: latent shape mismatch");
    for (const Tensor& b : binary_masks) {
        if (b.dims != std::vector<int>{h, w})
            throw std::invalid_argument("fuse: mask shape mismatch");
        for (double v : b.data)
            if (v != 0.0 && v != 1.0) throw std::invalid_argument("fuse: masks must be binary");
    }
    Tensor out = Tensor::zeros(first.dims);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            int owner = -1;
            for (int k = 0; k < kNumLabels; ++k)
                if (binary_masks[k].at2(i, j) == 1.0) {
                    if (owner >= 0) throw std::invalid_argument("fuse: overlapping masks");
                    owner = k;
                }
            if (owner < 0) throw std::invalid_argument("fuse: uncovered cell");
            for (int ch = 0; ch < c; ++ch) out.at3(ch, i, j) = latents[owner].at3(ch, i, j);
        }
    return out;
}

Tensor fuse(const std::vector<Tensor>& latents, const LabelMask& m) {
    if (latents.empty() || latents[0].rank() != 3)
        throw std::invalid_argument("fuse: latents must be (c,h,w)");
    return fuse(latents, partition_masks(m, latents[0].dims[1], latents[0].dims[2]));
}

DistillSample sc_separate(const Tensor& z_T, const DdimPlan& plan, const NoiseSchedule& sched,
                          const CondEpsFn& eps_fn, int mask_h, int mask_w, std::uint64_t seed) {
    DistillSample out;
    out.seed = seed;
    out.z0.reserve(kNumLabels);
    for (int k = 0; k < kNumLabels; ++k) {
        const LabelMask sm(mask_h, mask_w, k);
        out.z0.push_back(ddim_sample(
            z_T, plan, sched, [&](const Tensor& z, int t) { return eps_fn(z, t, sm); }));
    }
    return out;
}

Tensor sc_generate(const LabelMask& m, const Tensor& z_T, const DdimPlan& plan,
                   const NoiseSchedule& sched, const CondEpsFn& eps_fn,
                   const std::function<Tensor(const Tensor&)>& decode) {
    const DistillSample sep = sc_separate(z_T, plan, sched, eps_fn, m.h, m.w);
    return decode(fuse(sep.z0, m));
}

std::vector<DistillSample> build_distill_set(int n, std::uint64_t seed,
                                             const std::vector<int>& latent_dims,
                                             const DdimPlan& plan, const NoiseSchedule& sched,
                                             const CondEpsFn& eps_fn, int mask_h, int mask_w) {
    if (n < 1) throw std::invalid_argument("build_distill_set: need n >= 1");
    std::vector<DistillSample> out;
    out.reserve(std::size_t(n));
    Rng base(seed);
    for (int i = 0; i < n; ++i) {
        Rng sub = base.substream("distill", std::uint64_t(i));
        const std::uint64_t sample_seed = sub.key();
        const Tensor z_T = Tensor::randn(sub, latent_dims);
        out.push_back(sc_separate(z_T, plan, sched, eps_fn, mask_h, mask_w, sample_seed));
    }
    return out;
}

namespace {

std::string sample_file(int sample_id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%06d.ckpt", sample_id);
    return buf;
}

}  // namespace

void save_distill_set(const std::string& dir, const std::vector<DistillSample>& set) {
    std::filesystem::create_directories(dir);
    std::ostringstream index;
    index << "sample_id,seed,k,file\n";
    for (std::size_t i = 0; i < set.size(); ++i) {
        const DistillSample& s = set[i];
        if (s.z0.size() != std::size_t(kNumLabels))
            throw std::invalid_argument("save_distill_set: sample missing latents");
        const std::string file = sample_file(int(i));
        Checkpoint ckpt;
        ckpt.tag = "distill";
        ckpt.rng_key = s.seed;
        for (int k = 0; k < kNumLabels; ++k) {
            ckpt.tensors.emplace("z0." + std::to_string(k), s.z0[k]);
            index << i << ',' << s.seed << ',' << k << ',' << file << '\n';
        }
        save_checkpoint(dir + "/" + file, ckpt);
    }
    const std::string text = index.str();
    write_file_bytes(dir + "/index.csv", text.data(), text.size());
}

std::vector<DistillSample> load_distill_set(const std::string& dir) {
    std::ifstream in(dir + "/index.csv");
    if (!in) throw std::runtime_error("load_distill_set: missing index.csv in " + dir);
    std::string line;
    if (!std::getline(in, line) || line != "sample_id,seed,k,file")
        throw std::runtime_error("load_distill_set: bad index header");
    struct Row {
        std::uint64_t seed;
        std::string file;
        int k_mask = 0;
    };
    std::map<int, Row> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string id_s, seed_s, k_s, file_s;
        if (!std::getline(ls, id_s, ',') || !std::getline(ls, seed_s, ',') ||
            !std::getline(ls, k_s, ',') || !std::getline(ls, file_s))
            throw std::runtime_error("load_distill_set: malformed row: " + line);
        const int id = std::stoi(id_s);
        const int k = std::stoi(k_s);
        if (k < 0 || k >= kNumLabels)
            throw std::runtime_error("load_distill_set: label out of range: " + line);
        auto [it, fresh] = rows.try_emplace(id);
        if (fresh) {
            it->second.seed = std::stoull(seed_s);
            it->second.file = file_s;
        } else if (it->second.seed != std::stoull(seed_s) || it->second.file != file_s) {
            throw std::runtime_error("load_distill_set: inconsistent rows for sample " + id_s);
        }
        it->second.k_mask |= 1 << k;
    }
    std::vector<DistillSample> out;
    out.reserve(rows.size());
    for (const auto& [id, row] : rows) {
        if (row.k_mask != (1 << kNumLabels) - 1)
            throw std::runtime_error("load_distill_set: sample " + std::to_string(id) +
                                     " missing latents");
        const Checkpoint ckpt = load_checkpoint(dir + "/" + row.file);
        DistillSample s;
        s.seed = row.seed;
        for (int k = 0; k < kNumLabels; ++k) {
            auto it = ckpt.tensors.find("z0." + std::to_string(k));
            if (it == ckpt.tensors.end())
                throw std::runtime_error("load_distill_set: tensor missing in " + row.file);
            if (!s.z0.empty() && it->second.dims != s.z0[0].dims)
                throw std::runtime_error("load_distill_set: latent shape mismatch in " +
                                         row.file);
            s.z0.push_back(it->second);
        }
        out.push_back(std::move(s));
    }
    return out;
}

VarPtr disc_loss_at(const DistillSample& sample, const LabelMask& m, int t, const Tensor& eps,
                    const NoiseSchedule& sched, const CondEpsFnVar& eps_fn) {
    if (t < 1 || t > sched.T) throw std::out_of_range("disc_loss_at: t outside [1,T]");
    const Tensor z0_mixed = fuse(sample.z0, m);
    if (!eps.same_shape(z0_mixed)) throw std::invalid_argument("disc_loss_at: eps shape mismatch");
    auto z_t = Var::constant(forward_noise(z0_mixed, t, eps, sched));
    auto eps_hat = eps_fn(z_t, t, m);
    if (!eps_hat->value.same_shape(eps))
        throw std::invalid_argument("disc_loss_at: eps_hat shape mismatch");
    return mean(square(sub(Var::constant(eps), eps_hat)));
}

VarPtr disc_loss(const DistillSample& sample, const LabelMask& m, Rng& rng,
                 const NoiseSchedule& sched, const CondEpsFnVar& eps_fn) {
    if (sample.z0.empty()) throw std::invalid_argument("disc_loss: empty sample");
    const int t = int(rng.uniform_int(1, sched.T));
    const Tensor eps = Tensor::randn(rng, sample.z0[0].dims);
    return disc_loss_at(sample, m, t, eps, sched, eps_fn);
}

double cotrain_step(const std::vector<LdmItem>& real_batch,
                    const std::vector<DistillSample>& distill_batch,
                    const std::vector<LabelMask>& distill_masks, Rng& rng,
                    const NoiseSchedule& sched, const CondEpsFnVar& eps_fn, ParamStore& params,
                    Adam& opt) {
    if (distill_batch.empty()) throw std::invalid_argument("cotrain_step: empty distill batch");
    if (distill_masks.size() != distill_batch.size())
        throw std::invalid_argument("cotrain_step: need one mask per distill sample");

    VarPtr distill_sum;
    for (std::size_t i = 0; i < distill_batch.size(); ++i) {
        VarPtr li = disc_loss(distill_batch[i], distill_masks[i], rng, sched, eps_fn);
        distill_sum = distill_sum ? add(distill_sum, li) : li;
    }
    VarPtr loss = affine(distill_sum, 1.0 / double(distill_batch.size()));

    if (!real_batch.empty()) {
        VarPtr real_sum;
        for (const LdmItem& item : real_batch) {
            const LabelMask& m = item.m;
            VarPtr li = ldm_loss(item.z0, rng, sched,
                                 [&](const VarPtr& z, int t) { return eps_fn(z, t, m); });
            real_sum = real_sum ? add(real_sum, li) : li;
        }
        loss = affine(add(affine(real_sum, 1.0 / double(real_batch.size())), loss), 0.5);
    }

    params.zero_grads();
    backward(loss);
    opt.step(params);
    return loss->scalar();
}

}  // namespace disc
