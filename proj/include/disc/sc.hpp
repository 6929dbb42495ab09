#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "disc/diffusion.hpp"
#include "disc/mask.hpp"
#include "disc/optim.hpp"
#include "disc/tape.hpp"
#include "disc/tensor.hpp"

namespace disc {

// Mask-conditioned noise predictors: the sampling form works on plain
// tensors, the training form on tape variables.
using CondEpsFn = std::function<Tensor(const Tensor& z_t, int t, const LabelMask& m)>;
using CondEpsFnVar = std::function<VarPtr(const VarPtr& z_t, int t, const LabelMask& m)>;

// Final latents of K separated trajectories that share one starting noise:
// trajectory k was denoised under the constant single-label mask k. Only the
// finals are kept (truncated objective).
struct DistillSample {
    std::vector<Tensor> z0;  // kNumLabels latents, identical shapes
    std::uint64_t seed = 0;  // stream key that produced the shared z_T
};

// Binary per-label masks from m nearest-neighbor-downsampled to (h, w).
// Always a partition: each cell is 1 in exactly one of the K outputs.
std::vector<Tensor> partition_masks(const LabelMask& m, int h, int w);

// z_mixed = sum_k z_k o m_k, computed as a per-cell selection (the masks are
// a partition), so a constant mask returns that latent bit-for-bit. Throws on
// overlapping/uncovering masks, non-binary values, or shape mismatches.
Tensor fuse(const std::vector<Tensor>& latents, const std::vector<Tensor>& binary_masks);
Tensor fuse(const std::vector<Tensor>& latents, const LabelMask& m);

// Run the sampler K times from the same z_T, each under constant mask k, and
// keep the finals. The masks are built at (mask_h, mask_w) pixel resolution.
DistillSample sc_separate(const Tensor& z_T, const DdimPlan& plan, const NoiseSchedule& sched,
                          const CondEpsFn& eps_fn, int mask_h, int mask_w,
                          std::uint64_t seed = 0);

// Separated-conditions generation: separate, fuse finals with m, decode.
Tensor sc_generate(const LabelMask& m, const Tensor& z_T, const DdimPlan& plan,
                   const NoiseSchedule& sched, const CondEpsFn& eps_fn,
                   const std::function<Tensor(const Tensor&)>& decode);

// n separated samples; sample i draws its z_T of shape latent_dims from the
// substream ("distill", i) of `seed`.
std::vector<DistillSample> build_distill_set(int n, std::uint64_t seed,
                                             const std::vector<int>& latent_dims,
                                             const DdimPlan& plan, const NoiseSchedule& sched,
                                             const CondEpsFn& eps_fn, int mask_h, int mask_w);

// On-disk layout: <dir>/index.csv with header sample_id,seed,k,file and one
// row per (sample, k); latents live in per-sample tensor containers.
void save_distill_set(const std::string& dir, const std::vector<DistillSample>& set);
std::vector<DistillSample> load_distill_set(const std::string& dir);

// Distillation objective at a fixed draw: z0_mixed = fuse(sample.z0, m),
// z_t from forward noising, then mean((eps - eps_hat(z_t, t, m))^2).
VarPtr disc_loss_at(const DistillSample& sample, const LabelMask& m, int t, const Tensor& eps,
                    const NoiseSchedule& sched, const CondEpsFnVar& eps_fn);

// Draws t ~ U{1..T} and eps ~ N(0,I) from rng, then defers to disc_loss_at.
VarPtr disc_loss(const DistillSample& sample, const LabelMask& m, Rng& rng,
                 const NoiseSchedule& sched, const CondEpsFnVar& eps_fn);

// One real latent (already encoded) plus the mask it was generated under.
struct LdmItem {
    Tensor z0;
    LabelMask m;
};

// One co-training step: loss = 1/2 mean eps-loss over real + 1/2 mean
// distill loss over samples (fresh mask per sample), one optimizer step.
// An empty real batch trains on the distill loss alone (the pure
// fine-tuning path); an empty distill batch is an error. Rng draws land
// in a fixed order — per distill sample (t, eps) first, then per real
// item — so a step can be replayed term by term.
double cotrain_step(const std::vector<LdmItem>& real_batch,
                    const std::vector<DistillSample>& distill_batch,
                    const std::vector<LabelMask>& distill_masks, Rng& rng,
                    const NoiseSchedule& sched, const CondEpsFnVar& eps_fn, ParamStore& params,
                    Adam& opt);

}  // namespace disc
