#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "disc/checkpoint.hpp"
#include "disc/diffusion.hpp"
#include "disc/models.hpp"
#include "disc/sc.hpp"

namespace disc {

// ---------------------------------------------------------------------------
// Mask-conditioned denoiser bundle: tau (mask encoder) + eps (U-Net) viewed
// as one trainable unit.
// ---------------------------------------------------------------------------
struct CondModel {
    MaskEncoder enc;
    Denoiser den;

    void init(Rng& rng);

    // Union view over both stores. The nodes are shared, so gradient and
    // optimizer updates through the view land in the members.
    ParamStore all_params() const;

    // Training-form predictor (tape). The mask embedding is recomputed on
    // every call; nothing is cached between calls.
    CondEpsFnVar eps_var() const;
    // Sampling-form predictor: same arithmetic, gradients off, plain tensors.
    CondEpsFn eps_fn() const;
};

// ---------------------------------------------------------------------------
// Checkpoint glue.
// ---------------------------------------------------------------------------
Checkpoint params_to_checkpoint(const ParamStore& store, const std::string& tag,
                                const std::string& config_hash, const NoiseSchedule* sched,
                                std::uint64_t rng_key, std::uint64_t rng_counter);

// Copies checkpoint tensors into an existing store. Every store entry must
// be present with matching dims, and the checkpoint may not carry extras.
void load_params(ParamStore& store, const Checkpoint& ckpt);

// ---------------------------------------------------------------------------
// Training loops. Models arrive initialized; each loop owns its draw order
// (batch indices, then per-item noise), so a run is a pure function of
// (model state, data, config).
// ---------------------------------------------------------------------------
struct FitConfig {
    int steps = 200;
    int batch = 4;
    double lr = 1e-3;
    std::uint64_t seed = 1;
};

// Plain L2 reconstruction; returns the per-step batch losses.
std::vector<double> train_ae(Autoencoder& ae, const std::vector<Tensor>& tiles,
                             const FitConfig& cfg);

// Eps-prediction objective over pre-encoded latents with their masks.
std::vector<double> train_ldm(CondModel& model, const std::vector<LdmItem>& items,
                              const NoiseSchedule& sched, const FitConfig& cfg);

// Fine-tuning on separated-condition finals. cotrain=false trains on the
// distillation term alone; true averages in the real-batch eps loss. The
// distillation masks are drawn fresh every step from the shape pool.
struct DistillFitConfig : FitConfig {
    bool cotrain = false;
};
std::vector<double> distill_train(CondModel& model, const std::vector<DistillSample>& set,
                                  const std::vector<LdmItem>& real_items,
                                  const std::vector<FreqShapeMask>& shapes,
                                  const NoiseSchedule& sched, const DistillFitConfig& cfg);

// ---------------------------------------------------------------------------
// Generation. Both variants derive z_T the same way from `seed`, so a shared
// seed yields paired samples, and on constant masks the two coincide bitwise.
// ---------------------------------------------------------------------------
Tensor draw_z_T(std::uint64_t seed, const std::vector<int>& latent_dims);

Tensor generate_tile(const CondModel& model, const Autoencoder& ae, const LabelMask& m,
                     std::uint64_t seed, const DdimPlan& plan, const NoiseSchedule& sched,
                     const std::vector<int>& latent_dims);

Tensor generate_tile_sc(const CondModel& model, const Autoencoder& ae, const LabelMask& m,
                        std::uint64_t seed, const DdimPlan& plan, const NoiseSchedule& sched,
                        const std::vector<int>& latent_dims);

// ---------------------------------------------------------------------------
// Paired one-sided location test (H1: mean(a - b) > 0), Student t with a
// conservative 95% critical-value table.
// ---------------------------------------------------------------------------
struct PairedStats {
    int n = 0;
    double mean_delta = 0.0;
    double t_stat = 0.0;
    bool significant_95 = false;
};

PairedStats paired_one_sided(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace disc
