#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "disc/mask.hpp"
#include "disc/tensor.hpp"

namespace disc {

// Procedural texture parameters. The four classes share one palette and are
// separated purely by spatial structure:
//   0: smooth low-frequency field    (coarse-band energy)
//   1: sparse thin rings             (fine+mid edge energy)
//   2: dense soft blobs              (mid-band energy)
//   3: fine speckle                  (fine-band energy)
struct TextureSpec {
    // label 0
    double smooth_lambda = 34.0;  // shortest wavelength in the mixture, px
    // label 1
    double ring_radius = 1.8;
    double ring_spacing = 6.0;
    double ring_thickness = 0.8;
    double ring_jitter = 1.0;
    // label 2
    double blob_radius = 3.2;
    double blob_density = 0.017;  // bump centers per pixel
    // label 3
    double grain_scale = 0.35;  // speckle smoothing sigma, px
    // shared palette, RGB in [0,1]
    std::array<double, 3> color_lo = {0.82, 0.72, 0.82};
    std::array<double, 3> color_hi = {0.45, 0.20, 0.47};
};

// Scalar structure field in [0,1] for one class; the tile is palette-mixed
// from it. Exposed for calibration and tests.
Tensor gen_field(int label, int h, int w, Rng& rng, const TextureSpec& spec);

// Full tile for a constant-label region (3,h,w).
Tensor gen_texture(int label, int h, int w, Rng& rng, const TextureSpec& spec);

// Mask-conditioned tile: each region carries its class texture, blended with
// a 2-px feather at region boundaries. Deterministic given (m, rng state).
Tensor gen_pair(const LabelMask& m, Rng& rng, const TextureSpec& spec);

// Out-of-distribution variant: multiplies every structure scale by (1+delta)
// and shifts the palette by delta/2 toward gray. Deltas beyond the guard
// bound (0.5) are rejected: the oracle is not certified there.
TextureSpec ood_spec(const TextureSpec& spec, double delta);

// ---------------------------------------------------------------------------
// Filter-bank oracle: fixed multi-scale difference-of-Gaussians energies plus
// a local mean, z-scored, nearest class centroid per pixel. Calibrated once
// from pure patches at a fixed seed, then frozen; it shares no code or
// parameters with any learned model.
// ---------------------------------------------------------------------------
inline constexpr int kOracleBands = 4;
inline constexpr int kOracleFeatures = kOracleBands + 1;

struct OracleModel {
    std::array<double, kOracleBands> scales = {0.4, 0.7, 1.3, 3.5};
    std::array<double, kOracleBands> pool_sigmas = {1.2, 1.6, 2.2, 3.0};
    // radius for pooling per-class scores before the final argmax; decisive
    // neighbors outvote ambiguous mixture pixels at region boundaries
    int vote_radius = 3;
    std::array<double, kOracleFeatures> feat_mean{};
    std::array<double, kOracleFeatures> feat_std{};
    // Fisher ratio (between-class / within-class variance) per feature;
    // weights the per-pixel centroid distance toward discriminative bands.
    std::array<double, kOracleFeatures> feat_weight{};
    std::array<std::array<double, kOracleFeatures>, kNumLabels> centroids{};
    // expected signatures of 50/50 class mixtures (energies add, so these are
    // not midpoints); pixels matching one best are treated as boundary pixels
    // and resolved by neighborhood vote instead of their own distances
    static constexpr int kNumPairs = kNumLabels * (kNumLabels - 1) / 2;
    std::array<std::array<double, kOracleFeatures>, kNumPairs> mix_centroids{};
    std::uint64_t calib_seed = 0;

    // content fingerprint for run manifests
    std::string hash_hex() const;
};

// 2-D Gaussian blur with reflected borders (shared by textures and oracle).
Tensor blur2d(const Tensor& img, double sigma);

// Per-pixel feature stack (kOracleFeatures, h, w) from a (3,h,w) tile.
Tensor oracle_features(const Tensor& tile, const OracleModel& model);

OracleModel calibrate_oracle(const TextureSpec& spec, std::uint64_t seed, int n_per_class,
                             int patch);

// canonical calibration used by evaluation paths and tests
inline constexpr std::uint64_t kOracleCalibSeed = 4242;
inline constexpr int kOracleCalibPerClass = 60;
inline constexpr int kOracleCalibPatch = 64;

inline OracleModel make_default_oracle(const TextureSpec& spec = {}) {
    return calibrate_oracle(spec, kOracleCalibSeed, kOracleCalibPerClass, kOracleCalibPatch);
}

// Nearest-centroid label per pixel.
LabelMask oracle_classify(const OracleModel& model, const Tensor& tile);

// Pixels within `band` (Chebyshev) of a region boundary of `ref`, marked 1.
std::vector<int> boundary_band(const LabelMask& ref, int band);

// Fraction of non-band pixels whose oracle label matches ref. Per-label
// agreement for ref's present labels via `per_label` (absent labels get -1).
double oracle_agreement(const OracleModel& model, const Tensor& tile, const LabelMask& ref,
                        int band, std::vector<double>* per_label = nullptr);

// Mean confusion matrix diagonal over freshly generated pure patches.
std::array<double, kNumLabels> oracle_diagonal(const OracleModel& model, const TextureSpec& spec,
                                               std::uint64_t seed, int n_per_class, int patch);

}  // namespace disc
