#pragma once

#include <vector>

#include "disc/mask.hpp"
#include "disc/optim.hpp"
#include "disc/tape.hpp"

namespace disc {

// Sinusoidal timestep features (dim even): [sin(t*w_i), cos(t*w_i)] with
// log-spaced frequencies, the standard transformer encoding.
Tensor time_features(int t, int dim);

// y = W x + b for a vector x: W (out,in), b (out), x (in) -> (out).
VarPtr linear_fw(const VarPtr& W, const VarPtr& b, const VarPtr& x);

// Weight initializers: N(0, 1/fan_in) scaled.
Tensor conv_init(Rng& rng, int oc, int ic, int k, double gain = 1.0);
Tensor linear_init(Rng& rng, int out, int in, double gain = 1.0);

// ---------------------------------------------------------------------------
// Mask encoder (tau): label-embedding table + small conv stack at latent
// resolution.
// ---------------------------------------------------------------------------
struct MaskEncoderConfig {
    int d = 8;       // embedding width
    int factor = 4;  // image -> latent spatial downsampling
};

enum class EmbedMode { pixel, tile };

struct MaskEncoder {
    MaskEncoderConfig cfg;
    ParamStore params;

    void init(Rng& rng);
    // Raw embedding field (d, h/f, w/f). pixel mode gathers table rows at the
    // nearest-neighbor-downsampled labels; tile mode broadcasts the single
    // label's row (errors on multi-label masks). The two coincide on constant
    // masks.
    VarPtr embed_mask(const LabelMask& m, EmbedMode mode) const;
    // Conditioning field: embed_mask(pixel) followed by the conv stack.
    VarPtr forward(const LabelMask& m) const;
};

// ---------------------------------------------------------------------------
// Conditional denoiser: one-level U-Net (full res, half res bottleneck, skip
// connection back up), timestep bias into every block, conditioning field
// concatenated channel-wise at each resolution.
// ---------------------------------------------------------------------------
struct DenoiserConfig {
    int latent_ch = 4;
    int cond_ch = 8;  // must match MaskEncoderConfig.d
    int width = 32;   // base channel count (even)
    int t_dim = 16;   // timestep feature width (even)
    int groups = 2;   // group-norm groups (divides width)
    int max_t = 0;    // 0 = unchecked; else forward rejects t outside [1,max_t]
};

struct Denoiser {
    DenoiserConfig cfg;
    ParamStore params;

    void init(Rng& rng);
    // eps_hat(z_t, t, cond); shape-preserving, deterministic.
    VarPtr forward(const VarPtr& z_t, int t, const VarPtr& cond) const;
};

// ---------------------------------------------------------------------------
// Autoencoder with spatial factor 4 (two stride-2 stages each way).
// ---------------------------------------------------------------------------
struct AutoencoderConfig {
    int base = 8;
    int latent_ch = 4;
};

struct Autoencoder {
    AutoencoderConfig cfg;
    ParamStore params;

    void init(Rng& rng);
    VarPtr encode(const VarPtr& x) const;  // (3,H,W) -> (latent_ch,H/4,W/4)
    VarPtr decode(const VarPtr& z) const;  // inverse shapes
};

// ---------------------------------------------------------------------------
// Pixel segmenter: one-level U-Net emitting K logits per pixel.
// ---------------------------------------------------------------------------
struct SegmenterConfig {
    int base = 8;
    int n_classes = kNumLabels;
};

struct Segmenter {
    SegmenterConfig cfg;
    ParamStore params;

    void init(Rng& rng);
    VarPtr forward(const VarPtr& x) const;  // (3,H,W) -> (K,H,W) logits
};

// ---------------------------------------------------------------------------
// Attention-pooled multiple-instance classifier over a bag of tiles.
// ---------------------------------------------------------------------------
struct MilConfig {
    int base = 6;      // embed conv base width
    int att_dim = 16;  // attention hidden width
    int n_classes = kNumLabels;
};

struct Mil {
    MilConfig cfg;
    ParamStore params;

    void init(Rng& rng);
    int embed_dim() const { return 4 * cfg.base; }
    VarPtr embed_tile(const VarPtr& x) const;  // (3,H,W) -> (E)
    // Slide logits from tile embeddings; order-free attention pooling.
    VarPtr bag_logits(const std::vector<VarPtr>& tile_embeds) const;  // (K)
    VarPtr forward_probs(const std::vector<VarPtr>& tiles) const;     // sigmoid(K)
};

}  // namespace disc
