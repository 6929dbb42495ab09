#include "disc/models.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace disc {

Tensor time_features(int t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("time_features: dim must be even >= 2");
    Tensor f = Tensor::zeros({dim});
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * double(i) / double(half));
        f.data[i] = std::sin(t * freq);
        f.data[half + i] = std::cos(t * freq);
    }
    return f;
}

VarPtr linear_fw(const VarPtr& W, const VarPtr& b, const VarPtr& x) {
    const int in = W->value.dims[1];
    const int out = W->value.dims[0];
    auto y = matmul(W, reshape(x, {in, 1}));
    y = add(y, reshape(b, {out, 1}));
    return reshape(y, {out});
}

Tensor conv_init(Rng& rng, int oc, int ic, int k, double gain) {
    Tensor w = Tensor::randn(rng, {oc, ic, k, k});
    const double s = gain / std::sqrt(double(ic) * k * k);
    for (double& v : w.data) v *= s;
    return w;
}

Tensor linear_init(Rng& rng, int out, int in, double gain) {
    Tensor w = Tensor::randn(rng, {out, in});
    const double s = gain / std::sqrt(double(in));
    for (double& v : w.data) v *= s;
    return w;
}

// ---------------------------------------------------------------------------
// Mask encoder
// ---------------------------------------------------------------------------

void MaskEncoder::init(Rng& rng) {
    Rng r = rng.substream("mask_encoder");
    Tensor table = Tensor::randn(r, {kNumLabels, cfg.d});
    for (double& v : table.data) v *= 0.5;
    params.add("tau.table", std::move(table));
    params.add("tau.c1.w", conv_init(r, cfg.d, cfg.d, 3));
    params.add("tau.c1.b", Tensor::zeros({cfg.d}));
    params.add("tau.c2.w", conv_init(r, cfg.d, cfg.d, 3));
    params.add("tau.c2.b", Tensor::zeros({cfg.d}));
}

VarPtr MaskEncoder::embed_mask(const LabelMask& m, EmbedMode mode) const {
    if (m.h % cfg.factor != 0 || m.w % cfg.factor != 0)
        throw std::invalid_argument("embed_mask: mask dims not divisible by factor");
    const int h = m.h / cfg.factor;
    const int w = m.w / cfg.factor;
    std::vector<int> labels;
    if (mode == EmbedMode::tile) {
        if (!m.is_constant())
            throw std::invalid_argument("embed_mask: tile mode requires a single-label mask");
        labels.assign(std::size_t(h) * w, m.labels[0]);
    } else {
        const LabelMask down = downsample_mask(m, cfg.factor);
        labels = down.labels;
    }
    return embed_hw(params.get("tau.table"), labels, h, w);
}

VarPtr MaskEncoder::forward(const LabelMask& m) const {
    auto e = embed_mask(m, EmbedMode::pixel);
    auto h = silu(conv2d(e, params.get("tau.c1.w"), params.get("tau.c1.b"), 1, 1));
    return conv2d(h, params.get("tau.c2.w"), params.get("tau.c2.b"), 1, 1);
}

// ---------------------------------------------------------------------------
// Denoiser
// ---------------------------------------------------------------------------

void Denoiser::init(Rng& rng) {
    if (cfg.width % (2 * cfg.groups) != 0)
        throw std::invalid_argument("denoiser: width must be divisible by 2*groups");
    Rng r = rng.substream("denoiser");
    const int W = cfg.width;
    const int in_ch = cfg.latent_ch + cfg.cond_ch;

    // timestep MLP + per-block bias projections
    params.add("eps.t1.w", linear_init(r, cfg.t_dim, cfg.t_dim));
    params.add("eps.t1.b", Tensor::zeros({cfg.t_dim}));
    params.add("eps.t2.w", linear_init(r, cfg.t_dim, cfg.t_dim));
    params.add("eps.t2.b", Tensor::zeros({cfg.t_dim}));
    params.add("eps.tb_d.w", linear_init(r, W, cfg.t_dim));
    params.add("eps.tb_d.b", Tensor::zeros({W}));
    params.add("eps.tb_m.w", linear_init(r, 2 * W, cfg.t_dim));
    params.add("eps.tb_m.b", Tensor::zeros({2 * W}));
    params.add("eps.tb_u.w", linear_init(r, W, cfg.t_dim));
    params.add("eps.tb_u.b", Tensor::zeros({W}));

    // full-resolution stage
    params.add("eps.in.w", conv_init(r, W, in_ch, 3));
    params.add("eps.in.b", Tensor::zeros({W}));
    params.add("eps.d.w", conv_init(r, W, W, 3));
    params.add("eps.d.b", Tensor::zeros({W}));
    params.add("eps.d.gn.g", Tensor::full({W}, 1.0));
    params.add("eps.d.gn.b", Tensor::zeros({W}));

    // downsample + bottleneck at half resolution
    params.add("eps.down.w", conv_init(r, 2 * W, W, 3));
    params.add("eps.down.b", Tensor::zeros({2 * W}));
    params.add("eps.m0.w", conv_init(r, 2 * W, 2 * W + cfg.cond_ch, 3));
    params.add("eps.m0.b", Tensor::zeros({2 * W}));
    params.add("eps.m.w", conv_init(r, 2 * W, 2 * W, 3));
    params.add("eps.m.b", Tensor::zeros({2 * W}));
    params.add("eps.m.gn.g", Tensor::full({2 * W}, 1.0));
    params.add("eps.m.gn.b", Tensor::zeros({2 * W}));

    // upsample + skip fusion back to full resolution
    params.add("eps.u0.w", conv_init(r, W, 3 * W, 3));
    params.add("eps.u0.b", Tensor::zeros({W}));
    params.add("eps.u.w", conv_init(r, W, W, 3));
    params.add("eps.u.b", Tensor::zeros({W}));
    params.add("eps.u.gn.g", Tensor::full({W}, 1.0));
    params.add("eps.u.gn.b", Tensor::zeros({W}));

    params.add("eps.out.w", conv_init(r, cfg.latent_ch, W, 3, 0.1));
    params.add("eps.out.b", Tensor::zeros({cfg.latent_ch}));
}

VarPtr Denoiser::forward(const VarPtr& z_t, int t, const VarPtr& cond) const {
    if (t < 1 || (cfg.max_t > 0 && t > cfg.max_t))
        throw std::out_of_range("denoiser: t=" + std::to_string(t) + " out of range");
    if (z_t->value.rank() != 3 || z_t->value.dims[0] != cfg.latent_ch)
        throw std::invalid_argument("denoiser: bad latent shape " + z_t->value.shape_str());
    if (cond->value.dims[0] != cfg.cond_ch || cond->value.dims[1] != z_t->value.dims[1] ||
        cond->value.dims[2] != z_t->value.dims[2])
        throw std::invalid_argument("denoiser: cond shape " + cond->value.shape_str() +
                                    " does not match latent " + z_t->value.shape_str());

    const auto& P = params;
    auto tf = Var::constant(time_features(t, cfg.t_dim));
    auto tv = silu(linear_fw(P.get("eps.t1.w"), P.get("eps.t1.b"), tf));
    tv = linear_fw(P.get("eps.t2.w"), P.get("eps.t2.b"), tv);
    auto tb_d = linear_fw(P.get("eps.tb_d.w"), P.get("eps.tb_d.b"), tv);
    auto tb_m = linear_fw(P.get("eps.tb_m.w"), P.get("eps.tb_m.b"), tv);
    auto tb_u = linear_fw(P.get("eps.tb_u.w"), P.get("eps.tb_u.b"), tv);

    auto cond_half = downsample2x_nn(cond);

    auto h0 = conv2d(concat_ch({z_t, cond}), P.get("eps.in.w"), P.get("eps.in.b"), 1, 1);
    auto h = conv2d(h0, P.get("eps.d.w"), P.get("eps.d.b"), 1, 1);
    h = add_chan_bias(h, tb_d);
    h = group_norm(h, P.get("eps.d.gn.g"), P.get("eps.d.gn.b"), cfg.groups);
    auto h1 = add(silu(h), h0);

    auto hd = conv2d(h1, P.get("eps.down.w"), P.get("eps.down.b"), 2, 1);
    auto m0 = conv2d(concat_ch({hd, cond_half}), P.get("eps.m0.w"), P.get("eps.m0.b"), 1, 1);
    auto mb = conv2d(m0, P.get("eps.m.w"), P.get("eps.m.b"), 1, 1);
    mb = add_chan_bias(mb, tb_m);
    mb = group_norm(mb, P.get("eps.m.gn.g"), P.get("eps.m.gn.b"), cfg.groups);
    auto m1 = add(silu(mb), m0);

    auto u0 = conv2d(concat_ch({upsample2x_nn(m1), h1}), P.get("eps.u0.w"), P.get("eps.u0.b"), 1, 1);
    auto ub = conv2d(u0, P.get("eps.u.w"), P.get("eps.u.b"), 1, 1);
    ub = add_chan_bias(ub, tb_u);
    ub = group_norm(ub, P.get("eps.u.gn.g"), P.get("eps.u.gn.b"), cfg.groups);
    auto u1 = add(silu(ub), u0);

    return conv2d(u1, P.get("eps.out.w"), P.get("eps.out.b"), 1, 1);
}

}  // namespace disc
