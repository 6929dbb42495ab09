#include <stdexcept>

#include "disc/models.hpp"

namespace disc {

// ---------------------------------------------------------------------------
// Autoencoder
// ---------------------------------------------------------------------------

void Autoencoder::init(Rng& rng) {
    Rng r = rng.substream("autoencoder");
    const int b = cfg.base;
    params.add("ae.e1.w", conv_init(r, b, 3, 3));
    params.add("ae.e1.b", Tensor::zeros({b}));
    params.add("ae.e2.w", conv_init(r, 2 * b, b, 3));
    params.add("ae.e2.b", Tensor::zeros({2 * b}));
    params.add("ae.e3.w", conv_init(r, 2 * b, 2 * b, 3));
    params.add("ae.e3.b", Tensor::zeros({2 * b}));
    params.add("ae.e4.w", conv_init(r, cfg.latent_ch, 2 * b, 3));
    params.add("ae.e4.b", Tensor::zeros({cfg.latent_ch}));

    params.add("ae.d1.w", conv_init(r, 2 * b, cfg.latent_ch, 3));
    params.add("ae.d1.b", Tensor::zeros({2 * b}));
    params.add("ae.d2.w", conv_init(r, 2 * b, 2 * b, 3));
    params.add("ae.d2.b", Tensor::zeros({2 * b}));
    params.add("ae.d3.w", conv_init(r, b, 2 * b, 3));
    params.add("ae.d3.b", Tensor::zeros({b}));
    params.add("ae.d4.w", conv_init(r, 3, b, 3));
    params.add("ae.d4.b", Tensor::zeros({3}));
}

VarPtr Autoencoder::encode(const VarPtr& x) const {
    if (x->value.rank() != 3 || x->value.dims[0] != 3)
        throw std::invalid_argument("encode: expected (3,H,W), got " + x->value.shape_str());
    if (x->value.dims[1] % 4 != 0 || x->value.dims[2] % 4 != 0)
        throw std::invalid_argument("encode: H and W must be divisible by 4");
    auto h = silu(conv2d(x, params.get("ae.e1.w"), params.get("ae.e1.b"), 1, 1));
    h = silu(conv2d(h, params.get("ae.e2.w"), params.get("ae.e2.b"), 2, 1));
    h = silu(conv2d(h, params.get("ae.e3.w"), params.get("ae.e3.b"), 2, 1));
    return conv2d(h, params.get("ae.e4.w"), params.get("ae.e4.b"), 1, 1);
}

VarPtr Autoencoder::decode(const VarPtr& z) const {
    if (z->value.rank() != 3 || z->value.dims[0] != cfg.latent_ch)
        throw std::invalid_argument("decode: expected (" + std::to_string(cfg.latent_ch) +
                                    ",h,w), got " + z->value.shape_str());
    auto h = silu(conv2d(z, params.get("ae.d1.w"), params.get("ae.d1.b"), 1, 1));
    h = silu(conv2d(upsample2x_nn(h), params.get("ae.d2.w"), params.get("ae.d2.b"), 1, 1));
    h = silu(conv2d(upsample2x_nn(h), params.get("ae.d3.w"), params.get("ae.d3.b"), 1, 1));
    return conv2d(h, params.get("ae.d4.w"), params.get("ae.d4.b"), 1, 1);
}

// ---------------------------------------------------------------------------
// Segmenter
// ---------------------------------------------------------------------------

void Segmenter::init(Rng& rng) {
    Rng r = rng.substream("segmenter");
    const int b = cfg.base;
    params.add("seg.e0.w", conv_init(r, b, 3, 3));
    params.add("seg.e0.b", Tensor::zeros({b}));
    params.add("seg.e1.w", conv_init(r, 2 * b, b, 3));
    params.add("seg.e1.b", Tensor::zeros({2 * b}));
    params.add("seg.e2.w", conv_init(r, 2 * b, 2 * b, 3));
    params.add("seg.e2.b", Tensor::zeros({2 * b}));
    params.add("seg.d1.w", conv_init(r, 2 * b, 4 * b, 3));
    params.add("seg.d1.b", Tensor::zeros({2 * b}));
    params.add("seg.d0.w", conv_init(r, b, 3 * b, 3));
    params.add("seg.d0.b", Tensor::zeros({b}));
    params.add("seg.out.w", conv_init(r, cfg.n_classes, b, 3));
    params.add("seg.out.b", Tensor::zeros({cfg.n_classes}));
}

VarPtr Segmenter::forward(const VarPtr& x) const {
    if (x->value.rank() != 3 || x->value.dims[0] != 3)
        throw std::invalid_argument("segmenter: expected (3,H,W), got " + x->value.shape_str());
    if (x->value.dims[1] % 4 != 0 || x->value.dims[2] % 4 != 0)
        throw std::invalid_argument("segmenter: H and W must be divisible by 4");
    auto e0 = silu(conv2d(x, params.get("seg.e0.w"), params.get("seg.e0.b"), 1, 1));
    auto e1 = silu(conv2d(e0, params.get("seg.e1.w"), params.get("seg.e1.b"), 2, 1));
    auto e2 = silu(conv2d(e1, params.get("seg.e2.w"), params.get("seg.e2.b"), 2, 1));
    auto d1 = silu(conv2d(concat_ch({upsample2x_nn(e2), e1}), params.get("seg.d1.w"),
                          params.get("seg.d1.b"), 1, 1));
    auto d0 = silu(conv2d(concat_ch({upsample2x_nn(d1), e0}), params.get("seg.d0.w"),
                          params.get("seg.d0.b"), 1, 1));
    return conv2d(d0, params.get("seg.out.w"), params.get("seg.out.b"), 1, 1);
}

// ---------------------------------------------------------------------------
// MIL classifier
// ---------------------------------------------------------------------------

void Mil::init(Rng& rng) {
    Rng r = rng.substream("mil");
    const int b = cfg.base;
    params.add("mil.c1.w", conv_init(r, b, 3, 3));
    params.add("mil.c1.b", Tensor::zeros({b}));
    params.add("mil.c2.w", conv_init(r, 2 * b, b, 3));
    params.add("mil.c2.b", Tensor::zeros({2 * b}));
    params.add("mil.c3.w", conv_init(r, 4 * b, 2 * b, 3));
    params.add("mil.c3.b", Tensor::zeros({4 * b}));
    params.add("mil.att.w", linear_init(r, cfg.att_dim, 4 * b));
    params.add("mil.att.b", Tensor::zeros({cfg.att_dim}));
    params.add("mil.score.w", linear_init(r, 1, cfg.att_dim));
    params.add("mil.score.b", Tensor::zeros({1}));
    params.add("mil.head.w", linear_init(r, cfg.n_classes, 4 * b));
    params.add("mil.head.b", Tensor::zeros({cfg.n_classes}));
}

VarPtr Mil::embed_tile(const VarPtr& x) const {
    if (x->value.rank() != 3 || x->value.dims[0] != 3)
        throw std::invalid_argument("mil: expected (3,H,W) tile, got " + x->value.shape_str());
    auto h = silu(conv2d(x, params.get("mil.c1.w"), params.get("mil.c1.b"), 2, 1));
    h = silu(conv2d(h, params.get("mil.c2.w"), params.get("mil.c2.b"), 2, 1));
    h = silu(conv2d(h, params.get("mil.c3.w"), params.get("mil.c3.b"), 2, 1));
    return global_avg_pool(h);
}

VarPtr Mil::bag_logits(const std::vector<VarPtr>& tile_embeds) const {
    if (tile_embeds.empty()) throw std::invalid_argument("mil: empty bag");
    const int n = int(tile_embeds.size());
    std::vector<VarPtr> scores;
    scores.reserve(n);
    for (const auto& e : tile_embeds) {
        auto hid = tanh_v(linear_fw(params.get("mil.att.w"), params.get("mil.att.b"), e));
        scores.push_back(linear_fw(params.get("mil.score.w"), params.get("mil.score.b"), hid));
    }
    auto att = softmax_vec(reshape(stack_rows(scores), {n}));
    auto pooled = reshape(matmul(reshape(att, {1, n}), stack_rows(tile_embeds)), {embed_dim()});
    return linear_fw(params.get("mil.head.w"), params.get("mil.head.b"), pooled);
}

VarPtr Mil::forward_probs(const std::vector<VarPtr>& tiles) const {
    std::vector<VarPtr> embeds;
    embeds.reserve(tiles.size());
    for (const auto& t : tiles) embeds.push_back(embed_tile(t));
    return sigmoid_v(bag_logits(embeds));
}

}  // namespace disc
