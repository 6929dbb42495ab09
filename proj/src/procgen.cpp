#include "disc/procgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "disc/rng.hpp"

namespace disc {

namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

std::vector<double> gauss_kernel(double sigma) {
    const int r = std::max(1, int(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * r + 1);
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        k[i + r] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += k[i + r];
    }
    for (double& v : k) v /= sum;
    return k;
}

// rescale a field to [lo,hi] using its own extrema (flat fields map to mid)
void normalize_field(Tensor& f, double lo, double hi) {
    double mn = f.data[0], mx = f.data[0];
    for (double v : f.data) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    const double span = mx - mn;
    for (double& v : f.data)
        v = span > 1e-12 ? lo + (hi - lo) * (v - mn) / span : 0.5 * (lo + hi);
}

}  // namespace

Tensor blur2d(const Tensor& img, double sigma) {
    if (img.rank() != 2) throw std::invalid_argument("blur2d: expected (h,w)");
    if (sigma <= 0.0) return img;
    const int h = img.dims[0];
    const int w = img.dims[1];
    const auto k = gauss_kernel(sigma);
    const int r = int(k.size() / 2);
    // separable blur, kernel renormalized over the in-bounds window (avoids
    // the spurious fine-scale energy a reflected border crease would inject)
    Tensor tmp = Tensor::zeros({h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double acc = 0.0, norm = 0.0;
            const int d0 = std::max(-r, -j), d1 = std::min(r, w - 1 - j);
            for (int d = d0; d <= d1; ++d) {
                acc += k[d + r] * img.at2(i, j + d);
                norm += k[d + r];
            }
            tmp.at2(i, j) = acc / norm;
        }
    Tensor out = Tensor::zeros({h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double acc = 0.0, norm = 0.0;
            const int d0 = std::max(-r, -i), d1 = std::min(r, h - 1 - i);
            for (int d = d0; d <= d1; ++d) {
                acc += k[d + r] * tmp.at2(i + d, j);
                norm += k[d + r];
            }
            out.at2(i, j) = acc / norm;
        }
    return out;
}

Tensor gen_field(int label, int h, int w, Rng& rng, const TextureSpec& spec) {
    Tensor f = Tensor::zeros({h, w});
    switch (label) {
        case 0: {
            // mixture of many long-wavelength cosines; the band [lambda,
            // 1.35*lambda] keeps all spectral content (including beats) well
            // away from the blob/ring scales
            const double base_freq = 1.0 / spec.smooth_lambda;
            for (int c = 0; c < 10; ++c) {
                const double ang = rng.uniform(0.0, 2.0 * M_PI);
                const double freq = base_freq * rng.uniform(0.74, 1.0);
                const double fx = std::cos(ang) * freq;
                const double fy = std::sin(ang) * freq;
                const double ph = rng.uniform(0.0, 2.0 * M_PI);
                const double amp = rng.uniform(0.5, 1.0);
                for (int i = 0; i < h; ++i)
                    for (int j = 0; j < w; ++j)
                        f.at2(i, j) += amp * std::cos(2.0 * M_PI * (fx * j + fy * i) + ph);
            }
            normalize_field(f, 0.1, 0.9);
            // imperceptible grain floor: keeps the class's fine-band
            // log-energy at a stable low level instead of machine silence,
            // so energy leaking across a region boundary cannot swing it
            for (double& v : f.data) v += rng.uniform(-0.02, 0.02);
            break;
        }
        case 1: {
            // thin rings on a jittered grid
            const double sp = spec.ring_spacing;
            const double th = spec.ring_thickness;
            const int gy = std::max(1, int(std::ceil(h / sp)) + 2);
            const int gx = std::max(1, int(std::ceil(w / sp)) + 2);
            std::vector<std::array<double, 3>> rings;  // cy, cx, radius
            for (int a = -1; a < gy - 1; ++a)
                for (int b = -1; b < gx - 1; ++b) {
                    const double cy = (a + 0.5) * sp + rng.uniform(-spec.ring_jitter, spec.ring_jitter);
                    const double cx = (b + 0.5) * sp + rng.uniform(-spec.ring_jitter, spec.ring_jitter);
                    const double rr = spec.ring_radius * rng.uniform(0.85, 1.15);
                    rings.push_back({cy, cx, rr});
                }
            for (double& v : f.data) v = 0.35;
            for (const auto& ring : rings) {
                const int i0 = std::max(0, int(ring[0] - ring[2] - 3 * th));
                const int i1 = std::min(h - 1, int(ring[0] + ring[2] + 3 * th));
                const int j0 = std::max(0, int(ring[1] - ring[2] - 3 * th));
                const int j1 = std::min(w - 1, int(ring[1] + ring[2] + 3 * th));
                for (int i = i0; i <= i1; ++i)
                    for (int j = j0; j <= j1; ++j) {
                        const double d = std::hypot(i - ring[0], j - ring[1]) - ring[2];
                        const double g = std::exp(-0.5 * d * d / (th * th));
                        f.at2(i, j) = std::min(1.0, f.at2(i, j) + 0.55 * g);
                    }
            }
            break;
        }
        case 2: {
            // dense soft blobs on a jittered lattice (even coverage, no
            // large-scale clumping that would mimic the smooth class)
            const double sp = 1.0 / std::sqrt(spec.blob_density);
            const double rb = spec.blob_radius;
            const int gy = std::max(1, int(std::ceil(h / sp)) + 2);
            const int gx = std::max(1, int(std::ceil(w / sp)) + 2);
            for (double& v : f.data) v = 0.25;
            for (int a = -1; a < gy - 1; ++a)
                for (int b = -1; b < gx - 1; ++b) {
                    const double cy = (a + 0.5) * sp + rng.uniform(-0.35 * sp, 0.35 * sp);
                    const double cx = (b + 0.5) * sp + rng.uniform(-0.35 * sp, 0.35 * sp);
                    const double rr = rb * rng.uniform(0.8, 1.25);
                    const int i0 = std::max(0, int(cy - 3 * rr));
                    const int i1 = std::min(h - 1, int(cy + 3 * rr));
                    const int j0 = std::max(0, int(cx - 3 * rr));
                    const int j1 = std::min(w - 1, int(cx + 3 * rr));
                    for (int i = i0; i <= i1; ++i)
                        for (int j = j0; j <= j1; ++j) {
                            // super-Gaussian: flat core, ~1.5 px edge, so the
                            // class carries its own fine-band signature
                            const double q = ((i - cy) * (i - cy) + (j - cx) * (j - cx)) / (rr * rr);
                            f.at2(i, j) += 0.55 * std::exp(-0.5 * q * q);
                        }
                }
            for (double& v : f.data) v = clamp01(v);
            break;
        }
        case 3: {
            // fine speckle: white noise lightly smoothed
            for (double& v : f.data) v = rng.uniform01();
            f = blur2d(f, spec.grain_scale);
            normalize_field(f, 0.0, 1.0);
            break;
        }
        default:
            throw std::invalid_argument("gen_field: label out of range");
    }
    return f;
}

namespace {

Tensor field_to_rgb(const Tensor& f, const TextureSpec& spec) {
    const int h = f.dims[0];
    const int w = f.dims[1];
    Tensor img = Tensor::zeros({3, h, w});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                const double s = f.at2(i, j);
                img.at3(c, i, j) =
                    clamp01(spec.color_lo[c] + (spec.color_hi[c] - spec.color_lo[c]) * s);
            }
    return img;
}

}  // namespace

Tensor gen_texture(int label, int h, int w, Rng& rng, const TextureSpec& spec) {
    return field_to_rgb(gen_field(label, h, w, rng, spec), spec);
}

Tensor gen_pair(const LabelMask& m, Rng& rng, const TextureSpec& spec) {
    const auto present = m.present_labels();
    if (present.size() == 1) {
        Rng sub = rng.substream("tex", std::uint64_t(present[0]));
        return gen_texture(present[0], m.h, m.w, sub, spec);
    }
    // feathered blend: blur each region indicator, normalize, mix textures
    std::vector<Tensor> weights;
    std::vector<Tensor> fields;
    for (int label : present) {
        Tensor ind = Tensor::zeros({m.h, m.w});
        for (int i = 0; i < m.h; ++i)
            for (int j = 0; j < m.w; ++j) ind.at2(i, j) = m.at(i, j) == label ? 1.0 : 0.0;
        weights.push_back(blur2d(ind, 1.0));  // ~2 px transition
        Rng sub = rng.substream("tex", std::uint64_t(label));
        fields.push_back(gen_field(label, m.h, m.w, sub, spec));
    }
    Tensor mixed = Tensor::zeros({m.h, m.w});
    for (int i = 0; i < m.h; ++i)
        for (int j = 0; j < m.w; ++j) {
            double tot = 0.0, acc = 0.0;
            for (std::size_t r = 0; r < present.size(); ++r) {
                const double wgt = weights[r].at2(i, j);
                tot += wgt;
                acc += wgt * fields[r].at2(i, j);
            }
            mixed.at2(i, j) = acc / tot;
        }
    return field_to_rgb(mixed, spec);
}

TextureSpec ood_spec(const TextureSpec& spec, double delta) {
    if (delta < 0.0 || delta > 0.5)
        throw std::invalid_argument("ood_spec: delta outside certified range [0, 0.5]");
    TextureSpec out = spec;
    const double s = 1.0 + delta;
    out.smooth_lambda *= s;
    out.ring_radius *= s;
    out.ring_spacing *= s;
    out.ring_thickness *= s;
    out.blob_radius *= s;
    out.blob_density /= s * s;  // keep blob coverage roughly constant
    out.grain_scale *= s;
    for (int c = 0; c < 3; ++c) {
        out.color_lo[c] = clamp01(out.color_lo[c] + (0.5 - out.color_lo[c]) * delta * 0.5);
        out.color_hi[c] = clamp01(out.color_hi[c] + (0.5 - out.color_hi[c]) * delta * 0.5);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Oracle
// ---------------------------------------------------------------------------

namespace {

// separable blur with antisymmetric (odd) border extension: g(-t)=2g(0)-g(t).
// Exact for linear ramps at borders, so the difference-of-Gaussians bands see
// no spurious edge energy on smooth gradients (extension may leave [0,1], so
// this is only used before squaring, never for pooling energies).
Tensor blur_odd(const Tensor& img, double sigma) {
    const int h = img.dims[0];
    const int w = img.dims[1];
    const auto k = gauss_kernel(sigma);
    const int r = int(k.size() / 2);
    if (r > h - 1 || r > w - 1)
        throw std::invalid_argument("blur_odd: kernel larger than image");
    auto col = [](const Tensor& t, int i, int j) {  // odd extension along columns
        const int n = t.dims[1];
        if (j < 0) return 2.0 * t.at2(i, 0) - t.at2(i, -j);
        if (j >= n) return 2.0 * t.at2(i, n - 1) - t.at2(i, 2 * n - 2 - j);
        return t.at2(i, j);
    };
    auto row = [](const Tensor& t, int i, int j) {  // odd extension along rows
        const int n = t.dims[0];
        if (i < 0) return 2.0 * t.at2(0, j) - t.at2(-i, j);
        if (i >= n) return 2.0 * t.at2(n - 1, j) - t.at2(2 * n - 2 - i, j);
        return t.at2(i, j);
    };
    Tensor tmp = Tensor::zeros({h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double acc = 0.0;
            for (int d = -r; d <= r; ++d) acc += k[d + r] * col(img, i, j + d);
            tmp.at2(i, j) = acc;
        }
    Tensor out = Tensor::zeros({h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double acc = 0.0;
            for (int d = -r; d <= r; ++d) acc += k[d + r] * row(tmp, i + d, j);
            out.at2(i, j) = acc;
        }
    return out;
}

Tensor luminance(const Tensor& tile) {
    if (tile.rank() != 3 || tile.dims[0] != 3)
        throw std::invalid_argument("oracle: expected (3,h,w) tile");
    const int h = tile.dims[1];
    const int w = tile.dims[2];
    Tensor lum = Tensor::zeros({h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            lum.at2(i, j) =
                0.299 * tile.at3(0, i, j) + 0.587 * tile.at3(1, i, j) + 0.114 * tile.at3(2, i, j);
    return lum;
}

}  // namespace

Tensor oracle_features(const Tensor& tile, const OracleModel& model) {
    const Tensor lum = luminance(tile);
    const int h = lum.dims[0];
    const int w = lum.dims[1];
    Tensor feats = Tensor::zeros({kOracleFeatures, h, w});
    for (int s = 0; s < kOracleBands; ++s) {
        const double sigma = model.scales[s];
        Tensor a = blur_odd(lum, sigma);
        Tensor b = blur_odd(lum, 2.0 * sigma);
        Tensor band = Tensor::zeros({h, w});
        for (std::size_t i = 0; i < band.numel(); ++i) {
            const double d = a.data[i] - b.data[i];
            band.data[i] = d * d;
        }
        Tensor energy = blur2d(band, model.pool_sigmas[s]);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                feats.at3(s, i, j) = std::log(energy.at2(i, j) + 1e-10);
    }
    Tensor mean_f = blur2d(lum, 3.5);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) feats.at3(kOracleBands, i, j) = mean_f.at2(i, j);
    return feats;
}

OracleModel calibrate_oracle(const TextureSpec& spec, std::uint64_t seed, int n_per_class,
                             int patch) {
    if (n_per_class < 1 || patch < 16)
        throw std::invalid_argument("calibrate_oracle: need n_per_class >= 1, patch >= 16");
    OracleModel model;
    model.calib_seed = seed;
    Rng base(seed);

    // accumulate per-class feature sums over an interior pixel subgrid
    std::array<std::array<double, kOracleFeatures>, kNumLabels> sums{};
    std::array<std::array<double, kOracleFeatures>, kNumLabels> sums2{};
    std::array<double, kOracleFeatures> tot_sum{};
    std::array<double, kOracleFeatures> tot_sum2{};
    std::array<std::int64_t, kNumLabels> counts{};
    std::int64_t total = 0;
    const int margin = 4;

    for (int k = 0; k < kNumLabels; ++k) {
        for (int n = 0; n < n_per_class; ++n) {
            Rng rng = base.substream("calib", std::uint64_t(k) * 1000003u + std::uint64_t(n));
            Tensor tile = gen_texture(k, patch, patch, rng, spec);
            Tensor feats = oracle_features(tile, model);
            for (int i = margin; i < patch - margin; i += 2)
                for (int j = margin; j < patch - margin; j += 2) {
                    for (int f = 0; f < kOracleFeatures; ++f) {
                        const double v = feats.at3(f, i, j);
                        sums[k][f] += v;
                        sums2[k][f] += v * v;
                        tot_sum[f] += v;
                        tot_sum2[f] += v * v;
                    }
                    ++counts[k];
                    ++total;
                }
        }
    }
    for (int f = 0; f < kOracleFeatures; ++f) {
        model.feat_mean[f] = tot_sum[f] / double(total);
        const double var = tot_sum2[f] / double(total) - model.feat_mean[f] * model.feat_mean[f];
        model.feat_std[f] = std::sqrt(std::max(var, 1e-12));
    }
    for (int f = 0; f < kOracleFeatures; ++f) {
        double var_within = 0.0, var_between = 0.0;
        for (int k = 0; k < kNumLabels; ++k) {
            const double mk = sums[k][f] / double(counts[k]);
            const double vk = sums2[k][f] / double(counts[k]) - mk * mk;
            var_within += std::max(vk, 0.0) / kNumLabels;
            const double d = mk - model.feat_mean[f];
            var_between += d * d / kNumLabels;
        }
        model.feat_weight[f] = var_between / (var_within + 1e-12);
    }
    for (int k = 0; k < kNumLabels; ++k)
        for (int f = 0; f < kOracleFeatures; ++f)
            model.centroids[k][f] =
                (sums[k][f] / double(counts[k]) - model.feat_mean[f]) / model.feat_std[f];
    // mixture signatures: band energies add linearly (raw features are log
    // energies), the local-mean feature averages
    int p = 0;
    for (int k = 0; k < kNumLabels; ++k)
        for (int l = k + 1; l < kNumLabels; ++l, ++p)
            for (int f = 0; f < kOracleFeatures; ++f) {
                const double rk = model.centroids[k][f] * model.feat_std[f] + model.feat_mean[f];
                const double rl = model.centroids[l][f] * model.feat_std[f] + model.feat_mean[f];
                const double mixed = f < kOracleBands
                                         ? std::log(0.5 * std::exp(rk) + 0.5 * std::exp(rl))
                                         : 0.5 * (rk + rl);
                model.mix_centroids[p][f] = (mixed - model.feat_mean[f]) / model.feat_std[f];
            }
    return model;
}

LabelMask oracle_classify(const OracleModel& model, const Tensor& tile) {
    Tensor feats = oracle_features(tile, model);
    const int h = feats.dims[1];
    const int w = feats.dims[2];
    // per-class score = negative weighted squared distance to the centroid;
    // pixels matching a 50/50 mixture signature better than any class are
    // boundary pixels and abstain from voting
    Tensor score = Tensor::zeros({kNumLabels, h, w});
    std::vector<char> mixed(std::size_t(h) * w, 0);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            std::array<double, kOracleFeatures> z;
            for (int f = 0; f < kOracleFeatures; ++f)
                z[f] = (feats.at3(f, i, j) - model.feat_mean[f]) / model.feat_std[f];
            double best_class = 1e300;
            for (int k = 0; k < kNumLabels; ++k) {
                double d2 = 0.0;
                for (int f = 0; f < kOracleFeatures; ++f) {
                    const double d = z[f] - model.centroids[k][f];
                    d2 += model.feat_weight[f] * d * d;
                }
                score.at3(k, i, j) = -d2;
                best_class = std::min(best_class, d2);
            }
            for (int p = 0; p < OracleModel::kNumPairs; ++p) {
                double d2 = 0.0;
                for (int f = 0; f < kOracleFeatures; ++f) {
                    const double d = z[f] - model.mix_centroids[p][f];
                    d2 += model.feat_weight[f] * d * d;
                }
                // abstain only on a clear mixture match, so mildly drifted
                // in-class pixels keep their vote
                if (d2 < 0.8 * best_class) {
                    mixed[std::size_t(i) * w + j] = 1;
                    break;
                }
            }
        }
    // pool scores of non-abstaining pixels over a small window, then argmax:
    // decisive neighbors dominate ambiguous pixels near region boundaries
    const int r = model.vote_radius;
    LabelMask out(h, w, 0);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            std::array<double, kNumLabels> acc{};
            bool any = false;
            for (int di = -r; di <= r; ++di)
                for (int dj = -r; dj <= r; ++dj) {
                    const int y = i + di, x = j + dj;
                    if (y < 0 || y >= h || x < 0 || x >= w) continue;
                    if (mixed[std::size_t(y) * w + x]) continue;
                    any = true;
                    for (int k = 0; k < kNumLabels; ++k) acc[k] += score.at3(k, y, x);
                }
            if (!any)  // window fully inside a boundary zone: fall back
                for (int k = 0; k < kNumLabels; ++k) acc[k] = score.at3(k, i, j);
            int best_k = 0;
            for (int k = 1; k < kNumLabels; ++k)
                if (acc[k] > acc[best_k]) best_k = k;
            out.at(i, j) = best_k;
        }
    return out;
}

std::vector<int> boundary_band(const LabelMask& ref, int band) {
    std::vector<int> out(ref.labels.size(), 0);
    for (int i = 0; i < ref.h; ++i)
        for (int j = 0; j < ref.w; ++j) {
            bool edge = false;
            if (i + 1 < ref.h && ref.at(i, j) != ref.at(i + 1, j)) edge = true;
            if (j + 1 < ref.w && ref.at(i, j) != ref.at(i, j + 1)) edge = true;
            if (!edge) continue;
            // the boundary sits half a pixel past (i,j); pixels within `band`
            // of it span offsets [-(band-1), band] on each axis
            for (int di = -(band - 1); di <= band; ++di)
                for (int dj = -(band - 1); dj <= band; ++dj) {
                    const int y = i + di, x = j + dj;
                    if (y >= 0 && y < ref.h && x >= 0 && x < ref.w)
                        out[std::size_t(y) * ref.w + x] = 1;
                }
        }
    return out;
}

double oracle_agreement(const OracleModel& model, const Tensor& tile, const LabelMask& ref,
                        int band, std::vector<double>* per_label) {
    if (tile.dims[1] != ref.h || tile.dims[2] != ref.w)
        throw std::invalid_argument("oracle_agreement: tile/mask dims mismatch");
    const LabelMask pred = oracle_classify(model, tile);
    const auto skip = boundary_band(ref, band);
    std::array<std::int64_t, kNumLabels> hit{}, cnt{};
    std::int64_t hits = 0, n = 0;
    for (int i = 0; i < ref.h; ++i)
        for (int j = 0; j < ref.w; ++j) {
            if (skip[std::size_t(i) * ref.w + j]) continue;
            const int r = ref.at(i, j);
            const bool ok = pred.at(i, j) == r;
            ++cnt[r];
            ++n;
            if (ok) {
                ++hit[r];
                ++hits;
            }
        }
    if (per_label) {
        per_label->assign(kNumLabels, -1.0);
        for (int k = 0; k < kNumLabels; ++k)
            if (cnt[k] > 0) (*per_label)[k] = double(hit[k]) / double(cnt[k]);
    }
    return n > 0 ? double(hits) / double(n) : 1.0;
}

std::array<double, kNumLabels> oracle_diagonal(const OracleModel& model, const TextureSpec& spec,
                                               std::uint64_t seed, int n_per_class, int patch) {
    Rng base(seed);
    std::array<double, kNumLabels> diag{};
    for (int k = 0; k < kNumLabels; ++k) {
        std::int64_t hit = 0, tot = 0;
        for (int n = 0; n < n_per_class; ++n) {
            Rng rng = base.substream("diag", std::uint64_t(k) * 1000003u + std::uint64_t(n));
            Tensor tile = gen_texture(k, patch, patch, rng, spec);
            LabelMask pred = oracle_classify(model, tile);
            for (int v : pred.labels) {
                ++tot;
                if (v == k) ++hit;
            }
        }
        diag[k] = double(hit) / double(tot);
    }
    return diag;
}

std::string OracleModel::hash_hex() const {
    std::vector<double> blob;
    for (double v : scales) blob.push_back(v);
    for (double v : pool_sigmas) blob.push_back(v);
    for (double v : feat_mean) blob.push_back(v);
    for (double v : feat_std) blob.push_back(v);
    for (double v : feat_weight) blob.push_back(v);
    for (const auto& c : centroids)
        for (double v : c) blob.push_back(v);
    for (const auto& c : mix_centroids)
        for (double v : c) blob.push_back(v);
    blob.push_back(double(vote_radius));
    blob.push_back(double(calib_seed));
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(blob.data(), blob.size() * sizeof(double))));
    return buf;
}

}  // namespace disc
