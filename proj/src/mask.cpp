#include "disc/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace disc {

namespace {

void check_dims(int h, int w) {
    if (h <= 0 || w <= 0)
        throw std::invalid_argument("mask dims must be positive, got " + std::to_string(h) + "x" +
                                    std::to_string(w));
}

void check_label(int v) {
    if (v < 0 || v >= kNumLabels)
        throw std::invalid_argument("label " + std::to_string(v) + " outside {0.." +
                                    std::to_string(kNumLabels - 1) + "}");
}

}  // namespace

LabelMask::LabelMask(int h_, int w_, int fill) : h(h_), w(w_) {
    check_dims(h_, w_);
    check_label(fill);
    labels.assign(std::size_t(h) * w, fill);
}

LabelMask::LabelMask(int h_, int w_, std::vector<int> labels_) : h(h_), w(w_), labels(std::move(labels_)) {
    check_dims(h_, w_);
    if (labels.size() != std::size_t(h) * w)
        throw std::invalid_argument("mask grid size mismatch");
    for (int v : labels) check_label(v);
}

bool LabelMask::is_constant() const {
    for (int v : labels)
        if (v != labels[0]) return false;
    return true;
}

std::vector<int> LabelMask::present_labels() const {
    auto counts = area_counts();
    std::vector<int> out;
    for (int k = 0; k < kNumLabels; ++k)
        if (counts[k] > 0) out.push_back(k);
    return out;
}

std::vector<std::int64_t> LabelMask::area_counts() const {
    std::vector<std::int64_t> counts(kNumLabels, 0);
    for (int v : labels) ++counts[v];
    return counts;
}

LabelMask downsample_mask(const LabelMask& m, int factor) {
    if (factor < 1 || m.h % factor != 0 || m.w % factor != 0)
        throw std::invalid_argument("downsample_mask: dims not divisible by factor");
    LabelMask out(m.h / factor, m.w / factor, 0);
    for (int i = 0; i < out.h; ++i)
        for (int j = 0; j < out.w; ++j) out.at(i, j) = m.at(i * factor, j * factor);
    return out;
}

FreqShapeMask to_freq_shape(const LabelMask& m) {
    auto counts = m.area_counts();
    std::vector<int> order;  // labels present, to be sorted by area desc
    for (int k = 0; k < kNumLabels; ++k)
        if (counts[k] > 0) order.push_back(k);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return counts[a] > counts[b]; });

    std::vector<int> label_to_rank(kNumLabels, -1);
    for (std::size_t r = 0; r < order.size(); ++r) label_to_rank[order[r]] = int(r);

    FreqShapeMask out;
    out.h = m.h;
    out.w = m.w;
    out.n_ranks = int(order.size());
    out.ranks.resize(m.labels.size());
    for (std::size_t i = 0; i < m.labels.size(); ++i) out.ranks[i] = label_to_rank[m.labels[i]];
    return out;
}

LabelMask assign_labels(const FreqShapeMask& shape, const std::vector<double>& weights, Rng& rng) {
    if (int(weights.size()) != kNumLabels)
        throw std::invalid_argument("assign_labels: weights must have " +
                                    std::to_string(kNumLabels) + " entries");
    double wsum = 0.0;
    for (double wv : weights) {
        if (wv < 0.0) throw std::invalid_argument("assign_labels: negative weight");
        wsum += wv;
    }
    if (std::fabs(wsum - 1.0) > 1e-9)
        throw std::invalid_argument("assign_labels: weights must sum to 1");
    if (shape.n_ranks > kNumLabels)
        throw std::invalid_argument("assign_labels: more ranks than labels");

    std::vector<int> remaining;
    for (int k = 0; k < kNumLabels; ++k) remaining.push_back(k);
    std::vector<int> rank_to_label(shape.n_ranks, -1);
    for (int r = 0; r < shape.n_ranks; ++r) {
        double mass = 0.0;
        for (int k : remaining) mass += weights[k];
        std::size_t pick = 0;
        if (mass <= 0.0) {
            pick = std::size_t(rng.uniform_int(0, std::int64_t(remaining.size()) - 1));
        } else {
            const double u = rng.uniform01() * mass;  // u in (0, mass]
            double cum = 0.0;
            pick = remaining.size() - 1;
            for (std::size_t idx = 0; idx < remaining.size(); ++idx) {
                cum += weights[remaining[idx]];
                if (u <= cum) {
                    pick = idx;
                    break;
                }
            }
        }
        rank_to_label[r] = remaining[pick];
        remaining.erase(remaining.begin() + pick);
    }

    LabelMask out(shape.h, shape.w, 0);
    for (std::size_t i = 0; i < shape.ranks.size(); ++i)
        out.labels[i] = rank_to_label[shape.ranks[i]];
    return out;
}

std::vector<FreqShapeMask> make_shape_pool(int count, int h, int w, std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("make_shape_pool: count must be >= 1");
    check_dims(h, w);
    std::vector<FreqShapeMask> pool;
    pool.reserve(count);
    Rng base(seed);
    for (int s = 0; s < count; ++s) {
        Rng rng = base.substream("shape", std::uint64_t(s));
        const int regions = int(rng.uniform_int(1, 4));
        // Each region scores by a smooth bump around a random center plus a
        // low-frequency cosine perturbation; the argmax partitions the tile
        // into organic blobs.
        struct RegionField {
            double cu, cv, inv_s2;
            double a1, fx1, fy1, p1;
            double a2, fx2, fy2, p2;
        };
        std::vector<RegionField> fields(regions);
        for (auto& f : fields) {
            f.cu = rng.uniform(0.1, 0.9);
            f.cv = rng.uniform(0.1, 0.9);
            const double scale = rng.uniform(0.35, 0.8);
            f.inv_s2 = 1.0 / (scale * scale);
            f.a1 = rng.uniform(0.05, 0.35);
            f.fx1 = double(rng.uniform_int(1, 3));
            f.fy1 = double(rng.uniform_int(1, 3));
            f.p1 = rng.uniform(0.0, 2.0 * M_PI);
            f.a2 = rng.uniform(0.05, 0.2);
            f.fx2 = double(rng.uniform_int(2, 5));
            f.fy2 = double(rng.uniform_int(2, 5));
            f.p2 = rng.uniform(0.0, 2.0 * M_PI);
        }
        LabelMask region_ids(h, w, 0);
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                const double v = (i + 0.5) / h;
                const double u = (j + 0.5) / w;
                int best = 0;
                double best_score = -1e300;
                for (int r = 0; r < regions; ++r) {
                    const auto& f = fields[r];
                    const double du = u - f.cu;
                    const double dv = v - f.cv;
                    double score = -(du * du + dv * dv) * f.inv_s2;
                    score += f.a1 * std::cos(2.0 * M_PI * (f.fx1 * u + f.fy1 * v) + f.p1);
                    score += f.a2 * std::cos(2.0 * M_PI * (f.fx2 * u + f.fy2 * v) + f.p2);
                    if (score > best_score) {
                        best_score = score;
                        best = r;
                    }
                }
                region_ids.at(i, j) = best;
            }
        }
        pool.push_back(to_freq_shape(region_ids));
    }
    return pool;
}

std::vector<std::int64_t> aggregate_areas(const TileSetSpec& set) {
    std::vector<std::int64_t> agg(kNumLabels, 0);
    for (const auto& m : set.masks) {
        auto c = m.area_counts();
        for (int k = 0; k < kNumLabels; ++k) agg[k] += c[k];
    }
    return agg;
}

TileSetSpec sample_tileset(int primary, int secondary, std::uint64_t seed,
                           const std::vector<FreqShapeMask>& shape_pool) {
    check_label(primary);
    check_label(secondary);
    if (primary != 0 && primary == secondary)
        throw std::invalid_argument("sample_tileset: primary == secondary only allowed for label 0");
    if (primary == 0 && secondary != 0)
        throw std::invalid_argument("sample_tileset: Non-Cancer sets carry no secondary label");
    if (shape_pool.empty()) throw std::invalid_argument("sample_tileset: empty shape pool");

    Rng rng(seed);
    TileSetSpec set;
    set.primary = primary;
    set.secondary = secondary;
    set.seed = seed;
    const int n = int(rng.uniform_int(20, 100));
    const int h = shape_pool.front().h;
    const int w = shape_pool.front().w;

    if (primary == 0) {
        set.masks.assign(n, LabelMask(h, w, 0));
        return set;
    }

    const int max_attempts = 200;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        set.masks.clear();
        for (int i = 0; i < n; ++i) {
            const auto& shape =
                shape_pool[std::size_t(rng.uniform_int(0, std::int64_t(shape_pool.size()) - 1))];
            const double wp = rng.uniform(0.45, 0.7);
            const double ws = rng.uniform(0.2, std::min(0.35, 1.0 - wp));
            std::vector<double> weights(kNumLabels, 0.0);
            weights[primary] = wp;
            weights[secondary] = ws;
            int n_rest = 0;
            for (int k = 0; k < kNumLabels; ++k)
                if (k != primary && k != secondary) ++n_rest;
            for (int k = 0; k < kNumLabels; ++k)
                if (k != primary && k != secondary) weights[k] = (1.0 - wp - ws) / n_rest;
            set.masks.push_back(assign_labels(shape, weights, rng));
        }
        auto agg = aggregate_areas(set);
        bool ordered = agg[primary] >= agg[secondary];
        for (int k = 0; k < kNumLabels && ordered; ++k)
            if (k != primary && k != secondary) ordered = agg[secondary] >= agg[k];
        if (ordered) return set;
    }
    throw std::runtime_error("sample_tileset: area ordering not reached after " +
                             std::to_string(max_attempts) + " attempts");
}

std::vector<BalanceRequest> balance_plan(const std::vector<std::vector<int>>& existing_counts,
                                         int target) {
    if (target < 0) throw std::invalid_argument("balance_plan: target must be >= 0");
    if (int(existing_counts.size()) != kNumLabels)
        throw std::invalid_argument("balance_plan: need one row per primary grade");
    std::vector<BalanceRequest> out;
    for (int p = 0; p < kNumLabels; ++p) {
        if (int(existing_counts[p].size()) != kNumLabels)
            throw std::invalid_argument("balance_plan: need one column per secondary grade");
        long existing = 0;
        for (int s = 0; s < kNumLabels; ++s) {
            if (existing_counts[p][s] < 0) throw std::invalid_argument("balance_plan: negative count");
            existing += existing_counts[p][s];
        }
        const int deficit = int(std::max<long>(0, target - existing));
        if (deficit == 0) continue;
        std::vector<int> secondaries;
        if (p == 0) {
            secondaries = {0};
        } else {
            for (int s = 1; s < kNumLabels; ++s)
                if (s != p) secondaries.push_back(s);
        }
        const int base = deficit / int(secondaries.size());
        int extra = deficit % int(secondaries.size());
        for (int s : secondaries) {
            int n = base + (extra > 0 ? 1 : 0);
            if (extra > 0) --extra;
            if (n > 0) out.push_back({p, s, n});
        }
    }
    return out;
}

}  // namespace disc
