#pragma once

#include <cstdint>
#include <vector>

#include "disc/rng.hpp"

namespace disc {

// Number of region labels: 0 = Non-Cancer analog, 1..3 = graded texture classes.
inline constexpr int kNumLabels = 4;

// Per-pixel label grid, row-major, values in {0..kNumLabels-1}.
struct LabelMask {
    int h = 0, w = 0;
    std::vector<int> labels;

    LabelMask() = default;
    LabelMask(int h_, int w_, int fill = 0);
    LabelMask(int h_, int w_, std::vector<int> labels_);

    int at(int i, int j) const { return labels[std::size_t(i) * w + j]; }
    int& at(int i, int j) { return labels[std::size_t(i) * w + j]; }
    bool is_constant() const;
    std::vector<int> present_labels() const;      // ascending
    std::vector<std::int64_t> area_counts() const;  // size kNumLabels
};

// Same geometry, cells hold frequency ranks: 0 = largest region. Only ranks
// 0..n_ranks-1 appear.
struct FreqShapeMask {
    int h = 0, w = 0;
    int n_ranks = 0;
    std::vector<int> ranks;

    int at(int i, int j) const { return ranks[std::size_t(i) * w + j]; }
};

// Bag of masks standing in for one slide, with its grading pair.
struct TileSetSpec {
    int primary = 0;
    int secondary = 0;
    std::vector<LabelMask> masks;
    std::uint64_t seed = 0;
};

// Nearest-neighbor downsample keeping the top-left sample of each cell:
// out(i,j) = m(factor*i, factor*j).
LabelMask downsample_mask(const LabelMask& m, int factor);

// Relabel regions by descending area; ties broken by ascending label id.
FreqShapeMask to_freq_shape(const LabelMask& m);

// Injective rank -> label draw: rank 0 sampled proportional to weights, each
// following rank from the renormalized remainder; if the remaining mass is
// zero, the draw is uniform over the unused labels.
LabelMask assign_labels(const FreqShapeMask& shape, const std::vector<double>& weights, Rng& rng);

// Procedurally generated smooth partitions of the tile into 1..4 regions.
std::vector<FreqShapeMask> make_shape_pool(int count, int h, int w, std::uint64_t seed);

// Draw one tile set. primary == 0 emits all-zero masks (the Non-Cancer label
// is exclusive); otherwise labels are assigned with weights biased so that the
// aggregate area ordering primary >= secondary >= every other label holds
// (enforced by bounded resampling). Reproducible from `seed` alone.
TileSetSpec sample_tileset(int primary, int secondary, std::uint64_t seed,
                           const std::vector<FreqShapeMask>& shape_pool);

// Aggregate per-label pixel counts over a whole set.
std::vector<std::int64_t> aggregate_areas(const TileSetSpec& set);

struct BalanceRequest {
    int primary = 0;
    int secondary = 0;
    int n_sets = 0;
};

// Per primary grade, request max(0, target - existing) additional sets,
// split as evenly as possible across that grade's secondary options
// (grade 0 pairs only with itself; grades 1..3 pair with the other two).
std::vector<BalanceRequest> balance_plan(const std::vector<std::vector<int>>& existing_counts,
                                         int target);

}  // namespace disc
