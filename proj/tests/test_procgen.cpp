#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <vector>

#include "disc/mask.hpp"
#include "disc/procgen.hpp"
#include "disc/rng.hpp"
#include "doctest.h"

using namespace disc;

namespace {

const OracleModel& shared_oracle() {
    static const OracleModel model = make_default_oracle();
    return model;
}

LabelMask split_mask(int h, int w, int left, int right) {
    LabelMask m(h, w, left);
    for (int i = 0; i < h; ++i)
        for (int j = w / 2; j < w; ++j) m.at(i, j) = right;
    return m;
}

bool same_data(const Tensor& a, const Tensor& b) {
    return a.dims == b.dims &&
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("blur2d preserves constants and mass") {
    Tensor c = Tensor::full({16, 16}, 0.37);
    Tensor bc = blur2d(c, 2.5);
    for (double v : bc.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));

    // interior impulse response is symmetric and non-negative
    Tensor imp = Tensor::zeros({17, 17});
    imp.at2(8, 8) = 1.0;
    Tensor r = blur2d(imp, 1.5);
    double total = 0.0;
    for (int i = 0; i < 17; ++i)
        for (int j = 0; j < 17; ++j) {
            CHECK(r.at2(i, j) >= 0.0);
            CHECK(r.at2(i, j) == doctest::Approx(r.at2(16 - i, 16 - j)).epsilon(1e-12));
            total += r.at2(i, j);
        }
    // window renormalization at borders inflates tail mass slightly
    CHECK(total == doctest::Approx(1.0).epsilon(1e-3));

    CHECK_THROWS(blur2d(Tensor::zeros({3, 3, 3}), 1.0));
    CHECK(same_data(blur2d(c, 0.0), c));
}

TEST_CASE("gen_field shape, range, determinism") {
    for (int label = 0; label < kNumLabels; ++label) {
        Rng a(123), b(123), c(124);
        Tensor fa = gen_field(label, 48, 64, a, {});
        Tensor fb = gen_field(label, 48, 64, b, {});
        Tensor fc = gen_field(label, 48, 64, c, {});
        CHECK(fa.dims == std::vector<int>{48, 64});
        for (double v : fa.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        CHECK(same_data(fa, fb));
        CHECK_FALSE(same_data(fa, fc));
    }
    Rng r(1);
    CHECK_THROWS(gen_field(-1, 8, 8, r, {}));
    CHECK_THROWS(gen_field(kNumLabels, 8, 8, r, {}));
}

TEST_CASE("gen_texture emits an rgb tile in range") {
    Rng rng(77);
    Tensor t = gen_texture(2, 32, 40, rng, {});
    CHECK(t.dims == std::vector<int>{3, 32, 40});
    for (double v : t.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("gen_pair single-label path matches gen_texture") {
    TextureSpec spec;
    LabelMask m(32, 32, 3);
    Rng rng(55);
    Tensor pair = gen_pair(m, rng, spec);
    Rng rng2(55);
    Rng sub = rng2.substream("tex", 3);
    Tensor direct = gen_texture(3, 32, 32, sub, spec);
    CHECK(same_data(pair, direct));
}

TEST_CASE("gen_pair is deterministic and mask-sensitive") {
    TextureSpec spec;
    auto m = split_mask(48, 48, 0, 2);
    Rng a(9), b(9);
    Tensor ta = gen_pair(m, a, spec);
    Tensor tb = gen_pair(m, b, spec);
    CHECK(same_data(ta, tb));

    auto m2 = split_mask(48, 48, 0, 1);
    Rng c(9);
    Tensor tc = gen_pair(m2, c, spec);
    CHECK_FALSE(same_data(ta, tc));
}

TEST_CASE("ood_spec scales structure and guards its certified range") {
    TextureSpec base;
    auto same = ood_spec(base, 0.0);
    CHECK(same.ring_radius == base.ring_radius);
    CHECK(same.blob_density == base.blob_density);
    auto shifted = ood_spec(base, 0.2);
    CHECK(shifted.ring_radius == doctest::Approx(base.ring_radius * 1.2));
    CHECK(shifted.smooth_lambda == doctest::Approx(base.smooth_lambda * 1.2));
    CHECK(shifted.blob_density == doctest::Approx(base.blob_density / 1.44));
    // palette moves toward gray
    CHECK(std::abs(shifted.color_lo[0] - 0.5) < std::abs(base.color_lo[0] - 0.5));
    CHECK_THROWS(ood_spec(base, -0.01));
    CHECK_THROWS(ood_spec(base, 0.51));
    CHECK_THROWS(ood_spec(base, 10.0));
}

TEST_CASE("oracle calibration is deterministic and pinned") {
    const OracleModel& m = shared_oracle();
    OracleModel again = make_default_oracle();
    CHECK(m.hash_hex() == again.hash_hex());
    // frozen fingerprint of the canonical calibration; re-pin only after an
    // intentional texture or filter-bank change
    CHECK(m.hash_hex() == "4df73875c7989efe");
    for (double w : m.feat_weight) CHECK(w > 0.0);
    CHECK_THROWS(calibrate_oracle({}, 1, 0, 64));
    CHECK_THROWS(calibrate_oracle({}, 1, 4, 8));
}

TEST_CASE("oracle features are finite even on blank tiles") {
    Tensor blank = Tensor::full({3, 32, 32}, 0.5);
    Tensor feats = oracle_features(blank, shared_oracle());
    CHECK(feats.dims == std::vector<int>{kOracleFeatures, 32, 32});
    for (double v : feats.data) CHECK(std::isfinite(v));
    LabelMask pred = oracle_classify(shared_oracle(), blank);
    LabelMask pred2 = oracle_classify(shared_oracle(), blank);
    CHECK(pred.labels == pred2.labels);
}

TEST_CASE("oracle separates pure patches in distribution") {
    auto diag = oracle_diagonal(shared_oracle(), {}, 20260201, 20, 64);
    for (int k = 0; k < kNumLabels; ++k) {
        INFO("class ", k, " diagonal ", diag[k]);
        CHECK(diag[k] >= 0.98);
    }
}

TEST_CASE("oracle survives a 15% structure shift") {
    auto diag = oracle_diagonal(shared_oracle(), ood_spec({}, 0.15), 20260202, 20, 64);
    for (int k = 0; k < kNumLabels; ++k) {
        INFO("class ", k, " ood diagonal ", diag[k]);
        CHECK(diag[k] >= 0.95);
    }
}

TEST_CASE("boundary_band marks a symmetric halo") {
    auto m = split_mask(8, 8, 0, 1);  // boundary between cols 3 and 4
    auto band1 = boundary_band(m, 1);
    auto band2 = boundary_band(m, 2);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            const bool in1 = j == 3 || j == 4;
            const bool in2 = j >= 2 && j <= 5;
            CHECK(band1[i * 8 + j] == (in1 ? 1 : 0));
            CHECK(band2[i * 8 + j] == (in2 ? 1 : 0));
        }
    // constant mask has no boundary
    auto none = boundary_band(LabelMask(8, 8, 2), 2);
    for (int v : none) CHECK(v == 0);
}

TEST_CASE("two-region tiles agree with their mask away from the boundary") {
    TextureSpec spec;
    const OracleModel& model = shared_oracle();
    Rng base(20260203);
    // the adjacent-band pairs are the hardest; check one easy pair too
    const std::array<std::array<int, 2>, 3> pairs = {{{0, 1}, {0, 2}, {2, 3}}};
    for (const auto& p : pairs) {
        auto m = split_mask(64, 64, p[0], p[1]);
        for (int trial = 0; trial < 5; ++trial) {
            Rng rng = base.substream("pair", std::uint64_t(p[0] * 100 + p[1] * 10 + trial));
            Tensor tile = gen_pair(m, rng, spec);
            std::vector<double> per;
            oracle_agreement(model, tile, m, 2, &per);
            for (int k : p) {
                INFO("pair ", p[0], "|", p[1], " trial ", trial, " label ", k, " agreement ",
                     per[k]);
                CHECK(per[k] >= 0.95);
            }
            for (int k = 0; k < kNumLabels; ++k)
                if (k != p[0] && k != p[1]) CHECK(per[k] == -1.0);
        }
    }
}

TEST_CASE("oracle_agreement validates dims and stays in range") {
    const OracleModel& model = shared_oracle();
    TextureSpec spec;
    Rng rng(31);
    Tensor tile = gen_texture(1, 32, 32, rng, spec);
    CHECK_THROWS(oracle_agreement(model, tile, LabelMask(16, 16, 1), 2));
    double a = oracle_agreement(model, tile, LabelMask(32, 32, 1), 2);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
}
