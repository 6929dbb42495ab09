#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>
#include <vector>

#include "disc/downstream.hpp"
#include "disc/optim.hpp"
#include "disc/rng.hpp"
#include "doctest.h"

using namespace disc;

namespace {

bool same_data(const Tensor& a, const Tensor& b) {
    return a.dims == b.dims &&
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

bool params_bitwise_equal(const ParamStore& a, const ParamStore& b) {
    auto ia = a.items(), ib = b.items();
    if (ia.size() != ib.size()) return false;
    for (std::size_t i = 0; i < ia.size(); ++i) {
        if (ia[i].first != ib[i].first) return false;
        if (!same_data(ia[i].second->value, ib[i].second->value)) return false;
    }
    return true;
}

// Brute-force pair enumeration: wins count 1, ties 1/2, over all pos/neg pairs.
double auc_oracle(const std::vector<double>& s, const std::vector<int>& y) {
    double credit = 0.0;
    long long pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] != 0) continue;
            ++pairs;
            if (s[i] > s[j])
                credit += 1.0;
            else if (s[i] == s[j])
                credit += 0.5;
        }
    }
    return credit / double(pairs);
}

std::vector<SegExample> rand_seg_set(Rng& rng, int n, int hw, int max_label) {
    std::vector<SegExample> out;
    for (int i = 0; i < n; ++i) {
        Tensor img = Tensor::randn(rng, {3, hw, hw});
        std::vector<int> labels(std::size_t(hw) * hw);
        for (int& l : labels) l = int(rng.uniform_int(0, max_label));
        out.push_back({std::move(img), LabelMask(hw, hw, std::move(labels))});
    }
    return out;
}

std::vector<MilExample> rand_mil_set(Rng& rng, int n, int n_tiles, int hw) {
    std::vector<MilExample> out;
    for (int i = 0; i < n; ++i) {
        MilExample e;
        for (int t = 0; t < n_tiles; ++t) e.tiles.push_back(Tensor::randn(rng, {3, hw, hw}));
        const int p = int(rng.uniform_int(0, kNumLabels - 1));
        const int s = p == 0 ? 0 : int(rng.uniform_int(1, kNumLabels - 1));
        e.label = make_slide_label(p, s);
        out.push_back(std::move(e));
    }
    return out;
}

VarPtr probs_const(std::vector<double> p) {
    const int n = int(p.size());
    Tensor t({n}, std::move(p));
    return Var::constant(t);
}

}  // namespace

TEST_CASE("make_slide_label builds valid multi-label targets") {
    auto benign = make_slide_label(0, 0);
    CHECK(benign.y == std::vector<int>{1, 0, 0, 0});

    auto two = make_slide_label(1, 3);
    CHECK(two.y == std::vector<int>{0, 1, 0, 1});

    auto one = make_slide_label(2, 2);
    CHECK(one.y == std::vector<int>{0, 0, 1, 0});
    CHECK(std::accumulate(one.y.begin(), one.y.end(), 0) == 1);
    CHECK(std::accumulate(two.y.begin(), two.y.end(), 0) == 2);

    // grade 0 only pairs with itself, grades stay in range
    CHECK_THROWS_AS(make_slide_label(0, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_slide_label(2, 0), std::invalid_argument);
    CHECK_THROWS_AS(make_slide_label(-1, 0), std::invalid_argument);
    CHECK_THROWS_AS(make_slide_label(1, kNumLabels), std::invalid_argument);
}

TEST_CASE("slide_loss matches hand values") {
    // single class, y=1, p=0.5 -> ln 2
    auto l = slide_loss(SlideLabel{{1}}, probs_const({0.5}));
    CHECK(l->scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-15));

    // exact-match limits: p at the {0,1} corners pins to 1e-12 away, loss -> 0
    auto zero_lim = slide_loss(SlideLabel{{1, 0}}, probs_const({1.0, 0.0}));
    CHECK(zero_lim->scalar() >= 0.0);
    CHECK(zero_lim->scalar() < 1e-11);

    // near-match without pinning
    auto near = slide_loss(SlideLabel{{0, 1, 0, 0}}, probs_const({1e-9, 1.0 - 1e-9, 1e-9, 1e-9}));
    CHECK(near->scalar() >= 0.0);
    CHECK(near->scalar() < 1e-8);

    // a confident miss costs -log(pin); 1-p cancellation bounds the accuracy
    auto miss = slide_loss(SlideLabel{{0}}, probs_const({1.0}));
    CHECK(miss->scalar() == doctest::Approx(-std::log(1e-12)).epsilon(1e-5));

    // mean over classes: two known terms
    auto mixed = slide_loss(SlideLabel{{1, 0}}, probs_const({0.25, 0.25}));
    const double want = 0.5 * (-std::log(0.25) - std::log(0.75));
    CHECK(mixed->scalar() == doctest::Approx(want).epsilon(1e-14));

    CHECK_THROWS_AS(slide_loss(SlideLabel{{1, 0, 0, 0}}, probs_const({0.5, 0.5, 0.5})),
                    std::invalid_argument);
}

TEST_CASE("slide_loss is non-negative on random inputs") {
    Rng rng(404);
    for (int trial = 0; trial < 50; ++trial) {
        const int p = int(rng.uniform_int(0, kNumLabels - 1));
        const int s = p == 0 ? 0 : int(rng.uniform_int(1, kNumLabels - 1));
        SlideLabel y = make_slide_label(p, s);
        std::vector<double> probs(kNumLabels);
        for (double& v : probs) v = rng.uniform(1e-6, 1.0 - 1e-6);
        auto l = slide_loss(y, probs_const(probs));
        CHECK(l->scalar() >= 0.0);
        CHECK(std::isfinite(l->scalar()));
    }
}

TEST_CASE("slide_loss gradient matches finite differences") {
    Rng rng(808);
    ParamStore store;
    auto w = store.add("w", Tensor::randn(rng, {kNumLabels}));
    SlideLabel y = make_slide_label(1, 2);
    auto f = [&]() { return slide_loss(y, sigmoid_v(w)); };
    auto report = grad_check(f, store.items(), 1e-6);
    CHECK(report.pass);
    CHECK(report.coords_checked == std::size_t(kNumLabels));
}

TEST_CASE("total_loss is the exact convex combination") {
    // degeneracies are exact, not approximate
    CHECK(total_loss(2.25, 7.5, 0.0) == 2.25);
    CHECK(total_loss(2.25, 7.5, 1.0) == 7.5);
    CHECK(total_loss(2.0, 1.0, 0.3) == 1.7);

    CHECK_THROWS_AS(total_loss(1.0, 1.0, -0.1), std::invalid_argument);
    CHECK_THROWS_AS(total_loss(1.0, 1.0, 1.1), std::invalid_argument);

    // graph overload agrees bitwise with the scalar form across the sweep grid
    Rng rng(11);
    const double grid[] = {0.0, 0.05, 0.1, 0.25, 0.3, 0.5, 0.9};
    for (double lam : grid) {
        const double r = rng.uniform(0.0, 3.0), s = rng.uniform(0.0, 3.0);
        auto rv = Var::leaf(Tensor({1}, {r}));
        auto sv = Var::leaf(Tensor({1}, {s}));
        auto tot = total_loss(rv, sv, lam);
        CHECK(tot->scalar() == total_loss(r, s, lam));

        // d/dreal = 1-lambda, d/dsynth = lambda
        backward(tot);
        CHECK(rv->grad.data[0] == 1.0 - lam);
        CHECK(sv->grad.data[0] == lam);
    }

    auto rv = Var::leaf(Tensor({1}, {1.0}));
    auto sv = Var::leaf(Tensor({1}, {1.0}));
    CHECK_THROWS_AS(total_loss(rv, sv, 2.0), std::invalid_argument);
}

TEST_CASE("auc_roc matches hand examples") {
    CHECK(auc_roc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
    CHECK(auc_roc({0.1, 0.2, 0.8, 0.9}, {1, 1, 0, 0}) == 0.0);

    // worked example: pos {0.35, 0.8} vs neg {0.1, 0.4} -> 3 wins of 4 pairs
    CHECK(auc_roc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == 0.75);

    // ties get half credit
    CHECK(auc_roc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == 0.5);
    CHECK(auc_roc({0.2, 0.5, 0.5, 0.9}, {0, 0, 1, 1}) == 0.875);

    CHECK_THROWS_AS(auc_roc({0.1, 0.2}, {1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(auc_roc({0.1, 0.2}, {0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(auc_roc({0.1, 0.2}, {0}), std::invalid_argument);
    CHECK_THROWS_AS(auc_roc({0.1, 0.2}, {0, 2}), std::invalid_argument);
}

TEST_CASE("auc_roc equals the pair-counting oracle on random inputs") {
    Rng rng(515);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = int(rng.uniform_int(2, 30));
        std::vector<double> scores(static_cast<std::size_t>(n));
        const bool quantize = trial % 2 == 0;  // force tie-heavy inputs half the time
        for (double& s : scores) {
            s = rng.uniform01();
            if (quantize) s = std::round(s * 8.0) / 8.0;
        }
        std::vector<int> labels(static_cast<std::size_t>(n));
        int pos = 0;
        do {
            pos = 0;
            for (int& l : labels) pos += (l = int(rng.uniform_int(0, 1)));
        } while (pos == 0 || pos == n);
        CHECK(std::abs(auc_roc(scores, labels) - auc_oracle(scores, labels)) <= 1e-12);
    }
}

TEST_CASE("metrics_csv emits the pinned header and deterministic rows") {
    CHECK(metrics_csv({}) == "run_id,source,lambda,split,metric,class,value\n");

    std::vector<MetricRow> rows;
    rows.push_back({"r1", "real", 0.0, "in_dist", "pixel_acc", "3", 0.75});
    rows.push_back({"r1", "sd-disc", 0.3, "ood", "aucroc", "macro", 0.875});
    const std::string want =
        "run_id,source,lambda,split,metric,class,value\n"
        "r1,real,0,in_dist,pixel_acc,3,0.75\n"
        "r1,sd-disc,0.3,ood,aucroc,macro,0.875\n";
    CHECK(metrics_csv(rows) == want);
    CHECK(metrics_csv(rows) == metrics_csv(rows));
}

TEST_CASE("train_segmenter weighting degeneracies are bitwise") {
    Rng rng(9001);
    auto real = rand_seg_set(rng, 5, 8, kNumLabels - 1);
    auto synth = rand_seg_set(rng, 4, 8, kNumLabels - 1);
    TrainConfig cfg;
    cfg.steps = 3;
    cfg.batch = 2;
    cfg.seed = 7;
    SegmenterConfig mcfg;
    mcfg.base = 2;

    SUBCASE("lambda=0 matches a run never handed the synthetic set") {
        auto a = train_segmenter(real, synth, 0.0, cfg, mcfg);
        auto b = train_segmenter(real, {}, 0.0, cfg, mcfg);
        CHECK(params_bitwise_equal(a.params, b.params));
    }

    SUBCASE("lambda=1 matches a run with the synthetic set as sole source") {
        auto a = train_segmenter(real, synth, 1.0, cfg, mcfg);
        auto b = train_segmenter(synth, {}, 0.0, cfg, mcfg);
        CHECK(params_bitwise_equal(a.params, b.params));
    }

    SUBCASE("same seed repeats bitwise, mixing weight changes the result") {
        auto a = train_segmenter(real, synth, 0.3, cfg, mcfg);
        auto b = train_segmenter(real, synth, 0.3, cfg, mcfg);
        CHECK(params_bitwise_equal(a.params, b.params));
        auto c = train_segmenter(real, {}, 0.0, cfg, mcfg);
        CHECK_FALSE(params_bitwise_equal(a.params, c.params));
    }

    SUBCASE("argument validation") {
        CHECK_THROWS_AS(train_segmenter({}, synth, 0.0, cfg, mcfg), std::invalid_argument);
        CHECK_THROWS_AS(train_segmenter(real, {}, 0.5, cfg, mcfg), std::invalid_argument);
        CHECK_THROWS_AS(train_segmenter(real, synth, -0.2, cfg, mcfg), std::invalid_argument);
        TrainConfig bad = cfg;
        bad.steps = 0;
        CHECK_THROWS_AS(train_segmenter(real, synth, 0.0, bad, mcfg), std::invalid_argument);
    }
}

TEST_CASE("train_mil weighting degeneracies are bitwise") {
    Rng rng(9002);
    auto real = rand_mil_set(rng, 5, 2, 8);
    auto synth = rand_mil_set(rng, 4, 2, 8);
    TrainConfig cfg;
    cfg.steps = 3;
    cfg.batch = 2;
    cfg.seed = 21;
    MilConfig mcfg;
    mcfg.base = 2;
    mcfg.att_dim = 4;

    SUBCASE("lambda=0 matches a run never handed the synthetic set") {
        auto a = train_mil(real, synth, 0.0, cfg, mcfg);
        auto b = train_mil(real, {}, 0.0, cfg, mcfg);
        CHECK(params_bitwise_equal(a.params, b.params));
    }

    SUBCASE("lambda=1 matches a run with the synthetic set as sole source") {
        auto a = train_mil(real, synth, 1.0, cfg, mcfg);
        auto b = train_mil(synth, {}, 0.0, cfg, mcfg);
        CHECK(params_bitwise_equal(a.params, b.params));
    }

    SUBCASE("argument validation") {
        CHECK_THROWS_AS(train_mil({}, synth, 0.0, cfg, mcfg), std::invalid_argument);
        CHECK_THROWS_AS(train_mil(real, {}, 0.4, cfg, mcfg), std::invalid_argument);
        auto holed = real;
        holed[1].tiles.clear();
        CHECK_THROWS_AS(train_mil(holed, synth, 0.0, cfg, mcfg), std::invalid_argument);
    }
}

TEST_CASE("seg_class_accuracy pools per-class rates with absent-class sentinel") {
    Rng rng(77);
    Segmenter model;
    model.cfg.base = 2;
    Rng init = rng.substream("init");
    model.init(init);

    // label 3 never appears in the targets
    auto test = rand_seg_set(rng, 3, 8, kNumLabels - 2);
    auto acc = seg_class_accuracy(model, test);
    REQUIRE(acc.size() == std::size_t(kNumLabels));
    CHECK(acc[std::size_t(kNumLabels) - 1] == -1.0);
    for (int k = 0; k + 1 < kNumLabels; ++k) {
        CHECK(acc[std::size_t(k)] >= 0.0);
        CHECK(acc[std::size_t(k)] <= 1.0);
    }

    // recompute the pooled tallies independently of the helper's bookkeeping
    NoGradGuard ng;
    std::vector<long> hit(std::size_t(kNumLabels), 0), total(std::size_t(kNumLabels), 0);
    for (const auto& e : test) {
        const Tensor lv = model.forward(Var::constant(e.img))->value;
        for (int i = 0; i < e.m.h; ++i)
            for (int j = 0; j < e.m.w; ++j) {
                int best = 0;
                for (int c = 1; c < kNumLabels; ++c)
                    if (lv.at3(c, i, j) > lv.at3(best, i, j)) best = c;
                ++total[std::size_t(e.m.at(i, j))];
                if (best == e.m.at(i, j)) ++hit[std::size_t(e.m.at(i, j))];
            }
    }
    for (int k = 0; k + 1 < kNumLabels; ++k)
        CHECK(acc[std::size_t(k)] == double(hit[std::size_t(k)]) / double(total[std::size_t(k)]));
}

TEST_CASE("eval_mil metrics are invariant to bag ordering") {
    Rng rng(31337);
    Mil model;
    model.cfg.base = 2;
    model.cfg.att_dim = 4;
    Rng init = rng.substream("init");
    model.init(init);

    // every class sees both outcomes across these label pairs
    const int pairs[8][2] = {{0, 0}, {1, 1}, {2, 2}, {3, 3}, {1, 2}, {2, 3}, {1, 3}, {0, 0}};
    std::vector<MilExample> test;
    for (auto& pr : pairs) {
        MilExample e;
        for (int t = 0; t < 3; ++t) e.tiles.push_back(Tensor::randn(rng, {3, 8, 8}));
        e.label = make_slide_label(pr[0], pr[1]);
        test.push_back(std::move(e));
    }

    auto ev = eval_mil(model, test);
    REQUIRE(ev.auc.size() == std::size_t(kNumLabels));
    REQUIRE(ev.scores.size() == std::size_t(kNumLabels));
    for (int k = 0; k < kNumLabels; ++k) {
        CHECK(ev.scores[std::size_t(k)].size() == test.size());
        CHECK(ev.auc[std::size_t(k)] >= 0.0);
        CHECK(ev.auc[std::size_t(k)] <= 1.0);
    }
    CHECK(ev.macro >= 0.0);

    // permute tiles inside every bag; AUC ranks on slide scores do not move
    auto shuffled = test;
    for (auto& e : shuffled) std::rotate(e.tiles.begin(), e.tiles.begin() + 1, e.tiles.end());
    std::reverse(shuffled[0].tiles.begin(), shuffled[0].tiles.end());
    auto ev2 = eval_mil(model, shuffled);
    for (int k = 0; k < kNumLabels; ++k) CHECK(ev.auc[std::size_t(k)] == ev2.auc[std::size_t(k)]);
    CHECK(ev.macro == ev2.macro);

    // a class with a single outcome reports the sentinel and macro skips it
    std::vector<MilExample> no3;
    for (int i = 0; i < 4; ++i) {
        MilExample e;
        e.tiles.push_back(Tensor::randn(rng, {3, 8, 8}));
        e.label = make_slide_label(i % 2 == 0 ? 0 : 1, i % 2 == 0 ? 0 : 1);
        no3.push_back(std::move(e));
    }
    auto ev3 = eval_mil(model, no3);
    CHECK(ev3.auc[2] == -1.0);
    CHECK(ev3.auc[3] == -1.0);
    CHECK(ev3.macro == doctest::Approx(0.5 * (ev3.auc[0] + ev3.auc[1])));

    CHECK_THROWS_AS(eval_mil(model, {}), std::invalid_argument);
}
