#include "disc/downstream.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "disc/optim.hpp"

namespace disc {

SlideLabel make_slide_label(int primary, int secondary) {
    if (primary < 0 || primary >= kNumLabels || secondary < 0 || secondary >= kNumLabels)
        throw std::invalid_argument("make_slide_label: grade out of range");
    if ((primary == 0) != (secondary == 0))
        throw std::invalid_argument("make_slide_label: grade 0 only pairs with itself");
    SlideLabel out;
    out.y.assign(kNumLabels, 0);
    out.y[primary] = 1;
    out.y[secondary] = 1;
    return out;
}

VarPtr slide_loss(const SlideLabel& y, const VarPtr& probs) {
    const std::size_t k = probs->value.numel();
    if (y.y.size() != k) throw std::invalid_argument("slide_loss: label/probs size mismatch");
    constexpr double kPin = 1e-12;
    int pinned = 0;
    for (double p : probs->value.data)
        if (p <= 0.0 || p >= 1.0) ++pinned;
    if (pinned > 0)
        std::fprintf(stderr, "slide_loss: pinned %d probabilities to (0,1)\n", pinned);

    Tensor ym(probs->value.dims), ym_inv(probs->value.dims);
    for (std::size_t i = 0; i < k; ++i) {
        ym.data[i] = double(y.y[i]);
        ym_inv.data[i] = 1.0 - double(y.y[i]);
    }
    auto p = clamp_v(probs, kPin, 1.0 - kPin);
    auto hit = mul(Var::constant(ym), log_v(p));
    auto miss = mul(Var::constant(ym_inv), log_v(affine(p, -1.0, 1.0)));
    return affine(mean(add(hit, miss)), -1.0);
}

namespace {

void check_lambda(double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw std::invalid_argument("total_loss: lambda outside [0,1]");
}

}  // namespace

double total_loss(double real_loss, double synth_loss, double lambda) {
    check_lambda(lambda);
    return (1.0 - lambda) * real_loss + lambda * synth_loss;
}

VarPtr total_loss(const VarPtr& real_loss, const VarPtr& synth_loss, double lambda) {
    check_lambda(lambda);
    return add(affine(real_loss, 1.0 - lambda), affine(synth_loss, lambda));
}

double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("auc_roc: score/label size mismatch");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw std::invalid_argument("auc_roc: labels must be 0/1");
        n_pos += std::size_t(l);
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("auc_roc: need both outcomes present");

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // average ranks across ties, 1-based
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
        const double avg = 0.5 * double(i + 1 + j);
        for (std::size_t q = i; q < j; ++q) rank[idx[q]] = avg;
        i = j;
    }
    double rank_sum = 0.0;
    for (std::size_t q = 0; q < n; ++q)
        if (labels[q] == 1) rank_sum += rank[q];
    const double u = rank_sum - 0.5 * double(n_pos) * double(n_pos + 1);
    return u / (double(n_pos) * double(n_neg));
}

namespace {

// Shared batching scheme: per step the active sources draw `batch` indices
// each (real first, then synth); a zero-weight source draws nothing, which
// keeps the stream identical to a run without that source.
std::vector<int> draw_batch(Rng& rng, int n, int batch) {
    std::vector<int> out(static_cast<std::size_t>(batch));
    for (int& i : out) i = int(rng.uniform_int(0, n - 1));
    return out;
}

void check_train_args(std::size_t n_real, std::size_t n_synth, double lambda,
                      const TrainConfig& cfg) {
    check_lambda(lambda);
    if (n_real == 0) throw std::invalid_argument("train: empty real set");
    if (lambda > 0.0 && n_synth == 0)
        throw std::invalid_argument("train: lambda > 0 needs a synthetic set");
    if (cfg.steps < 1 || cfg.batch < 1) throw std::invalid_argument("train: bad steps/batch");
}

// Weighted two-source step loss. Absent terms keep the graph shape of a
// single-source run so the degenerate lambdas stay bitwise faithful.
VarPtr combine_sources(const VarPtr& real_term, const VarPtr& synth_term, double lambda) {
    if (!synth_term) return real_term;
    if (!real_term) return synth_term;
    return total_loss(real_term, synth_term, lambda);
}

}  // namespace

Segmenter train_segmenter(const std::vector<SegExample>& real,
                          const std::vector<SegExample>& synth, double lambda,
                          const TrainConfig& cfg, const SegmenterConfig& mcfg) {
    check_train_args(real.size(), synth.size(), lambda, cfg);
    Segmenter model;
    model.cfg = mcfg;
    Rng root(cfg.seed);
    Rng init_rng = root.substream("seg-init");
    model.init(init_rng);
    Adam opt(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    Rng batches = root.substream("seg-batches");

    auto batch_loss = [&](const std::vector<SegExample>& ds, const std::vector<int>& ids) {
        VarPtr acc;
        for (int i : ids) {
            auto logits = model.forward(Var::constant(ds[std::size_t(i)].img));
            auto li = softmax_xent_pixels(logits, ds[std::size_t(i)].m.labels);
            acc = acc ? add(acc, li) : li;
        }
        return affine(acc, 1.0 / double(ids.size()));
    };

    for (int step = 0; step < cfg.steps; ++step) {
        VarPtr real_term, synth_term;
        if (lambda < 1.0)
            real_term = batch_loss(real, draw_batch(batches, int(real.size()), cfg.batch));
        if (lambda > 0.0)
            synth_term = batch_loss(synth, draw_batch(batches, int(synth.size()), cfg.batch));
        VarPtr loss = combine_sources(real_term, synth_term, lambda);
        model.params.zero_grads();
        backward(loss);
        opt.step(model.params);
    }
    return model;
}

Mil train_mil(const std::vector<MilExample>& real, const std::vector<MilExample>& synth,
              double lambda, const TrainConfig& cfg, const MilConfig& mcfg) {
    check_train_args(real.size(), synth.size(), lambda, cfg);
    for (const auto* ds : {&real, &synth})
        for (const MilExample& e : *ds)
            if (e.tiles.empty()) throw std::invalid_argument("train_mil: empty bag");
    Mil model;
    model.cfg = mcfg;
    Rng root(cfg.seed);
    Rng init_rng = root.substream("mil-init");
    model.init(init_rng);
    Adam opt(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    Rng batches = root.substream("mil-batches");

    auto batch_loss = [&](const std::vector<MilExample>& ds, const std::vector<int>& ids) {
        VarPtr acc;
        for (int i : ids) {
            const MilExample& e = ds[std::size_t(i)];
            std::vector<VarPtr> tiles;
            tiles.reserve(e.tiles.size());
            for (const Tensor& t : e.tiles) tiles.push_back(Var::constant(t));
            auto li = slide_loss(e.label, model.forward_probs(tiles));
            acc = acc ? add(acc, li) : li;
        }
        return affine(acc, 1.0 / double(ids.size()));
    };

    for (int step = 0; step < cfg.steps; ++step) {
        VarPtr real_term, synth_term;
        if (lambda < 1.0)
            real_term = batch_loss(real, draw_batch(batches, int(real.size()), cfg.batch));
        if (lambda > 0.0)
            synth_term = batch_loss(synth, draw_batch(batches, int(synth.size()), cfg.batch));
        VarPtr loss = combine_sources(real_term, synth_term, lambda);
        model.params.zero_grads();
        backward(loss);
        opt.step(model.params);
    }
    return model;
}

std::vector<double> seg_class_accuracy(const Segmenter& model,
                                       const std::vector<SegExample>& test) {
    NoGradGuard ng;
    std::vector<std::int64_t> hit(kNumLabels, 0), total(kNumLabels, 0);
    for (const SegExample& e : test) {
        auto logits = model.forward(Var::constant(e.img));
        const Tensor& lv = logits->value;
        const int h = lv.dims[1], w = lv.dims[2];
        if (h != e.m.h || w != e.m.w)
            throw std::invalid_argument("seg_class_accuracy: mask/logit grid mismatch");
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                int best = 0;
                for (int c = 1; c < kNumLabels; ++c)
                    if (lv.at3(c, i, j) > lv.at3(best, i, j)) best = c;
                const int want = e.m.at(i, j);
                ++total[std::size_t(want)];
                if (best == want) ++hit[std::size_t(want)];
            }
    }
    std::vector<double> acc(kNumLabels, -1.0);
    for (int k = 0; k < kNumLabels; ++k)
        if (total[std::size_t(k)] > 0)
            acc[std::size_t(k)] = double(hit[std::size_t(k)]) / double(total[std::size_t(k)]);
    return acc;
}

MilEval eval_mil(const Mil& model, const std::vector<MilExample>& test) {
    if (test.empty()) throw std::invalid_argument("eval_mil: empty test set");
    NoGradGuard ng;
    MilEval out;
    out.scores.assign(kNumLabels, {});
    std::vector<std::vector<int>> truth;  // per class binary targets
    truth.assign(kNumLabels, {});
    for (const MilExample& e : test) {
        std::vector<VarPtr> tiles;
        tiles.reserve(e.tiles.size());
        for (const Tensor& t : e.tiles) tiles.push_back(Var::constant(t));
        const Tensor probs = model.forward_probs(tiles)->value;
        for (int k = 0; k < kNumLabels; ++k) {
            out.scores[std::size_t(k)].push_back(probs.data[std::size_t(k)]);
            truth[std::size_t(k)].push_back(e.label.y[std::size_t(k)]);
        }
    }
    out.auc.assign(kNumLabels, -1.0);
    double acc = 0.0;
    int defined = 0;
    for (int k = 0; k < kNumLabels; ++k) {
        const auto& t = truth[std::size_t(k)];
        const int pos = std::accumulate(t.begin(), t.end(), 0);
        if (pos == 0 || pos == int(t.size())) continue;
        out.auc[std::size_t(k)] = auc_roc(out.scores[std::size_t(k)], t);
        acc += out.auc[std::size_t(k)];
        ++defined;
    }
    if (defined > 0) out.macro = acc / defined;
    return out;
}

namespace {

// Shortest decimal that round-trips the double; locale-free.
std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

std::string metrics_csv(const std::vector<MetricRow>& rows) {
    std::ostringstream out;
    out << "run_id,source,lambda,split,metric,class,value\n";
    for (const MetricRow& r : rows) {
        out << r.run_id << ',' << r.source << ',' << fmt_double(r.lambda) << ',' << r.split << ','
            << r.metric << ',' << r.cls << ',' << fmt_double(r.value) << '\n';
    }
    return out.str();
}

}  // namespace disc
