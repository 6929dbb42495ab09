#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "disc/mask.hpp"
#include "disc/models.hpp"
#include "disc/tape.hpp"

namespace disc {

// Multi-label slide target: primary and secondary grades set to 1.
// Grade 0 is exclusive, so its slides carry y = e0.
struct SlideLabel {
    std::vector<int> y;  // size kNumLabels, entries in {0,1}
};

// Validates the pairing rules (grade 0 only pairs with itself) and builds
// the binary vector; popcount is 1 for primary==secondary, else 2.
SlideLabel make_slide_label(int primary, int secondary);

// Mean over classes of -[y log p + (1-y) log(1-p)]. Probabilities are
// pinned to [1e-12, 1 - 1e-12] first; a pin (an input at exactly 0 or 1)
// is reported once per call on stderr.
VarPtr slide_loss(const SlideLabel& y, const VarPtr& probs);

// Exact convex combination (1-lambda)*real + lambda*synth.
double total_loss(double real_loss, double synth_loss, double lambda);
VarPtr total_loss(const VarPtr& real_loss, const VarPtr& synth_loss, double lambda);

// Rank-based (Mann-Whitney) AUCROC; tied scores get half credit. Labels are
// 0/1 and both outcomes must be present.
double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Balanced training (pixel segmenter, slide-level MIL classifier).
// ---------------------------------------------------------------------------

struct SegExample {
    Tensor img;   // (3,H,W)
    LabelMask m;  // H x W
};

struct MilExample {
    std::vector<Tensor> tiles;  // each (3,H,W)
    SlideLabel label;
};

struct TrainConfig {
    int steps = 200;
    int batch = 4;  // per source
    double lr = 1e-3;
    std::uint64_t seed = 1;
};

// One optimizer step per cfg.steps: batch losses from each source combined
// as (1-lambda)*real + lambda*synth. A source with weight exactly zero is
// never sampled or evaluated, so a lambda=0 run is bitwise identical to a
// run that was never handed the synthetic set (and lambda=1 to a run with
// the synthetic set as its only source). Throws when lambda > 0 and synth
// is empty, or real is empty.
Segmenter train_segmenter(const std::vector<SegExample>& real,
                          const std::vector<SegExample>& synth, double lambda,
                          const TrainConfig& cfg, const SegmenterConfig& mcfg = {});
Mil train_mil(const std::vector<MilExample>& real, const std::vector<MilExample>& synth,
              double lambda, const TrainConfig& cfg, const MilConfig& mcfg = {});

// ---------------------------------------------------------------------------
// Evaluation.
// ---------------------------------------------------------------------------

// Per-class pixel accuracy of the argmax prediction against the example
// masks, pooled over the whole set; classes with no target pixels get -1.
std::vector<double> seg_class_accuracy(const Segmenter& model,
                                       const std::vector<SegExample>& test);

struct MilEval {
    std::vector<double> auc;                  // per class; -1 where only one outcome exists
    double macro = -1.0;                      // mean over the defined entries
    std::vector<std::vector<double>> scores;  // per-class slide scores, test-set order
};

// One-vs-rest AUCROC of the sigmoid slide scores per class, plus the
// unweighted macro mean.
MilEval eval_mil(const Mil& model, const std::vector<MilExample>& test);

// ---------------------------------------------------------------------------
// Metrics rows (CSV currency of every evaluation command).
// ---------------------------------------------------------------------------

struct MetricRow {
    std::string run_id;
    std::string source;  // "real" or a synthetic checkpoint tag
    double lambda = 0.0;
    std::string split;   // "in_dist", "ood", ...
    std::string metric;  // "pixel_acc", "aucroc", ...
    std::string cls;     // "0".."3" or "macro"
    double value = 0.0;
};

// Header `run_id,source,lambda,split,metric,class,value`, one row per
// measurement, deterministic number formatting.
std::string metrics_csv(const std::vector<MetricRow>& rows);

}  // namespace disc
