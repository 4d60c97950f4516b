#pragma once

#include <vector>

#include "scnfusion/common.hpp"

namespace scnfusion {

struct Confusion {
    long tp = 0, fp = 0, tn = 0, fn = 0;  // positive class = ADHD (1)
    long total() const { return tp + fp + tn + fn; }
};

Confusion confusion_matrix(const std::vector<int>& labels,
                           const std::vector<int>& predictions);

struct MetricSet {
    bool valid = false;  // false when the fold holds a single class
    Confusion cm;
    double balanced_accuracy = 0;
    // Two-class averages, both conventions emitted.
    double precision_weighted = 0, recall_weighted = 0, f1_weighted = 0;
    double precision_macro = 0, recall_macro = 0, f1_macro = 0;
    double auc = 0;
};

// scores are continuous ADHD scores used for AUC (Mann-Whitney, midranks).
MetricSet compute_metrics(const std::vector<int>& labels,
                          const std::vector<int>& predictions,
                          const std::vector<double>& scores);

double auc_mann_whitney(const std::vector<int>& labels,
                        const std::vector<double>& scores);

// (FPR, TPR) points sweeping the score threshold, for ROC export.
std::vector<std::pair<double, double>> roc_points(const std::vector<int>& labels,
                                                  const std::vector<double>& scores);

// Majority vote over per-seed hard labels (odd seed count) plus the mean
// ADHD probability as the ensemble's continuous score.
struct EnsembleResult {
    std::vector<int> labels;
    std::vector<double> mean_probs;
};
EnsembleResult ensemble_vote(const std::vector<std::vector<int>>& per_seed_preds,
                             const std::vector<std::vector<double>>& per_seed_probs);

}  // namespace scnfusion
