#pragma once

#include <optional>
#include <string>

#include "scnfusion/features.hpp"
#include "scnfusion/metrics.hpp"
#include "scnfusion/model.hpp"
#include "scnfusion/scn.hpp"

namespace scnfusion {

struct TrainConfig {
    double lr = 1e-4;
    int max_epochs = 50;
    int patience = 15;
    int batch_size = 4;
    double dropout_cnn = 0.2;
    double dropout_aux = 0.3;
    double alpha = 0.55;
    int n_seeds = 5;
    int n_folds = 10;
    double inner_val_frac = 0.1;
    bool class_weighting = true;
    bool no_aux = false;       // ablation: zero aux branch
    bool no_ensemble = false;  // ablation: single seed per fold
    CorrKind corr = CorrKind::Pearson;
    std::uint64_t master_seed = 0;

    int effective_seeds() const { return no_ensemble ? 1 : n_seeds; }
    void validate() const;
};

struct FoldPlan {
    int n_folds = 0;
    std::vector<int> fold_of;  // subject row -> fold
    std::vector<int> test_rows(int fold) const;
    std::vector<int> train_rows(int fold) const;
};

// Deterministic stratified partition; within-class shuffle is seeded.
FoldPlan make_fold_plan(const std::vector<int>& labels, int n_folds,
                        std::uint64_t seed);

// Stratified holdout of `frac` per class; returns (train, val) index subsets.
std::pair<std::vector<int>, std::vector<int>> stratified_split(
    const std::vector<int>& rows, const std::vector<int>& labels, double frac,
    std::uint64_t seed);

struct SeedResult {
    std::vector<double> prob_adhd;  // per test subject
    std::vector<int> pred;
    int best_epoch = -1;
    int epochs_run = 0;
    double best_val_loss = 0;
};

struct FoldInputs {
    // Indexed by global subject row; only rows of this fold are populated.
    const std::vector<ScnTensor>* scn = nullptr;
    const std::vector<std::vector<double>>* aux = nullptr;
    const std::vector<int>* labels = nullptr;
    std::vector<int> train_rows, test_rows;
};

SeedResult train_one_seed(const FoldInputs& inputs, int fold, int seed_index,
                          const TrainConfig& cfg, const ModelConfig& model_cfg,
                          const std::string& checkpoint_path = "");

struct FoldReport {
    int fold = 0;
    std::vector<int> test_rows;
    std::vector<int> test_labels;
    std::vector<SeedResult> seeds;
    EnsembleResult ensemble;
    MetricSet metrics;  // on the ensemble predictions
    bool audit_ok = true;
};

struct CvAggregate {
    // mean/std across valid folds, keyed in a fixed order.
    std::vector<std::string> names;
    std::vector<double> mean, stddev;
    Confusion pooled_cm;
    MetricSet pooled;  // metrics over all ensemble predictions pooled
    int valid_folds = 0;
};

struct CvSummary {
    std::vector<FoldReport> folds;
    CvAggregate aggregate;
    bool audit_ok = true;
    int best_fold = -1;  // highest ensemble balanced accuracy, ties -> lowest
};

CvAggregate aggregate_cv(const std::vector<FoldReport>& folds);

// Full stratified CV with seed ensembling. When checkpoint_dir is nonempty,
// per-(fold,seed) checkpoints are written there. jobs >= 1 bounds the worker
// pool; results are identical for any jobs value.
CvSummary run_cross_validation(const FeatureTable& table, const TrainConfig& cfg,
                               const ModelConfig& model_cfg, int jobs,
                               const std::string& checkpoint_dir = "");

}  // namespace scnfusion
