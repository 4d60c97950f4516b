#include <algorithm>
#include <set>

#include "doctest.h"
#include "scnfusion/evaluation.hpp"

using namespace scnfusion;

namespace {

std::vector<int> alternating_labels(int n) {
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) labels[i] = i % 2;
    return labels;
}

// Class-separated toy feature table; class 1 gets shifted means and wider IQRs.
FeatureTable toy_table(int n_subjects, int n_rois, std::uint64_t seed) {
    Rng rng(seed);
    FeatureTable table;
    table.n_rois = n_rois;
    for (int i = 0; i < n_subjects; ++i) {
        SubjectFeatures s;
        s.subject_id = "s" + std::to_string(i);
        s.label = i % 2;
        s.roi_means.resize(n_rois);
        s.roi_iqrs.resize(n_rois);
        s.empty_roi.assign(n_rois, 0);
        for (int r = 0; r < n_rois; ++r) {
            s.roi_means[r] = 0.5 + 0.05 * rng.normal() + (s.label ? 0.2 : 0.0);
            s.roi_iqrs[r] = 0.2 + 0.02 * rng.normal() + (s.label ? 0.1 : 0.0);
        }
        s.g_mean = 0.5;
        s.g_std = 0.1;
        s.g_median = 0.5;
        table.subjects.push_back(std::move(s));
    }
    return table;
}

TrainConfig fast_config() {
    TrainConfig cfg;
    cfg.max_epochs = 2;
    cfg.patience = 3;
    cfg.n_seeds = 1;
    cfg.no_ensemble = true;
    cfg.n_folds = 2;
    cfg.inner_val_frac = 0.2;
    cfg.master_seed = 5;
    return cfg;
}

}  // namespace

TEST_CASE("train config validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.n_seeds = 4;  // even: majority vote could tie
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.alpha = 1.2;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.n_folds = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.no_ensemble = true;
    CHECK(cfg.effective_seeds() == 1);
}

TEST_CASE("fold plan is a stratified partition") {
    std::vector<int> labels = alternating_labels(47);
    FoldPlan plan = make_fold_plan(labels, 10, 123);
    // Coverage: every subject lands in exactly one fold.
    for (int f : plan.fold_of) {
        CHECK(f >= 0);
        CHECK(f < 10);
    }
    // Stratification: per-class counts differ by at most 1 across folds.
    for (int cls : {0, 1}) {
        std::vector<int> counts(10, 0);
        for (size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == cls) ++counts[plan.fold_of[i]];
        auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
        CHECK(*hi - *lo <= 1);
    }
    // Determinism and seed sensitivity.
    FoldPlan again = make_fold_plan(labels, 10, 123);
    CHECK(again.fold_of == plan.fold_of);
    FoldPlan other = make_fold_plan(labels, 10, 124);
    CHECK(other.fold_of != plan.fold_of);
    // test/train row partitions agree with fold_of.
    auto test0 = plan.test_rows(0);
    auto train0 = plan.train_rows(0);
    CHECK(test0.size() + train0.size() == labels.size());
    std::set<int> seen(test0.begin(), test0.end());
    for (int r : train0) CHECK(seen.count(r) == 0);
    // Too few subjects for the fold count.
    CHECK_THROWS_AS(make_fold_plan(alternating_labels(8), 10, 1), DataError);
}

TEST_CASE("stratified split holds out the requested fraction per class") {
    std::vector<int> labels = alternating_labels(40);
    std::vector<int> rows(40);
    for (int i = 0; i < 40; ++i) rows[i] = i;
    auto [train, val] = stratified_split(rows, labels, 0.1, 7);
    CHECK(train.size() + val.size() == 40);
    int val0 = 0, val1 = 0;
    for (int r : val) (labels[r] ? val1 : val0) += 1;
    CHECK(val0 == 2);  // round(0.1 * 20)
    CHECK(val1 == 2);
    std::set<int> tset(train.begin(), train.end());
    for (int r : val) CHECK(tset.count(r) == 0);
    auto [train2, val2] = stratified_split(rows, labels, 0.1, 7);
    CHECK(train2 == train);
    CHECK(val2 == val);
}

TEST_CASE("aggregate refuses fewer than two valid folds") {
    std::vector<FoldReport> folds(2);
    folds[0].metrics.valid = false;
    folds[1].metrics.valid = true;
    folds[1].test_labels = {0, 1};
    folds[1].ensemble.labels = {0, 1};
    folds[1].ensemble.mean_probs = {0.2, 0.8};
    CHECK_THROWS_AS(aggregate_cv(folds), DataError);
}

TEST_CASE("small cross-validation runs and is jobs-invariant") {
    FeatureTable table = toy_table(24, 8, 99);
    TrainConfig cfg = fast_config();
    ModelConfig mc;
    mc.n_rois = 8;
    mc.aux_dim = 11;
    mc.conv_filters[0] = 4;
    mc.conv_filters[1] = 6;
    mc.conv_filters[2] = 8;
    mc.scn_fc1 = 8;
    mc.scn_fc2 = 6;
    mc.aux_fc1 = 6;
    mc.aux_fc2 = 4;
    mc.fusion_fc1 = 6;

    CvSummary serial = run_cross_validation(table, cfg, mc, 1);
    CHECK(serial.audit_ok);
    CHECK(serial.folds.size() == 2);
    for (const FoldReport& fr : serial.folds) {
        CHECK(fr.test_rows.size() == 12);
        CHECK(fr.ensemble.labels.size() == 12);
        CHECK(fr.seeds.size() == 1);
        for (double p : fr.ensemble.mean_probs) {
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
        }
    }
    CHECK(serial.best_fold >= 0);

    CvSummary parallel = run_cross_validation(table, cfg, mc, 4);
    for (size_t f = 0; f < serial.folds.size(); ++f) {
        CHECK(parallel.folds[f].ensemble.mean_probs ==
              serial.folds[f].ensemble.mean_probs);
        CHECK(parallel.folds[f].ensemble.labels == serial.folds[f].ensemble.labels);
        CHECK(parallel.folds[f].seeds[0].best_epoch ==
              serial.folds[f].seeds[0].best_epoch);
    }
    CHECK(parallel.aggregate.mean == serial.aggregate.mean);
}

TEST_CASE("a multi-seed ensemble carries one result per seed") {
    FeatureTable table = toy_table(16, 8, 42);
    TrainConfig cfg = fast_config();
    cfg.no_ensemble = false;
    cfg.n_seeds = 3;
    ModelConfig mc;
    mc.n_rois = 8;
    mc.aux_dim = 11;
    mc.conv_filters[0] = 4;
    mc.conv_filters[1] = 6;
    mc.conv_filters[2] = 8;
    mc.scn_fc1 = 8;
    mc.scn_fc2 = 6;
    mc.aux_fc1 = 6;
    mc.aux_fc2 = 4;
    mc.fusion_fc1 = 6;
    CvSummary summary = run_cross_validation(table, cfg, mc, 2);
    for (const FoldReport& fr : summary.folds) {
        CHECK(fr.seeds.size() == 3);
        // Seeds are genuinely different trainings.
        CHECK(fr.seeds[0].prob_adhd != fr.seeds[1].prob_adhd);
    }
}
