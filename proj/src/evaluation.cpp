#include "scnfusion/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <atomic>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

namespace scnfusion {

namespace {

std::uint64_t fold_seed_tag(int fold, int seed_index) {
    return 0x464f4c44ull ^ (static_cast<std::uint64_t>(fold) << 20) ^
           static_cast<std::uint64_t>(seed_index);
}

Tensor gather_scn(const std::vector<ScnTensor>& scn, const std::vector<int>& rows) {
    int R = scn[rows[0]].n_rois;
    Tensor t({static_cast<int>(rows.size()), 2, R, R});
    size_t per = 2 * static_cast<size_t>(R) * R;
    for (size_t i = 0; i < rows.size(); ++i)
        std::copy(scn[rows[i]].data.begin(), scn[rows[i]].data.end(),
                  t.v.begin() + i * per);
    return t;
}

Tensor gather_aux(const std::vector<std::vector<double>>& aux,
                  const std::vector<int>& rows) {
    int dim = static_cast<int>(aux[rows[0]].size());
    Tensor t({static_cast<int>(rows.size()), dim});
    for (size_t i = 0; i < rows.size(); ++i)
        std::copy(aux[rows[i]].begin(), aux[rows[i]].end(),
                  t.v.begin() + i * static_cast<size_t>(dim));
    return t;
}

std::vector<int> gather_labels(const std::vector<int>& labels,
                               const std::vector<int>& rows) {
    std::vector<int> out(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) out[i] = labels[rows[i]];
    return out;
}

struct ModelSnapshot {
    std::vector<std::vector<double>> values;
    std::vector<std::vector<double>> bn_stats;
};

ModelSnapshot take_snapshot(const std::vector<Param*>& params,
                            const std::vector<std::vector<double>*>& bn_stats) {
    ModelSnapshot s;
    for (const Param* p : params) s.values.push_back(p->value.v);
    for (const auto* v : bn_stats) s.bn_stats.push_back(*v);
    return s;
}

void restore_snapshot(const ModelSnapshot& s, const std::vector<Param*>& params,
                      const std::vector<std::vector<double>*>& bn_stats) {
    for (size_t i = 0; i < params.size(); ++i) params[i]->value.v = s.values[i];
    for (size_t i = 0; i < bn_stats.size(); ++i) *bn_stats[i] = s.bn_stats[i];
}

}  // namespace

void TrainConfig::validate() const {
    if (lr <= 0 || max_epochs <= 0 || patience <= 0 || batch_size <= 0)
        throw ConfigError("training hyperparameters must be positive");
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must be in [0,1]");
    if (n_seeds <= 0 || n_seeds % 2 == 0)
        throw ConfigError("n_seeds must be odd for tie-free majority voting");
    if (n_folds < 2) throw ConfigError("n_folds must be >= 2");
    if (inner_val_frac <= 0.0 || inner_val_frac >= 1.0)
        throw ConfigError("inner_val_frac must be in (0,1)");
}

std::vector<int> FoldPlan::test_rows(int fold) const {
    std::vector<int> out;
    for (size_t i = 0; i < fold_of.size(); ++i)
        if (fold_of[i] == fold) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<int> FoldPlan::train_rows(int fold) const {
    std::vector<int> out;
    for (size_t i = 0; i < fold_of.size(); ++i)
        if (fold_of[i] != fold) out.push_back(static_cast<int>(i));
    return out;
}

FoldPlan make_fold_plan(const std::vector<int>& labels, int n_folds,
                        std::uint64_t seed) {
    FoldPlan plan;
    plan.n_folds = n_folds;
    plan.fold_of.assign(labels.size(), -1);
    for (int cls : {0, 1}) {
        std::vector<int> rows;
        for (size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == cls) rows.push_back(static_cast<int>(i));
        if (static_cast<int>(rows.size()) < n_folds)
            throw DataError("class " + std::to_string(cls) + " has only " +
                            std::to_string(rows.size()) + " subjects; reduce n_folds");
        Rng rng(child_seed(seed, 0xf01d0000ull + cls));
        rng.shuffle(rows);
        for (size_t i = 0; i < rows.size(); ++i)
            plan.fold_of[rows[i]] = static_cast<int>(i % n_folds);
    }
    return plan;
}

std::pair<std::vector<int>, std::vector<int>> stratified_split(
    const std::vector<int>& rows, const std::vector<int>& labels, double frac,
    std::uint64_t seed) {
    std::vector<int> train, val;
    for (int cls : {0, 1}) {
        std::vector<int> subset;
        for (int r : rows)
            if (labels[r] == cls) subset.push_back(r);
        if (subset.empty()) continue;
        Rng rng(child_seed(seed, 0x5b1700ull + cls));
        rng.shuffle(subset);
        size_t n_val = std::max<size_t>(
            1, static_cast<size_t>(std::llround(frac * subset.size())));
        if (n_val >= subset.size()) n_val = subset.size() - 1;
        for (size_t i = 0; i < subset.size(); ++i)
            (i < n_val ? val : train).push_back(subset[i]);
    }
    std::sort(train.begin(), train.end());
    std::sort(val.begin(), val.end());
    return {train, val};
}

SeedResult train_one_seed(const FoldInputs& inputs, int fold, int seed_index,
                          const TrainConfig& cfg, const ModelConfig& model_cfg,
                          const std::string& checkpoint_path) {
    const auto& scn = *inputs.scn;
    const auto& aux = *inputs.aux;
    const auto& labels = *inputs.labels;

    std::uint64_t tag = fold_seed_tag(fold, seed_index);
    std::uint64_t base = child_seed(cfg.master_seed, tag);

    auto [inner_train, inner_val] = stratified_split(
        inputs.train_rows, labels, cfg.inner_val_frac, child_seed(base, 0x5b17));

    // Class weights: inverse frequency on the inner training portion.
    std::vector<double> class_weights;
    if (cfg.class_weighting) {
        double n0 = 0, n1 = 0;
        for (int r : inner_train) (labels[r] == 1 ? n1 : n0) += 1.0;
        if (n0 == 0 || n1 == 0)
            throw DataError("training split lost a class; cannot weight");
        double n = n0 + n1;
        class_weights = {n / (2.0 * n0), n / (2.0 * n1)};
    }

    Rng dropout_rng(child_seed(base, 0xd809));
    ModelConfig mc = model_cfg;
    mc.dropout_cnn = cfg.dropout_cnn;
    mc.dropout_aux = cfg.dropout_aux;
    mc.no_aux = cfg.no_aux;
    DuScnFusionNet net(mc, child_seed(base, 0x9e7), &dropout_rng);
    std::vector<Param*> params = net.params();
    Adam adam;
    adam.lr = cfg.lr;
    adam.init(params);

    Rng shuffle_rng(child_seed(base, 0x54f1e));

    auto eval_loss = [&](const std::vector<int>& rows) {
        double total = 0.0, wsum = 0.0;
        for (size_t start = 0; start < rows.size(); start += 16) {
            std::vector<int> chunk(rows.begin() + start,
                                   rows.begin() + std::min(rows.size(), start + 16));
            Tensor logits = net.forward(gather_scn(scn, chunk),
                                        gather_aux(aux, chunk), Mode::Eval);
            auto ce = softmax_crossentropy(logits, gather_labels(labels, chunk),
                                           class_weights);
            double w = 0.0;
            for (int r : chunk)
                w += class_weights.empty() ? 1.0 : class_weights[labels[r]];
            total += ce.loss * w;
            wsum += w;
        }
        return total / wsum;
    };

    SeedResult result;
    double best_loss = std::numeric_limits<double>::infinity();
    ModelSnapshot best;
    std::vector<std::vector<double>*> bn_stats = net.bn_stat_handles();

    std::vector<int> order = inner_train;
    int epochs_since_best = 0;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(cfg.batch_size)) {
            std::vector<int> batch(
                order.begin() + start,
                order.begin() +
                    std::min(order.size(), start + static_cast<size_t>(cfg.batch_size)));
            if (batch.size() < 2) continue;  // batchnorm needs batch >= 2
            net.zero_grads();
            Tensor logits = net.forward(gather_scn(scn, batch),
                                        gather_aux(aux, batch), Mode::Train);
            auto ce = softmax_crossentropy(logits, gather_labels(labels, batch),
                                           class_weights);
            if (!std::isfinite(ce.loss))
                throw NumericError("training loss became non-finite");
            net.backward(ce.dlogits);
            adam.step(params);
        }
        double val_loss = eval_loss(inner_val);
        result.epochs_run = epoch + 1;
        if (val_loss < best_loss) {
            best_loss = val_loss;
            result.best_epoch = epoch;
            best = take_snapshot(params, bn_stats);
            epochs_since_best = 0;
        } else {
            ++epochs_since_best;
            if (epochs_since_best >= cfg.patience) break;
        }
    }
    result.best_val_loss = best_loss;

    // Restore best-epoch weights and running stats.
    restore_snapshot(best, params, bn_stats);

    if (!checkpoint_path.empty()) {
        char manifest[256];
        std::snprintf(manifest, sizeof(manifest),
                      "{\"fold\":%d,\"seed_index\":%d,\"best_epoch\":%d,"
                      "\"epochs_run\":%d,\"n_params\":%zu}",
                      fold, seed_index, result.best_epoch, result.epochs_run,
                      net.parameter_count());
        net.save(checkpoint_path, manifest);
    }

    // Test-fold predictions.
    for (size_t start = 0; start < inputs.test_rows.size(); start += 16) {
        std::vector<int> chunk(
            inputs.test_rows.begin() + start,
            inputs.test_rows.begin() + std::min(inputs.test_rows.size(), start + 16));
        Tensor logits = net.forward(gather_scn(scn, chunk), gather_aux(aux, chunk),
                                    Mode::Eval);
        Matrix probs = softmax(logits);
        for (int i = 0; i < probs.rows; ++i) {
            double p = probs.at(i, 1);
            result.prob_adhd.push_back(p);
            result.pred.push_back(p > 0.5 ? 1 : 0);
        }
    }
    return result;
}

CvAggregate aggregate_cv(const std::vector<FoldReport>& folds) {
    CvAggregate agg;
    agg.names = {"balanced_accuracy", "precision_weighted", "recall_weighted",
                 "f1_weighted",       "precision_macro",    "recall_macro",
                 "f1_macro",          "auc"};
    std::vector<std::vector<double>> cols(agg.names.size());
    std::vector<int> all_labels, all_preds;
    std::vector<double> all_scores;
    for (const FoldReport& fr : folds) {
        agg.pooled_cm.tp += fr.metrics.cm.tp;
        agg.pooled_cm.fp += fr.metrics.cm.fp;
        agg.pooled_cm.tn += fr.metrics.cm.tn;
        agg.pooled_cm.fn += fr.metrics.cm.fn;
        for (size_t i = 0; i < fr.test_labels.size(); ++i) {
            all_labels.push_back(fr.test_labels[i]);
            all_preds.push_back(fr.ensemble.labels[i]);
            all_scores.push_back(fr.ensemble.mean_probs[i]);
        }
        if (!fr.metrics.valid) continue;
        ++agg.valid_folds;
        const MetricSet& m = fr.metrics;
        double vals[] = {m.balanced_accuracy, m.precision_weighted,
                         m.recall_weighted,   m.f1_weighted,
                         m.precision_macro,   m.recall_macro,
                         m.f1_macro,          m.auc};
        for (size_t i = 0; i < cols.size(); ++i) cols[i].push_back(vals[i]);
    }
    if (agg.valid_folds < 2)
        throw DataError("aggregate_cv: needs >= 2 valid folds");
    for (const auto& col : cols) {
        double mean = std::accumulate(col.begin(), col.end(), 0.0) / col.size();
        double ss = 0.0;
        for (double x : col) ss += (x - mean) * (x - mean);
        agg.mean.push_back(mean);
        agg.stddev.push_back(std::sqrt(ss / (col.size() - 1.0)));
    }
    agg.pooled = compute_metrics(all_labels, all_preds, all_scores);
    return agg;
}

CvSummary run_cross_validation(const FeatureTable& table, const TrainConfig& cfg,
                               const ModelConfig& model_cfg, int jobs,
                               const std::string& checkpoint_dir) {
    cfg.validate();
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    std::vector<int> labels;
    for (const auto& s : table.subjects) labels.push_back(s.label);

    FoldPlan plan = make_fold_plan(labels, cfg.n_folds, cfg.master_seed);
    int n_subjects = static_cast<int>(table.subjects.size());
    int n_seeds = cfg.effective_seeds();

    std::vector<std::vector<double>> aux(n_subjects);
    for (int i = 0; i < n_subjects; ++i)
        aux[i] = auxiliary_vector(table.subjects[i]);

    CvSummary summary;
    summary.folds.resize(cfg.n_folds);
    for (int fold = 0; fold < cfg.n_folds; ++fold) {
        FoldReport& fr = summary.folds[fold];
        fr.fold = fold;
        fr.test_rows = plan.test_rows(fold);
        std::vector<int> train_rows = plan.train_rows(fold);
        fr.test_labels = gather_labels(labels, fr.test_rows);

        // Leakage audit: fold-level fitted statistics (group SCN matrices,
        // class weights) may only see training rows.
        std::set<int> train_set(train_rows.begin(), train_rows.end());
        fr.audit_ok = true;
        for (int r : fr.test_rows)
            if (train_set.count(r)) fr.audit_ok = false;

        Matrix group_mu = group_covariance(table.means_of(train_rows), cfg.corr);
        Matrix group_iqr = group_covariance(table.iqrs_of(train_rows), cfg.corr);

        std::vector<ScnTensor> scn(n_subjects);
        for (int r : train_rows)
            scn[r] = build_scn_tensor(table.subjects[r], group_mu, group_iqr,
                                      cfg.alpha);
        for (int r : fr.test_rows)
            scn[r] = build_scn_tensor(table.subjects[r], group_mu, group_iqr,
                                      cfg.alpha);

        FoldInputs inputs;
        inputs.scn = &scn;
        inputs.aux = &aux;
        inputs.labels = &labels;
        inputs.train_rows = train_rows;
        inputs.test_rows = fr.test_rows;

        fr.seeds.resize(n_seeds);
        std::exception_ptr first_error;
        std::mutex error_mutex;
        int workers = std::min(jobs, n_seeds);
        std::atomic<int> next{0};
        auto run_worker = [&]() {
            for (;;) {
                int s = next.fetch_add(1);
                if (s >= n_seeds) return;
                try {
                    std::string ckpt;
                    if (!checkpoint_dir.empty()) {
                        char buf[64];
                        std::snprintf(buf, sizeof(buf), "/fold%02d_seed%d.ckpt",
                                      fold, s);
                        ckpt = checkpoint_dir + buf;
                    }
                    fr.seeds[s] =
                        train_one_seed(inputs, fold, s, cfg, model_cfg, ckpt);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        };
        if (workers == 1) {
            run_worker();
        } else {
            std::vector<std::thread> pool;
            for (int w = 0; w < workers; ++w) pool.emplace_back(run_worker);
            for (auto& t : pool) t.join();
        }
        if (first_error) std::rethrow_exception(first_error);

        std::vector<std::vector<int>> preds;
        std::vector<std::vector<double>> probs;
        for (const SeedResult& sr : fr.seeds) {
            preds.push_back(sr.pred);
            probs.push_back(sr.prob_adhd);
        }
        fr.ensemble = ensemble_vote(preds, probs);
        fr.metrics = compute_metrics(fr.test_labels, fr.ensemble.labels,
                                     fr.ensemble.mean_probs);
        if (!fr.audit_ok) summary.audit_ok = false;
    }

    summary.aggregate = aggregate_cv(summary.folds);
    double best_ba = -1.0;
    for (const FoldReport& fr : summary.folds) {
        if (fr.metrics.valid && fr.metrics.balanced_accuracy > best_ba) {
            best_ba = fr.metrics.balanced_accuracy;
            summary.best_fold = fr.fold;
        }
    }
    return summary;
}

}  // namespace scnfusion
