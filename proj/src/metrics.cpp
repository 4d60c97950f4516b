#include "scnfusion/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace scnfusion {

Confusion confusion_matrix(const std::vector<int>& labels,
                           const std::vector<int>& predictions) {
    if (labels.size() != predictions.size())
        throw DataError("confusion_matrix: size mismatch");
    Confusion cm;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1)
            predictions[i] == 1 ? ++cm.tp : ++cm.fn;
        else
            predictions[i] == 1 ? ++cm.fp : ++cm.tn;
    }
    return cm;
}

double auc_mann_whitney(const std::vector<int>& labels,
                        const std::vector<double>& scores) {
    size_t n = labels.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Midranks, then U from the positive-class rank sum.
    std::vector<double> rank(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        double r = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (size_t k = i; k <= j; ++k) rank[order[k]] = r;
        i = j + 1;
    }
    double rank_sum_pos = 0.0;
    long npos = 0, nneg = 0;
    for (size_t k = 0; k < n; ++k) {
        if (labels[k] == 1) {
            rank_sum_pos += rank[k];
            ++npos;
        } else {
            ++nneg;
        }
    }
    if (npos == 0 || nneg == 0)
        throw DataError("AUC undefined: single-class labels");
    double u = rank_sum_pos - static_cast<double>(npos) * (npos + 1) / 2.0;
    return u / (static_cast<double>(npos) * nneg);
}

MetricSet compute_metrics(const std::vector<int>& labels,
                          const std::vector<int>& predictions,
                          const std::vector<double>& scores) {
    MetricSet m;
    m.cm = confusion_matrix(labels, predictions);
    bool has_pos = (m.cm.tp + m.cm.fn) > 0;
    bool has_neg = (m.cm.tn + m.cm.fp) > 0;
    if (!has_pos || !has_neg) {
        m.valid = false;
        return m;
    }
    m.valid = true;

    double tpr = static_cast<double>(m.cm.tp) / (m.cm.tp + m.cm.fn);
    double tnr = static_cast<double>(m.cm.tn) / (m.cm.tn + m.cm.fp);
    m.balanced_accuracy = 0.5 * (tpr + tnr);

    // Per-class precision/recall/F1; class 1 = ADHD, class 0 = HC.
    double prec1 = (m.cm.tp + m.cm.fp) > 0
                       ? static_cast<double>(m.cm.tp) / (m.cm.tp + m.cm.fp)
                       : 0.0;
    double prec0 = (m.cm.tn + m.cm.fn) > 0
                       ? static_cast<double>(m.cm.tn) / (m.cm.tn + m.cm.fn)
                       : 0.0;
    double rec1 = tpr, rec0 = tnr;
    auto f1_of = [](double p, double r) {
        return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    };
    double f1_1 = f1_of(prec1, rec1), f1_0 = f1_of(prec0, rec0);

    double sup1 = static_cast<double>(m.cm.tp + m.cm.fn);
    double sup0 = static_cast<double>(m.cm.tn + m.cm.fp);
    double total = sup0 + sup1;
    m.precision_weighted = (sup1 * prec1 + sup0 * prec0) / total;
    m.recall_weighted = (sup1 * rec1 + sup0 * rec0) / total;
    m.f1_weighted = (sup1 * f1_1 + sup0 * f1_0) / total;
    m.precision_macro = 0.5 * (prec1 + prec0);
    m.recall_macro = 0.5 * (rec1 + rec0);
    m.f1_macro = 0.5 * (f1_1 + f1_0);

    m.auc = auc_mann_whitney(labels, scores);
    return m;
}

std::vector<std::pair<double, double>> roc_points(const std::vector<int>& labels,
                                                  const std::vector<double>& scores) {
    std::vector<size_t> order(labels.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] > scores[b]; });
    double npos = 0, nneg = 0;
    for (int y : labels) (y == 1 ? npos : nneg) += 1.0;
    if (npos == 0 || nneg == 0) throw DataError("ROC undefined: single-class labels");

    std::vector<std::pair<double, double>> pts;
    pts.emplace_back(0.0, 0.0);
    double tp = 0, fp = 0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;  // batch score ties into one step
        while (j + 1 < order.size() &&
               scores[order[j + 1]] == scores[order[i]])
            ++j;
        for (size_t k = i; k <= j; ++k)
            (labels[order[k]] == 1 ? tp : fp) += 1.0;
        pts.emplace_back(fp / nneg, tp / npos);
        i = j + 1;
    }
    return pts;
}

EnsembleResult ensemble_vote(const std::vector<std::vector<int>>& per_seed_preds,
                             const std::vector<std::vector<double>>& per_seed_probs) {
    size_t n_seeds = per_seed_preds.size();
    if (n_seeds == 0 || n_seeds % 2 == 0)
        throw ConfigError("ensemble_vote: seed count must be odd");
    if (per_seed_probs.size() != n_seeds)
        throw DataError("ensemble_vote: prediction/probability seed mismatch");
    size_t m = per_seed_preds[0].size();
    EnsembleResult res;
    res.labels.resize(m);
    res.mean_probs.resize(m);
    for (size_t i = 0; i < m; ++i) {
        int votes = 0;
        double psum = 0.0;
        for (size_t s = 0; s < n_seeds; ++s) {
            if (per_seed_preds[s].size() != m || per_seed_probs[s].size() != m)
                throw DataError("ensemble_vote: ragged input");
            votes += per_seed_preds[s][i];
            psum += per_seed_probs[s][i];
        }
        res.labels[i] = votes * 2 > static_cast<int>(n_seeds) ? 1 : 0;
        res.mean_probs[i] = psum / static_cast<double>(n_seeds);
    }
    return res;
}

}  // namespace scnfusion
