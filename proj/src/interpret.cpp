#include "scnfusion/interpret.hpp"

#include <algorithm>
#include <cmath>

#include "scnfusion/preprocess.hpp"

namespace scnfusion {

Matrix gradcam_scn(DuScnFusionNet& model, const Tensor& scn, const Tensor& aux,
                   int target_class) {
    if (scn.shape.size() != 4 || scn.shape[0] != 1)
        throw DataError("gradcam: expects a single subject (1,2,R,R)");
    const int n_rois = scn.shape[2];
    if (target_class < 0 || target_class >= model.config().n_classes)
        throw ConfigError("gradcam: target class out of range");

    model.zero_grads();
    Tensor logits = model.forward(scn, aux, Mode::Eval);
    Tensor dlogits(logits.shape);
    dlogits.at2(0, target_class) = 1.0;
    model.backward(dlogits, /*capture_conv3_grad=*/true);

    const Tensor& act = model.conv3_activation();
    const Tensor& grad = model.conv3_grad();
    const int channels = act.shape[1];
    const int h = act.shape[2], w = act.shape[3];

    // Channel weights: spatial mean of the gradient; combine and rectify.
    std::vector<double> cam(static_cast<size_t>(h) * w, 0.0);
    for (int k = 0; k < channels; ++k) {
        double wk = 0;
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) wk += grad.at4(0, k, i, j);
        wk /= static_cast<double>(h) * w;
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                cam[static_cast<size_t>(i) * w + j] += wk * act.at4(0, k, i, j);
    }
    for (double& v : cam) v = std::max(v, 0.0);

    // Nearest-neighbor upsample back to the ROI grid.
    Matrix out(n_rois, n_rois);
    for (int i = 0; i < n_rois; ++i) {
        int si = std::min(i * h / n_rois, h - 1);
        for (int j = 0; j < n_rois; ++j) {
            int sj = std::min(j * w / n_rois, w - 1);
            out.at(i, j) = cam[static_cast<size_t>(si) * w + sj];
        }
    }
    return out;
}

std::vector<double> roi_scores(const Matrix& map) {
    const int n = map.rows;
    std::vector<double> scores(n, 0.0);
    for (int r = 0; r < n; ++r) {
        double row = 0, col = 0;
        for (int j = 0; j < n; ++j) {
            row += map.at(r, j);
            col += map.at(j, r);
        }
        scores[r] = 0.5 * (row + col) / n;
    }
    double mx = *std::max_element(scores.begin(), scores.end());
    if (mx > 0)
        for (double& s : scores) s /= mx;
    return scores;
}

RoiImportance select_biomarkers(const std::vector<std::vector<double>>& subject_scores,
                                double percentile) {
    if (subject_scores.empty())
        throw DataError("biomarkers: no subject score vectors");
    const size_t n = subject_scores.front().size();
    RoiImportance out;
    out.scores.assign(n, 0.0);
    for (const auto& s : subject_scores) {
        if (s.size() != n)
            throw DataError("biomarkers: inconsistent score vector length");
        for (size_t i = 0; i < n; ++i) out.scores[i] += s[i];
    }
    for (double& v : out.scores) v /= static_cast<double>(subject_scores.size());
    double mx = *std::max_element(out.scores.begin(), out.scores.end());
    if (mx > 0)
        for (double& v : out.scores) v /= mx;

    out.threshold = quantile(out.scores, percentile);
    for (size_t i = 0; i < n; ++i)
        if (out.scores[i] > out.threshold) out.selected.push_back(static_cast<int>(i));
    return out;
}

StatReport roi_stat_tests(const Matrix& group_a, const Matrix& group_b) {
    if (group_a.cols != group_b.cols)
        throw DataError("roi stats: column count mismatch between groups");
    const int n_rois = group_a.cols;
    StatReport report;
    report.rows.resize(n_rois);
    std::vector<double> raw_p(n_rois, 1.0);
    for (int r = 0; r < n_rois; ++r) {
        std::vector<double> a(group_a.rows), b(group_b.rows);
        for (int i = 0; i < group_a.rows; ++i) a[i] = group_a.at(i, r);
        for (int i = 0; i < group_b.rows; ++i) b[i] = group_b.at(i, r);
        RoiStatRow& row = report.rows[r];
        row.roi = r;
        WelchResult wt = welch_t_test(a, b);
        row.t = wt.t;
        row.df = wt.df;
        row.p_raw = wt.p;
        raw_p[r] = wt.p;
        CohensD d = cohens_d(a, b);
        row.cohens_d = d.d;
        row.d_valid = d.valid;
        if (d.valid && std::abs(d.d) > 0.8) ++report.large_effect_count;
        MannWhitneyResult mw = mann_whitney_u(a, b);
        row.mw_u = mw.u;
        row.mw_p = mw.p;
    }
    std::vector<double> bonf = bonferroni(raw_p);
    std::vector<double> bh = benjamini_hochberg(raw_p);
    for (int r = 0; r < n_rois; ++r) {
        report.rows[r].p_bonferroni = bonf[r];
        report.rows[r].q_bh = bh[r];
    }
    return report;
}

KruskalWallisResult network_kruskal_wallis(const std::vector<double>& per_roi_values,
                                           const std::vector<int>& network_of) {
    if (per_roi_values.size() != network_of.size())
        throw DataError("network test: value/group length mismatch");
    return kruskal_wallis(per_roi_values, network_of);
}

}  // namespace scnfusion
