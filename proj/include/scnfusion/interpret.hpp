#pragma once

#include "scnfusion/model.hpp"
#include "scnfusion/scn.hpp"
#include "scnfusion/stats.hpp"

namespace scnfusion {

// Grad-CAM adapted to the SCN domain: gradients of the target-class logit at
// the final conv block's ReLU output weight its activation maps; the ReLU'd
// weighted sum is upsampled nearest-neighbor back to R x R.
Matrix gradcam_scn(DuScnFusionNet& model, const Tensor& scn, const Tensor& aux,
                   int target_class);

// score_r = (mean of row r + mean of column r) / 2, max-normalized.
std::vector<double> roi_scores(const Matrix& map);

struct RoiImportance {
    std::vector<double> scores;  // averaged across subjects, max-normalized
    double threshold = 0;        // 90th-percentile cut
    std::vector<int> selected;   // strictly above the threshold
};

// Averages per-subject score vectors, re-normalizes, and applies the
// strictly-greater 90th-percentile rule.
RoiImportance select_biomarkers(const std::vector<std::vector<double>>& subject_scores,
                                double percentile = 0.90);

struct RoiStatRow {
    int roi = 0;
    double t = 0, df = 0, p_raw = 1, p_bonferroni = 1, q_bh = 1;
    double cohens_d = 0;
    bool d_valid = false;
    double mw_u = 0, mw_p = 1;
};

struct StatReport {
    std::vector<RoiStatRow> rows;
    int large_effect_count = 0;  // |d| > 0.8
    KruskalWallisResult network_kw;
    bool network_kw_valid = false;
};

// Welch's t per ROI on the chosen descriptor (rows = subjects), with
// Bonferroni and BH corrections, Cohen's d, and Mann-Whitney alongside.
StatReport roi_stat_tests(const Matrix& group_a, const Matrix& group_b);

// Network-level Kruskal-Wallis over per-ROI values grouped by network id.
KruskalWallisResult network_kruskal_wallis(const std::vector<double>& per_roi_values,
                                           const std::vector<int>& network_of);

}  // namespace scnfusion
