#pragma once

#include <span>

#include "scnfusion/features.hpp"

namespace scnfusion {

enum class CorrKind { Pearson, Spearman };

// Pairwise correlation between ROI columns of an N x R feature matrix.
// Zero-variance columns correlate 0 off-diagonal, 1 on the diagonal.
Matrix group_covariance(const Matrix& features, CorrKind kind = CorrKind::Pearson);

// Normalized outer product (f/|f|)(f/|f|)^T; throws on a zero vector.
Matrix individual_scn(std::span<const double> f);

// alpha*group + (1-alpha)*individual, alpha in [0,1].
Matrix blend(const Matrix& group, const Matrix& individual, double alpha);

// Dual-channel subject tensor: channel 0 from roi_means, channel 1 from
// roi_iqrs, both blended against the fold's group matrices.
struct ScnTensor {
    int n_rois = 0;
    std::vector<double> data;  // 2 * R * R, channel-major

    double at(int ch, int i, int j) const {
        return data[(static_cast<size_t>(ch) * n_rois + i) * n_rois + j];
    }
};

ScnTensor build_scn_tensor(const SubjectFeatures& subject, const Matrix& group_mu,
                           const Matrix& group_iqr, double alpha);

void write_matrix_csv(const std::string& path, const Matrix& m);

}  // namespace scnfusion
