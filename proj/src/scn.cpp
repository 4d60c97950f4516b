#include "scnfusion/scn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace scnfusion {

namespace {

// Column midranks for Spearman correlation.
std::vector<double> midranks(std::span<const double> xs) {
    size_t n = xs.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
        double r = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

Matrix group_covariance(const Matrix& features, CorrKind kind) {
    int n = features.rows;
    int R = features.cols;
    if (n < 2) throw DataError("group covariance needs at least 2 subjects");

    // Center columns (of ranks for Spearman) and precompute norms.
    Matrix centered(n, R);
    std::vector<double> norms(R);
    std::vector<double> col(n);
    for (int c = 0; c < R; ++c) {
        for (int i = 0; i < n; ++i) col[i] = features.at(i, c);
        std::vector<double> vals =
            kind == CorrKind::Spearman ? midranks(col) : col;
        double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / n;
        double ss = 0.0;
        for (int i = 0; i < n; ++i) {
            double d = vals[i] - mean;
            centered.at(i, c) = d;
            ss += d * d;
        }
        norms[c] = std::sqrt(ss);
    }

    Matrix corr(R, R);
    for (int a = 0; a < R; ++a) {
        corr.at(a, a) = 1.0;
        for (int b = a + 1; b < R; ++b) {
            double val = 0.0;
            if (norms[a] > 0.0 && norms[b] > 0.0) {
                double dot = 0.0;
                for (int i = 0; i < n; ++i) dot += centered.at(i, a) * centered.at(i, b);
                val = dot / (norms[a] * norms[b]);
                val = std::clamp(val, -1.0, 1.0);
            }
            corr.at(a, b) = val;
            corr.at(b, a) = val;
        }
    }
    return corr;
}

Matrix individual_scn(std::span<const double> f) {
    int R = static_cast<int>(f.size());
    double norm2 = 0.0;
    for (double x : f) norm2 += x * x;
    if (norm2 <= 0.0)
        throw DataError("degenerate subject: zero feature vector cannot be normalized");
    Matrix m(R, R);
    for (int i = 0; i < R; ++i)
        for (int j = 0; j < R; ++j) m.at(i, j) = f[i] * f[j] / norm2;
    return m;
}

Matrix blend(const Matrix& group, const Matrix& individual, double alpha) {
    if (alpha < 0.0 || alpha > 1.0)
        throw ConfigError("blend alpha must be in [0,1]");
    if (group.rows != individual.rows || group.cols != individual.cols)
        throw DataError("blend: shape mismatch");
    Matrix out(group.rows, group.cols);
    for (size_t i = 0; i < out.v.size(); ++i)
        out.v[i] = alpha * group.v[i] + (1.0 - alpha) * individual.v[i];
    return out;
}

ScnTensor build_scn_tensor(const SubjectFeatures& subject, const Matrix& group_mu,
                           const Matrix& group_iqr, double alpha) {
    int R = static_cast<int>(subject.roi_means.size());
    if (group_mu.rows != R || group_iqr.rows != R)
        throw DataError("build_scn_tensor: group matrix size mismatch");

    Matrix ch0 = blend(group_mu, individual_scn(subject.roi_means), alpha);
    Matrix ch1 = blend(group_iqr, individual_scn(subject.roi_iqrs), alpha);

    ScnTensor t;
    t.n_rois = R;
    t.data.reserve(2 * ch0.v.size());
    t.data.insert(t.data.end(), ch0.v.begin(), ch0.v.end());
    t.data.insert(t.data.end(), ch1.v.begin(), ch1.v.end());
    return t;
}

void write_matrix_csv(const std::string& path, const Matrix& m) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot write matrix CSV: " + path);
    for (int i = 0; i < m.rows; ++i) {
        for (int j = 0; j < m.cols; ++j) {
            if (j) f << ',';
            f << format_double(m.at(i, j));
        }
        f << '\n';
    }
}

}  // namespace scnfusion
