#pragma once

#include <vector>

#include "scnfusion/common.hpp"

namespace scnfusion {

// Regularized incomplete beta I_x(a,b) and upper incomplete gamma Q(a,x).
double incomplete_beta(double a, double b, double x);
double gamma_q(double a, double x);

// Two-sided p for a Student-t statistic with df degrees of freedom.
double student_t_two_sided_p(double t, double df);
// Chi-square survival function P(X >= x) with k degrees of freedom.
double chi_square_sf(double x, double df);
// Standard normal CDF.
double normal_cdf(double z);

struct WelchResult {
    double t = 0, df = 0, p = 1;
};
WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

// Cohen's d with pooled SD; valid=false when the pooled variance is zero.
struct CohensD {
    double d = 0;
    bool valid = false;
};
CohensD cohens_d(const std::vector<double>& a, const std::vector<double>& b);

// Two-sided Mann-Whitney U with normal approximation and tie correction.
struct MannWhitneyResult {
    double u = 0, p = 1;
};
MannWhitneyResult mann_whitney_u(const std::vector<double>& a,
                                 const std::vector<double>& b);

std::vector<double> bonferroni(const std::vector<double>& p);
// Benjamini-Hochberg step-up q-values.
std::vector<double> benjamini_hochberg(const std::vector<double>& p);

struct KruskalWallisResult {
    double h = 0, p = 1;
    int groups = 0;
};
// values[i] belongs to group group_of[i]; needs >= 2 groups with >= 2 members.
KruskalWallisResult kruskal_wallis(const std::vector<double>& values,
                                   const std::vector<int>& group_of);

}  // namespace scnfusion
