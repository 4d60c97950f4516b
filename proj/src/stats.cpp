#include "scnfusion/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace scnfusion {

namespace {

// Continued fraction for the incomplete beta (Lentz's method).
double beta_cf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kTiny = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

std::vector<double> midranks_with_ties(const std::vector<double>& xs,
                                       double* tie_term) {
    size_t n = xs.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(n);
    if (tie_term) *tie_term = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
        double r = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        if (tie_term) {
            double t = static_cast<double>(j - i + 1);
            *tie_term += t * t * t - t;
        }
        i = j + 1;
    }
    return ranks;
}

double mean_of(const std::vector<double>& xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
}

double sample_var(const std::vector<double>& xs, double mean) {
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return ss / (xs.size() - 1.0);
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                      a * std::log(x) + b * std::log1p(-x);
    double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw NumericError("gamma_q: bad arguments");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) {
        // Series for P(a,x), return 1-P.
        double ap = a, sum = 1.0 / a, del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::abs(del) < std::abs(sum) * 1e-16) break;
        }
        double p = sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
        return 1.0 - p;
    }
    // Continued fraction for Q(a,x).
    constexpr double kTiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / kTiny, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -static_cast<double>(i) * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double student_t_two_sided_p(double t, double df) {
    if (df <= 0.0) throw NumericError("t-test: nonpositive df");
    return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

double chi_square_sf(double x, double df) {
    if (x <= 0.0) return 1.0;
    return gamma_q(df / 2.0, x / 2.0);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2)
        throw DataError("welch_t_test: each group needs >= 2 samples");
    double ma = mean_of(a), mb = mean_of(b);
    double va = sample_var(a, ma), vb = sample_var(b, mb);
    double sa = va / a.size(), sb = vb / b.size();
    WelchResult res;
    if (sa + sb == 0.0) {
        // Identical constants: no evidence of difference.
        res.t = 0.0;
        res.df = static_cast<double>(a.size() + b.size() - 2);
        res.p = 1.0;
        return res;
    }
    res.t = (ma - mb) / std::sqrt(sa + sb);
    res.df = (sa + sb) * (sa + sb) /
             (sa * sa / (a.size() - 1.0) + sb * sb / (b.size() - 1.0));
    res.p = student_t_two_sided_p(res.t, res.df);
    return res;
}

CohensD cohens_d(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2)
        throw DataError("cohens_d: each group needs >= 2 samples");
    double ma = mean_of(a), mb = mean_of(b);
    double va = sample_var(a, ma), vb = sample_var(b, mb);
    double pooled = ((a.size() - 1.0) * va + (b.size() - 1.0) * vb) /
                    (a.size() + b.size() - 2.0);
    CohensD res;
    if (pooled <= 0.0) return res;  // undefined, flagged
    res.d = (ma - mb) / std::sqrt(pooled);
    res.valid = true;
    return res;
}

MannWhitneyResult mann_whitney_u(const std::vector<double>& a,
                                 const std::vector<double>& b) {
    size_t na = a.size(), nb = b.size();
    if (na == 0 || nb == 0) throw DataError("mann_whitney_u: empty group");
    std::vector<double> all;
    all.reserve(na + nb);
    all.insert(all.end(), a.begin(), a.end());
    all.insert(all.end(), b.begin(), b.end());
    double tie_term = 0.0;
    std::vector<double> ranks = midranks_with_ties(all, &tie_term);
    double ra = 0.0;
    for (size_t i = 0; i < na; ++i) ra += ranks[i];
    double u = ra - static_cast<double>(na) * (na + 1) / 2.0;

    MannWhitneyResult res;
    res.u = u;
    double n = static_cast<double>(na + nb);
    double mu = static_cast<double>(na) * nb / 2.0;
    double var = static_cast<double>(na) * nb / 12.0 *
                 (n + 1.0 - tie_term / (n * (n - 1.0)));
    if (var <= 0.0) {
        res.p = 1.0;  // all values tied
        return res;
    }
    double z = (u - mu) / std::sqrt(var);
    res.p = std::min(1.0, 2.0 * (1.0 - normal_cdf(std::abs(z))));
    return res;
}

std::vector<double> bonferroni(const std::vector<double>& p) {
    std::vector<double> out(p.size());
    double n = static_cast<double>(p.size());
    for (size_t i = 0; i < p.size(); ++i) out[i] = std::min(1.0, p[i] * n);
    return out;
}

std::vector<double> benjamini_hochberg(const std::vector<double>& p) {
    size_t n = p.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return p[a] < p[b]; });
    std::vector<double> q(n);
    double running = 1.0;
    for (size_t i = n; i-- > 0;) {
        double val = p[order[i]] * static_cast<double>(n) / static_cast<double>(i + 1);
        running = std::min(running, val);
        q[order[i]] = running;
    }
    return q;
}

KruskalWallisResult kruskal_wallis(const std::vector<double>& values,
                                   const std::vector<int>& group_of) {
    if (values.size() != group_of.size())
        throw DataError("kruskal_wallis: size mismatch");
    int k = 0;
    for (int g : group_of) k = std::max(k, g + 1);
    std::vector<long> counts(k, 0);
    for (int g : group_of) {
        if (g < 0) throw DataError("kruskal_wallis: negative group id");
        ++counts[g];
    }
    int nonempty = 0;
    for (long c : counts) {
        if (c == 0) continue;
        if (c < 2) throw DataError("kruskal_wallis: every group needs >= 2 members");
        ++nonempty;
    }
    if (nonempty < 2) throw DataError("kruskal_wallis: needs >= 2 groups");

    double tie_term = 0.0;
    std::vector<double> ranks = midranks_with_ties(values, &tie_term);
    std::vector<double> rank_sums(k, 0.0);
    for (size_t i = 0; i < values.size(); ++i) rank_sums[group_of[i]] += ranks[i];

    double n = static_cast<double>(values.size());
    double h = 0.0;
    for (int g = 0; g < k; ++g)
        if (counts[g] > 0) h += rank_sums[g] * rank_sums[g] / counts[g];
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);

    double correction = 1.0 - tie_term / (n * n * n - n);
    KruskalWallisResult res;
    res.groups = nonempty;
    if (correction <= 0.0) {
        res.h = 0.0;  // all values identical
        res.p = 1.0;
        return res;
    }
    res.h = h / correction;
    res.p = chi_square_sf(res.h, static_cast<double>(nonempty - 1));
    return res;
}

}  // namespace scnfusion
