#pragma once

// Two-sample comparison toolkit used to analyse score progression across
// generations: Shapiro-Wilk normality gate, Welch's t-test, Mann-Whitney U,
// Cohen's d, Cliff's delta and Benjamini-Hochberg FDR control.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "memetron/errors.hpp"

namespace memetron::stats {

enum class Alternative { two_sided, less, greater };

inline double mean(std::span<const double> x) {
    if (x.empty()) throw InsufficientDataError("mean of an empty sample");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Unbiased (n - 1) variance.
inline double variance(std::span<const double> x) {
    if (x.size() < 2) throw InsufficientDataError("variance needs at least two observations");
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

inline double stddev(std::span<const double> x) { return std::sqrt(variance(x)); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

/// Inverse of the standard normal CDF: rational starting point refined by
/// Halley steps on erfc (full double precision away from 0 and 1).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        if (p == 0.0) return -INFINITY;
        if (p == 1.0) return INFINITY;
        throw ValidationError("normal_quantile: p must lie in [0, 1]");
    }
    const double q = std::min(p, 1.0 - p);
    const double t = std::sqrt(-2.0 * std::log(q));
    double x = t - (2.515517 + 0.802853 * t + 0.010328 * t * t) /
                       (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t);
    if (p < 0.5) x = -x;
    for (int i = 0; i < 4; ++i) {
        const double e = (p < 0.5 ? normal_cdf(x) - p : (1.0 - p) - normal_sf(x));
        const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

namespace detail {

inline double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 500;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

} // namespace detail

/// Regularised incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// P(T > t) for Student's t with `df` degrees of freedom.
inline double student_t_sf(double t, double df) {
    const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
    return t >= 0.0 ? tail : 1.0 - tail;
}

struct ShapiroWilkResult {
    double w = 0.0;
    double p = 0.0;
};

namespace detail {

inline double poly(std::span<const double> c, double x) {
    double r = c[0];
    if (c.size() > 1) {
        double p = x * c[c.size() - 1];
        for (std::size_t j = c.size() - 2; j > 0; --j) p = (p + c[j]) * x;
        r += p;
    }
    return r;
}

} // namespace detail

/// Shapiro-Wilk W and p-value using Royston's AS R94 approximation
/// (3 <= n <= 5000).
inline ShapiroWilkResult shapiro_wilk(std::span<const double> sample) {
    const std::size_t n = sample.size();
    if (n < 3 || n > 5000) throw InsufficientDataError("shapiro_wilk: sample size must lie in [3, 5000]");
    std::vector<double> x(sample.begin(), sample.end());
    std::sort(x.begin(), x.end());
    if (x.back() - x.front() < 1e-19 * std::max(1.0, std::fabs(x.back())))
        throw DegenerateSampleError("shapiro_wilk: all observations are equal");

    const double an = static_cast<double>(n);
    const std::size_t half = n / 2;
    std::vector<double> a(half);
    if (n == 3) {
        a[0] = std::numbers::sqrt2 / 2.0;
    } else {
        static constexpr double c1[] = {0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056};
        static constexpr double c2[] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
        std::vector<double> m(half);
        double summ2 = 0.0;
        for (std::size_t i = 0; i < half; ++i) {
            m[i] = normal_quantile((static_cast<double>(i + 1) - 0.375) / (an + 0.25));
            summ2 += m[i] * m[i];
        }
        summ2 *= 2.0;
        const double ssumm2 = std::sqrt(summ2);
        const double rsn = 1.0 / std::sqrt(an);
        const double a1 = detail::poly(c1, rsn) - m[0] / ssumm2;
        std::size_t first_plain;
        double fac;
        if (n > 5) {
            first_plain = 2;
            const double a2 = -m[1] / ssumm2 + detail::poly(c2, rsn);
            fac = std::sqrt((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
            a[1] = a2;
        } else {
            first_plain = 1;
            fac = std::sqrt((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1));
        }
        a[0] = a1;
        for (std::size_t i = first_plain; i < half; ++i) a[i] = -m[i] / fac;
    }

    const double xbar = std::accumulate(x.begin(), x.end(), 0.0) / an;
    double ssq = 0.0;
    for (double v : x) ssq += (v - xbar) * (v - xbar);
    double num = 0.0;
    for (std::size_t i = 0; i < half; ++i) num += a[i] * (x[n - 1 - i] - x[i]);
    double w = std::min(1.0, num * num / ssq);

    ShapiroWilkResult r;
    r.w = w;
    if (n == 3) {
        constexpr double pi6 = 1.90985931710274; // 6 / pi
        constexpr double stqr = 1.04719755119660; // pi / 3
        r.p = std::max(0.0, pi6 * (std::asin(std::sqrt(w)) - stqr));
        return r;
    }
    double y = std::log1p(-w);
    const double lxx = std::log(an);
    double mu, sigma;
    if (n <= 11) {
        static constexpr double g[] = {-2.273, 0.459};
        static constexpr double c3[] = {0.544, -0.39978, 0.025054, -6.714e-4};
        static constexpr double c4[] = {1.3822, -0.77857, 0.062767, -0.0020322};
        const double gamma = detail::poly(g, an);
        if (y >= gamma) {
            r.p = 1e-99;
            return r;
        }
        y = -std::log(gamma - y);
        mu = detail::poly(c3, an);
        sigma = std::exp(detail::poly(c4, an));
    } else {
        static constexpr double c5[] = {-1.5861, -0.31082, -0.083751, 0.0038915};
        static constexpr double c6[] = {-0.4803, -0.082676, 0.0030302};
        mu = detail::poly(c5, lxx);
        sigma = std::exp(detail::poly(c6, lxx));
    }
    r.p = normal_sf((y - mu) / sigma);
    return r;
}

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
};

inline double tail_p(double sf_upper, double cdf_lower, Alternative alt) {
    switch (alt) {
    case Alternative::two_sided: return std::min(1.0, 2.0 * std::min(sf_upper, cdf_lower));
    case Alternative::less: return cdf_lower;
    case Alternative::greater: return sf_upper;
    }
    return 1.0;
}

/// Welch's unequal-variance t-test of mean(a) vs mean(b).
inline WelchResult welch_t(std::span<const double> a, std::span<const double> b,
                           Alternative alt = Alternative::two_sided) {
    if (a.size() < 2 || b.size() < 2) throw InsufficientDataError("welch_t: each sample needs at least two values");
    const double va = variance(a), vb = variance(b);
    if (va == 0.0 && vb == 0.0) throw InsufficientDataError("welch_t: both samples have zero variance");
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double sa = va / na, sb = vb / nb;
    const double se2 = sa + sb;
    WelchResult r;
    r.t = (mean(a) - mean(b)) / std::sqrt(se2);
    r.df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    const double upper = student_t_sf(r.t, r.df);
    r.p = tail_p(upper, 1.0 - upper, alt);
    if (r.t == 0.0 && alt == Alternative::two_sided) r.p = 1.0;
    return r;
}

struct MannWhitneyResult {
    double u = 0.0;
    double p = 1.0;
    bool exact = false;
};

/// Number of arrangements giving each U in [0, n1*n2] for tie-free samples.
inline std::vector<double> mann_whitney_null_counts(std::size_t n1, std::size_t n2) {
    // f[i][j][u]: rolling over i (size of first sample), j (second).
    std::vector<std::vector<std::vector<double>>> f(n1 + 1, std::vector<std::vector<double>>(n2 + 1));
    for (std::size_t i = 0; i <= n1; ++i) {
        for (std::size_t j = 0; j <= n2; ++j) {
            f[i][j].assign(i * j + 1, 0.0);
            if (i == 0 || j == 0) {
                f[i][j][0] = 1.0;
                continue;
            }
            // Largest observation belongs to the first sample (adds j to U) or the second.
            for (std::size_t u = 0; u <= i * j; ++u) {
                double v = 0.0;
                if (u >= j && u - j < f[i - 1][j].size()) v += f[i - 1][j][u - j];
                if (u < f[i][j - 1].size()) v += f[i][j - 1][u];
                f[i][j][u] = v;
            }
        }
    }
    return f[n1][n2];
}

/// Mann-Whitney U for sample `a` (midranks for ties). Exact null
/// distribution when n1 + n2 <= 20 without ties; otherwise the normal
/// approximation with tie and continuity corrections.
inline MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                                        Alternative alt = Alternative::two_sided) {
    if (a.empty() || b.empty()) throw InsufficientDataError("mann_whitney_u: both samples must be non-empty");
    const std::size_t n1 = a.size(), n2 = b.size(), n = n1 + n2;
    std::vector<std::pair<double, int>> all;
    all.reserve(n);
    for (double v : a) all.emplace_back(v, 0);
    for (double v : b) all.emplace_back(v, 1);
    std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) { return x.first < y.first; });

    double rank_sum_a = 0.0;
    double tie_term = 0.0;
    bool ties = false;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && all[j].first == all[i].first) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        const double t = static_cast<double>(j - i);
        if (t > 1) {
            ties = true;
            tie_term += t * t * t - t;
        }
        for (std::size_t k = i; k < j; ++k)
            if (all[k].second == 0) rank_sum_a += midrank;
        i = j;
    }
    MannWhitneyResult r;
    const double dn1 = static_cast<double>(n1), dn2 = static_cast<double>(n2), dn = static_cast<double>(n);
    r.u = rank_sum_a - dn1 * (dn1 + 1.0) / 2.0;

    if (n <= 20 && !ties) {
        r.exact = true;
        const std::vector<double> counts = mann_whitney_null_counts(n1, n2);
        const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
        const auto u = static_cast<std::size_t>(std::llround(r.u));
        double le = 0.0, ge = 0.0;
        for (std::size_t k = 0; k < counts.size(); ++k) {
            if (k <= u) le += counts[k];
            if (k >= u) ge += counts[k];
        }
        // Large U means `a` tends to be greater.
        r.p = tail_p(ge / total, le / total, alt);
        return r;
    }

    const double mu = dn1 * dn2 / 2.0;
    const double var = dn1 * dn2 / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
    if (var <= 0.0) {
        r.p = 1.0;
        return r;
    }
    const double sigma = std::sqrt(var);
    switch (alt) {
    case Alternative::two_sided: {
        const double z = std::max(0.0, std::fabs(r.u - mu) - 0.5) / sigma;
        r.p = std::min(1.0, 2.0 * normal_sf(z));
        break;
    }
    case Alternative::greater: r.p = normal_sf((r.u - mu - 0.5) / sigma); break;
    case Alternative::less: r.p = normal_cdf((r.u - mu + 0.5) / sigma); break;
    }
    return r;
}

/// (mean(a) - mean(b)) / pooled SD with (n - 1) weights.
inline double cohens_d(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw InsufficientDataError("cohens_d: each sample needs at least two values");
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double pooled = ((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / (na + nb - 2.0);
    if (pooled <= 0.0) throw DegenerateSampleError("cohens_d: pooled variance is zero");
    return (mean(a) - mean(b)) / std::sqrt(pooled);
}

/// (#{a_i > b_j} - #{a_i < b_j}) / (|a| |b|) by full pairwise enumeration.
inline double cliffs_delta(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw InsufficientDataError("cliffs_delta: both samples must be non-empty");
    long long dominance = 0;
    for (double x : a)
        for (double y : b) dominance += (x > y) - (x < y);
    return static_cast<double>(dominance) / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

struct FdrResult {
    std::vector<double> adjusted;
    std::vector<bool> reject;
};

/// Benjamini-Hochberg step-up: adjusted p is the running minimum of
/// (m / k) p_(k) from the largest rank down, capped at 1.
inline FdrResult bh_fdr(std::span<const double> p, double q) {
    if (!(q > 0.0 && q < 1.0)) throw ValidationError("bh_fdr: q must lie in (0, 1)");
    for (double v : p)
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("bh_fdr: p-values must lie in [0, 1]");
    const std::size_t m = p.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return p[i] < p[j]; });
    FdrResult r{std::vector<double>(m), std::vector<bool>(m)};
    double running = 1.0;
    for (std::size_t k = m; k-- > 0;) {
        const double scaled = p[order[k]] * static_cast<double>(m) / static_cast<double>(k + 1);
        running = std::min(running, scaled);
        r.adjusted[order[k]] = std::min(1.0, running);
    }
    for (std::size_t i = 0; i < m; ++i) r.reject[i] = r.adjusted[i] <= q;
    return r;
}

enum class TestKind { welch, mann_whitney };

inline const char* to_string(TestKind t) { return t == TestKind::welch ? "welch" : "mann_whitney"; }

struct ComparisonResult {
    std::string question_id;
    std::uint32_t gen_a = 0;
    std::uint32_t gen_b = 0;
    TestKind test_used = TestKind::mann_whitney;
    double statistic = 0.0;
    double p_raw = 1.0;
    double p_adjusted = 1.0;
    /// mean(gen_b) - mean(gen_a): positive when the later generation scores higher.
    double mean_diff = 0.0;
    /// Signed as (gen_a - gen_b); absent when the pooled variance is zero.
    std::optional<double> cohens_d;
    double cliffs_delta = 0.0;
    bool significant_raw = false;
    bool significant_fdr = false;
    std::optional<double> shapiro_p_a;
    std::optional<double> shapiro_p_b;
};

struct ComparisonSummary {
    std::uint32_t gen_a = 0;
    std::uint32_t gen_b = 0;
    std::size_t questions = 0;
    double mean_diff_mean = 0.0;
    double mean_diff_sd = 0.0;
    std::size_t welch_count = 0;
    std::size_t mann_whitney_count = 0;
    std::size_t significant_raw = 0;
    std::size_t significant_fdr = 0;
    /// Mean of per-question effect sizes.
    std::optional<double> cohens_d_mean;
    double cliffs_delta_mean = 0.0;
    /// Effect sizes over all scores of all questions pooled together.
    std::optional<double> cohens_d_pooled;
    double cliffs_delta_pooled = 0.0;
};

struct ComparisonOptions {
    double normality_alpha = 0.05;
    double significance = 0.05;
    double fdr_q = 0.05;
    Alternative alternative = Alternative::two_sided;
};

/// Normality gate: Welch iff both Shapiro-Wilk p-values exceed the threshold.
/// Degenerate or out-of-range samples count as non-normal.
inline std::optional<double> shapiro_p_or_none(std::span<const double> x) {
    if (x.size() < 3 || x.size() > 5000) return std::nullopt;
    try {
        return shapiro_wilk(x).p;
    } catch (const DegenerateSampleError&) {
        return std::nullopt;
    }
}

/// One question's comparison (without the FDR adjustment).
inline ComparisonResult compare_samples(std::string question_id, std::uint32_t gen_a, std::uint32_t gen_b,
                                        std::span<const double> a, std::span<const double> b,
                                        const ComparisonOptions& opt = {}) {
    if (a.size() < 3 || b.size() < 3)
        throw InsufficientDataError("question '" + question_id + "': each generation needs at least 3 scores");
    ComparisonResult r;
    r.question_id = std::move(question_id);
    r.gen_a = gen_a;
    r.gen_b = gen_b;
    r.shapiro_p_a = shapiro_p_or_none(a);
    r.shapiro_p_b = shapiro_p_or_none(b);
    const bool normal = r.shapiro_p_a && r.shapiro_p_b && *r.shapiro_p_a > opt.normality_alpha &&
                        *r.shapiro_p_b > opt.normality_alpha;
    if (normal) {
        const WelchResult w = welch_t(a, b, opt.alternative);
        r.test_used = TestKind::welch;
        r.statistic = w.t;
        r.p_raw = w.p;
    } else {
        const MannWhitneyResult m = mann_whitney_u(a, b, opt.alternative);
        r.test_used = TestKind::mann_whitney;
        r.statistic = m.u;
        r.p_raw = m.p;
    }
    r.mean_diff = mean(b) - mean(a);
    try {
        r.cohens_d = cohens_d(a, b);
    } catch (const DegenerateSampleError&) {
        if (r.mean_diff == 0.0) r.cohens_d = 0.0;
    }
    r.cliffs_delta = cliffs_delta(a, b);
    r.significant_raw = r.p_raw < opt.significance;
    r.p_adjusted = r.p_raw;
    return r;
}

/// Scores per generation for one question.
struct QuestionScores {
    std::string question_id;
    std::map<std::uint32_t, std::vector<double>> by_generation;
};

struct GenerationComparison {
    std::vector<ComparisonResult> rows;
    ComparisonSummary summary;
};

/// Compares generation `gen_a` to `gen_b` for every question, applies BH-FDR
/// across questions and aggregates a summary row.
inline GenerationComparison compare_generations(std::span<const QuestionScores> questions, std::uint32_t gen_a,
                                                std::uint32_t gen_b, const ComparisonOptions& opt = {}) {
    GenerationComparison out;
    std::vector<double> pooled_a, pooled_b;
    for (const QuestionScores& q : questions) {
        auto ia = q.by_generation.find(gen_a);
        auto ib = q.by_generation.find(gen_b);
        if (ia == q.by_generation.end() || ib == q.by_generation.end())
            throw MissingGenerationError("question '" + q.question_id + "' has no scores for generation " +
                                         std::to_string(ia == q.by_generation.end() ? gen_a : gen_b));
        out.rows.push_back(compare_samples(q.question_id, gen_a, gen_b, ia->second, ib->second, opt));
        pooled_a.insert(pooled_a.end(), ia->second.begin(), ia->second.end());
        pooled_b.insert(pooled_b.end(), ib->second.begin(), ib->second.end());
    }
    if (out.rows.empty()) throw InsufficientDataError("no questions to compare");

    std::vector<double> raw;
    for (const auto& r : out.rows) raw.push_back(r.p_raw);
    const FdrResult fdr = bh_fdr(raw, opt.fdr_q);

    ComparisonSummary& s = out.summary;
    s.gen_a = gen_a;
    s.gen_b = gen_b;
    s.questions = out.rows.size();
    std::vector<double> diffs, ds, deltas;
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
        ComparisonResult& r = out.rows[i];
        r.p_adjusted = std::max(r.p_raw, fdr.adjusted[i]);
        r.significant_fdr = fdr.reject[i];
        diffs.push_back(r.mean_diff);
        if (r.cohens_d) ds.push_back(*r.cohens_d);
        deltas.push_back(r.cliffs_delta);
        (r.test_used == TestKind::welch ? s.welch_count : s.mann_whitney_count) += 1;
        s.significant_raw += r.significant_raw;
        s.significant_fdr += r.significant_fdr;
    }
    s.mean_diff_mean = mean(diffs);
    s.mean_diff_sd = diffs.size() > 1 ? stddev(diffs) : 0.0;
    if (!ds.empty()) s.cohens_d_mean = mean(ds);
    s.cliffs_delta_mean = mean(deltas);
    try {
        s.cohens_d_pooled = cohens_d(pooled_a, pooled_b);
    } catch (const Error&) {
    }
    s.cliffs_delta_pooled = cliffs_delta(pooled_a, pooled_b);
    return out;
}

} // namespace memetron::stats
