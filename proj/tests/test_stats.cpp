#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "memetron/stats.hpp"
#include "support.hpp"

using namespace memetron;
using namespace memetron::stats;
using testing_support::reference;

namespace {

std::vector<double> vec(const nlohmann::json& j) { return j.get<std::vector<double>>(); }

/// Two-sided exact p by enumerating every assignment of ranks to sample a.
double enumerated_mw_p(std::size_t n1, std::size_t n2, double u_obs) {
    const std::size_t n = n1 + n2;
    std::vector<int> mask(n, 0);
    std::fill(mask.begin(), mask.begin() + n1, 1);
    std::sort(mask.begin(), mask.end());
    const double mu = double(n1) * double(n2) / 2.0;
    std::size_t total = 0, extreme_hi = 0, extreme_lo = 0;
    do {
        double rank_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask[i]) rank_sum += double(i + 1);
        const double u = rank_sum - double(n1) * double(n1 + 1) / 2.0;
        ++total;
        extreme_hi += u >= u_obs;
        extreme_lo += u <= u_obs;
    } while (std::next_permutation(mask.begin(), mask.end()));
    (void)mu;
    return std::min(1.0, 2.0 * std::min(extreme_hi, extreme_lo) / double(total));
}

} // namespace

TEST(Distributions, StudentTSurvival) {
    for (const auto& c : reference()["distributions"]["t_sf"])
        EXPECT_NEAR(student_t_sf(c["t"], c["df"]), c["sf"].get<double>(), 1e-10) << c.dump();
}

TEST(Distributions, NormalQuantile) {
    for (const auto& c : reference()["distributions"]["norm_ppf"])
        EXPECT_NEAR(normal_quantile(c["p"]), c["x"].get<double>(), 1e-9) << c.dump();
    EXPECT_THROW(normal_quantile(1.5), ValidationError);
}

TEST(Distributions, IncompleteBeta) {
    for (const auto& c : reference()["distributions"]["ibeta"])
        EXPECT_NEAR(incomplete_beta(c["a"], c["b"], c["x"]), c["v"].get<double>(), 1e-10) << c.dump();
}

TEST(ShapiroWilk, MatchesReferenceSamples) {
    const auto& samples = reference()["shapiro"]["samples"];
    ASSERT_EQ(samples.size(), 20u);
    for (const auto& s : samples) {
        const auto r = shapiro_wilk(vec(s["x"]));
        EXPECT_NEAR(r.w, s["w"].get<double>(), 1e-3);
        EXPECT_NEAR(r.p, s["p"].get<double>(), 1e-3);
    }
}

TEST(ShapiroWilk, OneToTenAndBimodal) {
    std::vector<double> x(10);
    std::iota(x.begin(), x.end(), 1.0);
    const auto r = shapiro_wilk(x);
    EXPECT_NEAR(r.w, reference()["shapiro"]["one_to_ten"]["w"].get<double>(), 1e-4);
    EXPECT_GT(r.p, 0.05);
    std::vector<double> bi(10, 0.0);
    bi.resize(20, 100.0);
    EXPECT_LT(shapiro_wilk(bi).p, 1e-4);
}

TEST(ShapiroWilk, RejectsDegenerateInput) {
    EXPECT_THROW(shapiro_wilk(std::vector<double>{1, 2}), InsufficientDataError);
    EXPECT_THROW(shapiro_wilk(std::vector<double>{3, 3, 3, 3}), DegenerateSampleError);
}

TEST(Welch, MatchesReference) {
    for (const auto& c : reference()["welch"]["cases"]) {
        const auto a = vec(c["a"]), b = vec(c["b"]);
        const auto r = welch_t(a, b);
        EXPECT_NEAR(r.t, c["t"].get<double>(), 1e-10);
        EXPECT_NEAR(r.df, c["df"].get<double>(), 1e-8);
        EXPECT_NEAR(r.p, c["p"].get<double>(), 1e-9);
        EXPECT_NEAR(welch_t(a, b, Alternative::less).p, c["p_less"].get<double>(), 1e-9);
    }
}

TEST(Welch, ShiftedSamples) {
    const auto r = welch_t(std::vector<double>{1, 2, 3}, std::vector<double>{11, 12, 13});
    EXPECT_NEAR(r.p, reference()["welch"]["shift10_p"].get<double>(), 1e-10);
    EXPECT_LT(r.t, 0.0);
    EXPECT_THROW(welch_t(std::vector<double>{1, 1}, std::vector<double>{2, 2}), InsufficientDataError);
}

TEST(MannWhitney, MatchesReference) {
    for (const auto& c : reference()["mann_whitney"]) {
        const auto a = vec(c["a"]), b = vec(c["b"]);
        const auto r = mann_whitney_u(a, b);
        EXPECT_EQ(r.u, c["u"].get<double>());
        EXPECT_NEAR(r.p, c["p"].get<double>(), 1e-9) << c.dump();
        EXPECT_EQ(r.exact, c["method"] == "exact");
        if (c.contains("p_greater"))
            EXPECT_NEAR(mann_whitney_u(a, b, Alternative::greater).p, c["p_greater"].get<double>(), 1e-9);
    }
}

TEST(MannWhitney, ExactPEqualsEnumeration) {
    std::mt19937_64 rng(17);
    for (std::size_t n1 = 1; n1 <= 6; ++n1) {
        for (std::size_t n2 = 1; n1 + n2 <= 10; ++n2) {
            std::vector<double> pool(n1 + n2);
            std::iota(pool.begin(), pool.end(), 0.0);
            std::shuffle(pool.begin(), pool.end(), rng);
            const std::vector<double> a(pool.begin(), pool.begin() + n1), b(pool.begin() + n1, pool.end());
            const auto r = mann_whitney_u(a, b);
            ASSERT_TRUE(r.exact);
            EXPECT_NEAR(r.p, enumerated_mw_p(n1, n2, r.u), 1e-12) << n1 << "," << n2;
        }
    }
}

TEST(MannWhitney, NullCountsSumToBinomial) {
    const auto c = mann_whitney_null_counts(4, 5);
    EXPECT_EQ(std::accumulate(c.begin(), c.end(), 0.0), 126.0);
    EXPECT_EQ(c.size(), 21u);
    for (std::size_t k = 0; k < c.size(); ++k) EXPECT_EQ(c[k], c[c.size() - 1 - k]);
}

TEST(Fdr, WorkedExampleAllRejected) {
    const auto r = bh_fdr(std::vector<double>{0.005, 0.01, 0.03, 0.04}, 0.05);
    EXPECT_EQ(r.reject, (std::vector<bool>{true, true, true, true}));
    EXPECT_NEAR(r.adjusted[0], 0.02, 1e-15);
    EXPECT_NEAR(r.adjusted[3], 0.04, 1e-15);
}

TEST(Fdr, HandComputedStepUp) {
    // Sorted p: 0.01 0.02 0.03 0.04 0.5; ranks scale by 5/k.
    const auto r = bh_fdr(std::vector<double>{0.5, 0.01, 0.04, 0.03, 0.02}, 0.05);
    const std::vector<double> expected{0.5, 0.05, 0.05, 0.05, 0.05};
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(r.adjusted[i], expected[i], 1e-12);
    EXPECT_EQ(r.reject, (std::vector<bool>{false, true, true, true, true}));
    const auto none = bh_fdr(std::vector<double>{0.2, 0.3}, 0.05);
    EXPECT_EQ(none.reject, (std::vector<bool>{false, false}));
    EXPECT_THROW(bh_fdr(std::vector<double>{1.2}, 0.05), ValidationError);
}

TEST(Effects, CohensDHandExample) {
    EXPECT_DOUBLE_EQ(cohens_d(std::vector<double>{2, 4, 6}, std::vector<double>{1, 3, 5}), 0.5);
    EXPECT_THROW(cohens_d(std::vector<double>{1, 1}, std::vector<double>{2, 2}), DegenerateSampleError);
}

TEST(Effects, CliffsDeltaByEnumeration) {
    EXPECT_EQ(cliffs_delta(std::vector<double>{3, 4}, std::vector<double>{1, 2}), 1.0);
    EXPECT_EQ(cliffs_delta(std::vector<double>{1, 2, 3}, std::vector<double>{2}), 0.0);
    EXPECT_NEAR(cliffs_delta(std::vector<double>{1, 5}, std::vector<double>{2, 3, 4}), 0.0, 1e-15);
}

TEST(Effects, Antisymmetric) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    for (int t = 0; t < 50; ++t) {
        std::vector<double> a(7), b(9);
        for (double& v : a) v = nd(rng);
        for (double& v : b) v = nd(rng) + 0.5;
        EXPECT_NEAR(cohens_d(a, b), -cohens_d(b, a), 1e-12);
        EXPECT_EQ(cliffs_delta(a, b), -cliffs_delta(b, a));
    }
}

TEST(CompareGenerations, IdenticalGenerationsAreNotSignificant) {
    std::vector<QuestionScores> qs;
    std::mt19937_64 rng(8);
    std::normal_distribution<double> nd;
    for (int i = 0; i < 10; ++i) {
        QuestionScores q{"q" + std::to_string(i), {}};
        std::vector<double> x(16);
        for (double& v : x) v = nd(rng);
        q.by_generation[1] = x;
        q.by_generation[2] = x;
        qs.push_back(q);
    }
    const auto out = compare_generations(qs, 1, 2);
    EXPECT_EQ(out.summary.significant_fdr, 0u);
    EXPECT_EQ(out.summary.mean_diff_mean, 0.0);
    for (const auto& r : out.rows) EXPECT_EQ(r.cliffs_delta, 0.0);
}

TEST(CompareGenerations, LargeShiftIsSignificantEverywhere) {
    std::vector<QuestionScores> qs;
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd;
    for (int i = 0; i < 10; ++i) {
        QuestionScores q{"q" + std::to_string(i), {}};
        std::vector<double> a(16), b(16);
        for (double& v : a) v = nd(rng);
        for (double& v : b) v = nd(rng) + 10.0;
        q.by_generation[1] = a;
        q.by_generation[4] = b;
        qs.push_back(q);
    }
    const auto out = compare_generations(qs, 1, 4);
    EXPECT_EQ(out.summary.significant_fdr, 10u);
    EXPECT_NEAR(out.summary.mean_diff_mean, 10.0, 1.0);
    EXPECT_EQ(out.summary.cliffs_delta_mean, -1.0);
    EXPECT_LT(*out.summary.cohens_d_mean, 0.0);
}

TEST(CompareGenerations, MissingGenerationRaises) {
    std::vector<QuestionScores> qs{{"q", {{1, {1, 2, 3}}}}};
    EXPECT_THROW(compare_generations(qs, 1, 3), MissingGenerationError);
}

TEST(CompareGenerations, MatchesAnalysisFixture) {
    const auto& fx = reference()["analysis"];
    std::vector<QuestionScores> qs;
    for (const auto& q : fx["questions"]) qs.push_back({q["id"], {{1, vec(q["g1"])}, {2, vec(q["g2"])}}});
    const auto out = compare_generations(qs, 1, 2);
    ASSERT_EQ(out.rows.size(), fx["rows"].size());
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
        const auto& want = fx["rows"][i];
        const auto& got = out.rows[i];
        EXPECT_EQ(to_string(got.test_used), want["test"].get<std::string>()) << i;
        EXPECT_NEAR(got.statistic, want["statistic"].get<double>(), 1e-9);
        EXPECT_NEAR(got.p_raw, want["p_raw"].get<double>(), 1e-9);
        EXPECT_NEAR(got.p_adjusted, want["p_adjusted"].get<double>(), 1e-9);
        EXPECT_NEAR(got.mean_diff, want["mean_diff"].get<double>(), 1e-12);
        EXPECT_NEAR(*got.cohens_d, want["cohens_d"].get<double>(), 1e-12);
        EXPECT_NEAR(got.cliffs_delta, want["cliffs_delta"].get<double>(), 1e-12);
        EXPECT_EQ(got.significant_raw, want["significant_raw"].get<bool>());
        EXPECT_EQ(got.significant_fdr, want["significant_fdr"].get<bool>());
    }
    const auto& s = fx["summary"];
    EXPECT_NEAR(out.summary.mean_diff_mean, s["mean_diff_mean"].get<double>(), 1e-12);
    EXPECT_NEAR(out.summary.mean_diff_sd, s["mean_diff_sd"].get<double>(), 1e-12);
    EXPECT_EQ(out.summary.welch_count, s["welch"].get<std::size_t>());
    EXPECT_EQ(out.summary.mann_whitney_count, s["mann_whitney"].get<std::size_t>());
    EXPECT_EQ(out.summary.significant_raw, s["significant_raw"].get<std::size_t>());
    EXPECT_EQ(out.summary.significant_fdr, s["significant_fdr"].get<std::size_t>());
    EXPECT_NEAR(*out.summary.cohens_d_mean, s["cohens_d_mean"].get<double>(), 1e-12);
    EXPECT_NEAR(out.summary.cliffs_delta_mean, s["cliffs_delta_mean"].get<double>(), 1e-12);
    EXPECT_NEAR(*out.summary.cohens_d_pooled, s["cohens_d_pooled"].get<double>(), 1e-12);
    EXPECT_NEAR(out.summary.cliffs_delta_pooled, s["cliffs_delta_pooled"].get<double>(), 1e-12);
}
