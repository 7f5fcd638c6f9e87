#include <gtest/gtest.h>

#include <array>
#include <bit>
#include <numeric>
#include <set>

#include "support.hpp"

using namespace memetron;
using testing_support::SimEnv;

namespace {

HistoryBuffer random_history(SplitMix64& rng, std::size_t size) {
    HistoryBuffer h("h");
    for (std::size_t i = 0; i < size; ++i) {
        Candidate c;
        c.text = "t" + std::to_string(i);
        // Small integer range forces ties.
        c.reward = static_cast<double>(rng.uniform_below(7)) - 3.0;
        c.origin = Origin::initial(static_cast<std::uint32_t>(i));
        h.record(c);
    }
    return h;
}

double brute_force_best_sum(const HistoryBuffer& h, std::uint32_t n) {
    const std::size_t m = h.size();
    double best = -std::numeric_limits<double>::infinity();
    for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
        if (static_cast<std::uint32_t>(std::popcount(mask)) != n) continue;
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            if (mask & (1u << i)) s += *h.at(i).reward;
        best = std::max(best, s);
    }
    return best;
}

} // namespace

TEST(Elitism, MaximisesRewardSumAgainstBruteForce) {
    SplitMix64 rng(2024);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t size = 2 + rng.uniform_below(13);
        const std::uint32_t n = 1 + static_cast<std::uint32_t>(rng.uniform_below(std::min<std::size_t>(size, 6)));
        const HistoryBuffer h = random_history(rng, size);
        const auto elite = elitism(h, n);
        ASSERT_EQ(elite.size(), n);
        ASSERT_EQ(std::set<CandidateId>(elite.begin(), elite.end()).size(), n);
        double s = 0.0;
        for (CandidateId id : elite) s += *h.at(id).reward;
        ASSERT_EQ(s, brute_force_best_sum(h, n));
    }
}

TEST(Elitism, TiesBreakTowardLowerIds) {
    HistoryBuffer h("h");
    for (double r : {1.0, 2.0, 1.0, 1.0}) {
        Candidate c;
        c.text = "x";
        c.reward = r;
        h.record(c);
    }
    EXPECT_EQ(elitism(h, 2), (std::vector<CandidateId>{1, 0}));
}

TEST(Elitism, SkipsRejectedProposals) {
    HistoryBuffer h("h");
    Candidate a;
    a.text = "a";
    a.reward = 1.0;
    h.record(a);
    Candidate b;
    b.text = "b";
    b.reward = 5.0;
    b.origin = Origin::refinement(0, 0, 0, false);
    h.record(b);
    EXPECT_EQ(elitism(h, 1), (std::vector<CandidateId>{0}));
    EXPECT_THROW(elitism(h, 2), InsufficientDataError);
}

TEST(Tournament, WinnerNeverWorseThanLoser) {
    SplitMix64 data(5);
    const HistoryBuffer h = random_history(data, 10);
    std::vector<CandidateId> pop(10);
    std::iota(pop.begin(), pop.end(), 0);
    SplitMix64 rng(9);
    for (int i = 0; i < 5000; ++i) {
        SplitMix64 probe = rng;
        const std::size_t a = probe.uniform_below(pop.size());
        std::size_t b = probe.uniform_below(pop.size() - 1);
        if (b >= a) ++b;
        const CandidateId w = tournament_select(h, pop, rng);
        ASSERT_TRUE(w == pop[a] || w == pop[b]);
        const CandidateId loser = w == pop[a] ? pop[b] : pop[a];
        ASSERT_GE(*h.at(w).reward, *h.at(loser).reward);
    }
}

TEST(Tournament, ThreeCandidateFrequencies) {
    HistoryBuffer h("h");
    for (double r : {0.0, 1.0, 2.0}) {
        Candidate c;
        c.text = "x";
        c.reward = r;
        h.record(c);
    }
    const std::vector<CandidateId> pop{0, 1, 2};
    SplitMix64 rng(77);
    std::array<int, 3> wins{};
    const int trials = 60000;
    for (int i = 0; i < trials; ++i) ++wins[tournament_select(h, pop, rng)];
    EXPECT_EQ(wins[0], 0);
    EXPECT_NEAR(wins[1] / double(trials), 1.0 / 3.0, 0.01);
    EXPECT_NEAR(wins[2] / double(trials), 2.0 / 3.0, 0.01);
}

TEST(Tournament, SingletonAndUnscored) {
    HistoryBuffer h("h");
    Candidate c;
    c.text = "x";
    h.record(c);
    SplitMix64 rng(1);
    const std::vector<CandidateId> pop{0};
    EXPECT_THROW(tournament_select(h, pop, rng), ValidationError);
    EXPECT_THROW(tournament_select(h, std::vector<CandidateId>{}, rng), ValidationError);
}

TEST(Init, RecordsNScoredInitialCandidates) {
    SimEnv env(3);
    HistoryBuffer h("q");
    const auto ids = init_population(env.ctx(), h, 16);
    EXPECT_EQ(ids.size(), 16u);
    EXPECT_EQ(h.size(), 16u);
    for (std::uint32_t i = 0; i < 16; ++i) {
        const Candidate& c = h.at(ids[i]);
        EXPECT_TRUE(c.scored());
        EXPECT_EQ(c.generation, 0u);
        EXPECT_EQ(c.origin.kind, OriginKind::initial);
        EXPECT_EQ(c.origin.sample_index, i);
    }
    EXPECT_EQ(env.budget.used_model_calls(), 16u);
}

TEST(Converged, PatienceWindow) {
    const std::vector<double> flat{1, 2, 2, 2};
    EXPECT_FALSE(converged(std::span(flat).first(3), 2, 1e-6));
    EXPECT_TRUE(converged(flat, 2, 1e-6));
    const std::vector<double> rising{1, 2, 2, 3};
    EXPECT_FALSE(converged(rising, 2, 1e-6));
    EXPECT_TRUE(converged(rising, 2, 2.0));
}

TEST(Genetron, ConfigValidation) {
    GenetronConfig c;
    c.population_size = 1;
    EXPECT_THROW(validate(c), ValidationError);
    c.max_generations = 0;
    EXPECT_NO_THROW(validate(c));
    c = GenetronConfig{};
    c.patience = 4;
    EXPECT_THROW(validate(c), ValidationError);
    c = GenetronConfig{};
    c.best_of_n = 0;
    EXPECT_THROW(validate(c), ValidationError);
}

TEST(Genetron, BudgetAccountingMatchesLog) {
    SimEnv env(11);
    const SearchResult r = run_genetron(env.ctx(), GenetronConfig{});
    EXPECT_EQ(testing_support::logged_calls(env.log), env.budget.used_model_calls());
    // 16 initial + 3 generations x 16 offspring x best-of-3.
    if (r.stop == StopReason::completed) EXPECT_EQ(env.budget.used_model_calls(), 16u + 3u * 16u * 3u);
    for (const Candidate& c : r.history.candidates()) EXPECT_LE(c.created_at_call, env.budget.used_model_calls());
}

TEST(Genetron, MonotoneBestAcrossSeeds) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SimEnv env(seed);
        GenetronConfig c;
        c.max_generations = 5;
        c.patience = 5;
        const SearchResult r = run_genetron(env.ctx(), c);
        EXPECT_TRUE(std::is_sorted(r.best_trace.begin(), r.best_trace.end())) << seed;
        EXPECT_TRUE(testing_support::running_best_monotone(r.history)) << seed;
        EXPECT_EQ(r.best, best_of(r.history).id);
    }
}

TEST(Genetron, DeterministicForFixedSeed) {
    SimEnv a(21), b(21);
    EXPECT_EQ(testing_support::transcript(run_genetron(a.ctx(), GenetronConfig{}).history),
              testing_support::transcript(run_genetron(b.ctx(), GenetronConfig{}).history));
    EXPECT_EQ(a.log.lines(), b.log.lines());
}

TEST(Genetron, LineageAndGenerationStructure) {
    SimEnv env(4);
    const SearchResult r = run_genetron(env.ctx(), GenetronConfig{});
    ASSERT_EQ(r.generations.size(), 3u);
    for (const GenerationRecord& g : r.generations) {
        EXPECT_EQ(g.offspring.size(), 16u);
        std::set<std::pair<CandidateId, CandidateId>> seen;
        for (const auto& [a, b] : g.pairs) {
            EXPECT_NE(a, b);
            seen.insert({std::min(a, b), std::max(a, b)});
            EXPECT_TRUE(std::find(g.population.begin(), g.population.end(), a) != g.population.end());
        }
        EXPECT_EQ(seen.size(), g.pairs.size());
        for (CandidateId id : g.offspring) {
            const Candidate& c = r.history.at(id);
            EXPECT_EQ(c.origin.kind, OriginKind::crossover);
            EXPECT_EQ(c.generation, g.generation);
            ASSERT_EQ(c.origin.parents.size(), 2u);
            EXPECT_LT(c.origin.parents[0], id);
        }
    }
}

TEST(Genetron, FixedPoolPairsComeFromPool) {
    SimEnv env(8);
    GenetronConfig c;
    c.parent_pairing = ParentPairing::fixed_pool;
    const SearchResult r = run_genetron(env.ctx(), c);
    for (const GenerationRecord& g : r.generations) {
        EXPECT_EQ(g.parent_pool.size(), c.population_size);
        for (const auto& [a, b] : g.pairs) {
            EXPECT_NE(a, b);
            EXPECT_TRUE(std::find(g.parent_pool.begin(), g.parent_pool.end(), a) != g.parent_pool.end());
            EXPECT_TRUE(std::find(g.parent_pool.begin(), g.parent_pool.end(), b) != g.parent_pool.end());
        }
    }
}

TEST(Genetron, SmallPopulationRepeatsPairsWithNote) {
    SimEnv env(8);
    GenetronConfig c;
    c.population_size = 2;
    c.max_generations = 1;
    c.patience = 1;
    c.offspring_per_generation = 3;
    const SearchResult r = run_genetron(env.ctx(), c);
    EXPECT_EQ(r.generations.front().pairs.size(), 3u);
    bool noted = false;
    for (const std::string& line : env.log.lines()) noted |= line.find("exhausted") != std::string::npos;
    EXPECT_TRUE(noted);
}

TEST(Genetron, StopsOnBudgetWithPartialGeneration) {
    SimEnv env(2, "1011001110001111", {}, 20);
    const SearchResult r = run_genetron(env.ctx(), GenetronConfig{});
    EXPECT_EQ(r.stop, StopReason::budget);
    EXPECT_EQ(r.history.size(), 17u);
    EXPECT_EQ(env.budget.used_model_calls(), 19u);
    EXPECT_EQ(r.generations.back().offspring.size(), 1u);
}

TEST(Genetron, ConvergesAtTarget) {
    SimulatedConfig sim;
    sim.length = 4;
    SimEnv small(1, "1111", {}, 1'000'000, 1'000'000, sim);
    GenetronConfig c;
    c.max_generations = 20;
    c.patience = 2;
    const SearchResult r = run_genetron(small.ctx(), c);
    EXPECT_EQ(r.stop, StopReason::converged);
    EXPECT_LT(r.generations.size(), 20u);
}

TEST(Genetron, PairwiseRewardAnchorsOnFirstInitialSample) {
    SimEnv env(6, "1011001110001111", RewardSpec{RewardKind::anchored_pairwise, std::nullopt, AnchorPolicy::fixed_initial});
    const SearchResult r = run_genetron(env.ctx(), GenetronConfig{});
    ASSERT_TRUE(env.eval.run_anchor().has_value());
    EXPECT_EQ(*env.eval.run_anchor(), r.history.at(0).text);
    EXPECT_EQ(*r.history.at(0).reward, 0.0);
}

TEST(BestOfN, SingleGenerationOfN) {
    SimEnv env(3);
    const SearchResult r = run_best_of_n(env.ctx(), 64);
    EXPECT_EQ(r.history.size(), 64u);
    EXPECT_EQ(env.budget.used_model_calls(), 64u);
    EXPECT_EQ(r.best, best_of(r.history).id);
}
