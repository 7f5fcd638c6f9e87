#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "memetron/core.hpp"
#include "memetron/search.hpp"

namespace memetron {

enum class ParentPairing {
    /// Fresh pair of tournaments for every offspring slot.
    per_offspring,
    /// One pool of N tournament winners per generation; pairs drawn from it.
    fixed_pool,
};

struct GenetronConfig {
    std::uint32_t population_size = 16;
    std::uint32_t best_of_n = 3;
    std::uint32_t max_generations = 3;
    std::uint32_t patience = 3;
    double delta = 1e-6;
    ParentPairing parent_pairing = ParentPairing::per_offspring;
    /// 0 means one offspring per population slot.
    std::uint32_t offspring_per_generation = 0;

    std::uint32_t offspring_count() const noexcept {
        return offspring_per_generation == 0 ? population_size : offspring_per_generation;
    }
};

inline void validate(const GenetronConfig& c) {
    if (c.population_size == 0) throw ValidationError("genetron.population_size: must be positive");
    if (c.max_generations > 0 && c.population_size < 2)
        throw ValidationError("genetron.population_size: must be >= 2 when any generation is evolved");
    if (c.best_of_n == 0) throw ValidationError("genetron.best_of_n: must be positive");
    if (c.patience == 0) throw ValidationError("genetron.patience: must be positive");
    if (c.max_generations > 0 && c.patience > c.max_generations)
        throw ValidationError("genetron.patience: must not exceed max_generations");
    if (!(c.delta >= 0.0)) throw ValidationError("genetron.delta: must be non-negative");
}

/// Samples and scores N initial responses, records them as generation 0 and
/// returns their ids in sample order. Under a pairwise reward the first
/// sample becomes the run anchor.
inline std::vector<CandidateId> init_population(const SearchContext& ctx, HistoryBuffer& history, std::uint32_t n) {
    if (n == 0) throw ValidationError("init_population: N must be positive");
    GeneratorRequest req{ctx.prompt.text, ctx.sampling, n};
    req.params.seed = derive_seed(ctx.seed, std::string_view(ctx.prompt.id), std::uint64_t{0}, std::string_view("init"));
    GeneratorResponse resp = generate(ctx.generator, req, ctx.budget);
    ctx.emit({{"event", "generate"}, {"generation", 0}, {"n", n}, {"model_calls", resp.model_calls_consumed}}, "init");

    if (ctx.reward.spec().kind == RewardKind::anchored_pairwise && !ctx.reward.run_anchor())
        ctx.reward.set_run_anchor(resp.texts.front());

    std::vector<double> rewards;
    rewards.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::optional<double> lp;
        if (resp.logprobs) lp = (*resp.logprobs)[i];
        rewards.push_back(ctx.reward.evaluate(resp.texts[i], lp));
    }
    std::vector<CandidateId> ids;
    ids.reserve(n);
    const std::uint64_t clock = ctx.budget.call_clock();
    for (std::uint32_t i = 0; i < n; ++i) {
        Candidate c;
        c.text = std::move(resp.texts[i]);
        c.reward = rewards[i];
        c.origin = Origin::initial(i);
        c.generation = 0;
        c.created_at_call = clock;
        ids.push_back(history.record(std::move(c), clock));
    }
    return ids;
}

/// Binary tournament: two distinct entrants (when the population has at
/// least two members) drawn uniformly; the better one wins.
inline CandidateId tournament_select(const HistoryBuffer& history, std::span<const CandidateId> population,
                                     SplitMix64& rng) {
    if (population.empty()) throw ValidationError("tournament over an empty population");
    for (CandidateId id : population)
        if (!history.at(id).scored()) throw ValidationError("tournament entrant " + std::to_string(id) + " is unscored");
    if (population.size() == 1) return population.front();
    const std::size_t i = rng.uniform_below(population.size());
    std::size_t j = rng.uniform_below(population.size() - 1);
    if (j >= i) ++j;
    const Candidate& a = history.at(population[i]);
    const Candidate& b = history.at(population[j]);
    return better(a, b) ? a.id : b.id;
}

/// Top-N eligible candidates of the whole history, best first (ties to the
/// lower id). This is the maximiser of the reward sum over size-N subsets.
inline std::vector<CandidateId> elitism(const HistoryBuffer& history, std::uint32_t n) {
    std::vector<const Candidate*> pool;
    for (const Candidate& c : history.candidates())
        if (c.eligible()) pool.push_back(&c);
    if (pool.size() < n)
        throw InsufficientDataError("elitism needs " + std::to_string(n) + " scored candidates, history has " +
                                    std::to_string(pool.size()));
    std::partial_sort(pool.begin(), pool.begin() + n, pool.end(),
                      [](const Candidate* a, const Candidate* b) { return better(*a, *b); });
    std::vector<CandidateId> out;
    out.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) out.push_back(pool[i]->id);
    return out;
}

/// True iff the trace is longer than `patience` and the best reward improved
/// by less than `delta` over the last `patience` entries.
inline bool converged(std::span<const double> best_trace, std::uint32_t patience, double delta) {
    if (best_trace.size() <= patience) return false;
    return best_trace.back() - best_trace[best_trace.size() - 1 - patience] < delta;
}

inline double best_reward(const HistoryBuffer& history, std::span<const CandidateId> ids) {
    const Candidate* best = nullptr;
    for (CandidateId id : ids)
        if (best == nullptr || better(history.at(id), *best)) best = &history.at(id);
    if (best == nullptr) throw EmptyHistoryError("empty population");
    return *best->reward;
}

inline double mean_reward(const HistoryBuffer& history, std::span<const CandidateId> ids) {
    double s = 0.0;
    for (CandidateId id : ids) s += *history.at(id).reward;
    return ids.empty() ? 0.0 : s / static_cast<double>(ids.size());
}

/// Parent pairs for one generation. Unordered pairs are not repeated within
/// a generation unless the pool cannot supply enough distinct ones.
inline std::vector<std::pair<CandidateId, CandidateId>> select_parent_pairs(const SearchContext& ctx,
                                                                            const HistoryBuffer& history,
                                                                            std::span<const CandidateId> population,
                                                                            std::uint32_t count,
                                                                            ParentPairing pairing,
                                                                            std::uint32_t generation,
                                                                            std::vector<CandidateId>* winners = nullptr) {
    constexpr int kMaxAttempts = 32;
    const std::string_view pid = ctx.prompt.id;
    std::set<std::pair<CandidateId, CandidateId>> used;
    std::vector<std::pair<CandidateId, CandidateId>> pairs;
    pairs.reserve(count);
    auto key = [](CandidateId a, CandidateId b) { return std::pair{std::min(a, b), std::max(a, b)}; };
    auto note_winner = [&](CandidateId w) {
        if (winners) winners->push_back(w);
    };

    std::vector<CandidateId> pool;
    SplitMix64 pool_rng = make_stream(ctx.seed, pid, std::uint64_t{generation}, std::string_view("select"),
                                      std::string_view("pool"));
    if (pairing == ParentPairing::fixed_pool) {
        for (std::size_t i = 0; i < population.size(); ++i) {
            pool.push_back(tournament_select(history, population, pool_rng));
            note_winner(pool.back());
        }
    }

    for (std::uint32_t k = 0; k < count; ++k) {
        SplitMix64 rng = make_stream(ctx.seed, pid, std::uint64_t{generation}, std::string_view("select"),
                                     std::uint64_t{k});
        bool found = false;
        CandidateId a = 0, b = 0;
        for (int attempt = 0; attempt < kMaxAttempts && !found; ++attempt) {
            if (pairing == ParentPairing::per_offspring) {
                a = tournament_select(history, population, rng);
                b = tournament_select(history, population, rng);
            } else {
                a = pool[rng.uniform_below(pool.size())];
                b = pool[rng.uniform_below(pool.size())];
            }
            found = a != b && !used.contains(key(a, b));
        }
        if (!found) {
            // Pool exhausted: accept a repeated pair, still with distinct parents.
            std::vector<CandidateId> source(population.begin(), population.end());
            if (pairing == ParentPairing::fixed_pool) {
                std::set<CandidateId> distinct(pool.begin(), pool.end());
                if (distinct.size() >= 2) source.assign(distinct.begin(), distinct.end());
            }
            a = tournament_select(history, source, rng);
            std::vector<CandidateId> rest;
            for (CandidateId id : source)
                if (id != a) rest.push_back(id);
            b = tournament_select(history, rest, rng);
            ctx.emit({{"event", "note"},
                      {"generation", generation},
                      {"slot", k},
                      {"message", "unique parent pairs exhausted; repeating a pair"}},
                     "crossover");
        }
        if (pairing == ParentPairing::per_offspring) {
            note_winner(a);
            note_winner(b);
        }
        used.insert(key(a, b));
        pairs.emplace_back(a, b);
    }
    return pairs;
}

/// Fusion prompt + best-of-n: returns the id of the recorded offspring.
inline CandidateId crossover_mutate(const SearchContext& ctx, HistoryBuffer& history, CandidateId parent_a,
                                    CandidateId parent_b, std::uint32_t n, std::uint32_t generation,
                                    std::uint32_t slot) {
    const Candidate& a = history.at(parent_a);
    const Candidate& b = history.at(parent_b);
    if (!a.scored() || !b.scored()) throw ValidationError("crossover parents must be scored");
    std::string fused = ctx.renderer.render_fusion(ctx.prompt, a, b);
    const std::uint64_t seed = derive_seed(ctx.seed, std::string_view(ctx.prompt.id), std::uint64_t{generation},
                                           std::string_view("crossover"), std::uint64_t{slot});
    auto samples = sample_and_score(ctx, std::move(fused), n, seed, ctx.sampling.temperature, "crossover", generation,
                                    [&](const std::string& text, std::optional<double> lp) {
                                        return ctx.reward.evaluate(text, lp);
                                    });
    const ScoredSample& win = best_sample(samples);
    Candidate c;
    c.text = win.text;
    c.reward = win.score;
    c.origin = Origin::crossover(parent_a, parent_b, win.sample_index);
    c.generation = generation;
    c.created_at_call = ctx.budget.call_clock();
    return history.record(std::move(c), ctx.budget.call_clock());
}

/// Selection + crossover/mutation for one generation. Offspring already
/// recorded are kept in `record.offspring` even when a budget error escapes.
inline void produce_offspring(const SearchContext& ctx, HistoryBuffer& history, std::span<const CandidateId> population,
                              const GenetronConfig& config, GenerationRecord& record) {
    record.population.assign(population.begin(), population.end());
    record.pairs = select_parent_pairs(ctx, history, population, config.offspring_count(), config.parent_pairing,
                                       record.generation, &record.parent_pool);
    for (std::uint32_t k = 0; k < record.pairs.size(); ++k) {
        const auto [a, b] = record.pairs[k];
        record.offspring.push_back(crossover_mutate(ctx, history, a, b, config.best_of_n, record.generation, k));
    }
}

inline void log_generation(const SearchContext& ctx, const HistoryBuffer& history, std::uint32_t generation,
                           std::span<const CandidateId> population) {
    ctx.emit({{"generation", generation},
              {"best", best_reward(history, population)},
              {"mean", mean_reward(history, population)},
              {"model_calls", ctx.budget.call_clock()}},
             generation == 0 ? "init" : "crossover");
}

/// Population search: initialise, then evolve by tournament selection,
/// fusion crossover with best-of-n mutation and elitism over the cumulative
/// history until L generations, patience convergence, or budget exhaustion.
inline SearchResult run_genetron(const SearchContext& ctx, const GenetronConfig& config) {
    validate(config);
    SearchResult result;
    result.history = HistoryBuffer(ctx.prompt.id);
    HistoryBuffer& history = result.history;

    std::vector<CandidateId> population = init_population(ctx, history, config.population_size);
    result.best_trace.push_back(best_reward(history, population));
    log_generation(ctx, history, 0, population);

    for (std::uint32_t g = 1; g <= config.max_generations; ++g) {
        GenerationRecord record;
        record.generation = g;
        try {
            produce_offspring(ctx, history, population, config, record);
        } catch (const BudgetExceeded&) {
            result.stop = StopReason::budget;
            result.generations.push_back(std::move(record));
            break;
        }
        result.generations.push_back(std::move(record));
        population = elitism(history, config.population_size);
        result.best_trace.push_back(best_reward(history, population));
        log_generation(ctx, history, g, population);
        if (converged(result.best_trace, config.patience, config.delta)) {
            result.stop = StopReason::converged;
            break;
        }
    }
    result.best = best_of(history).id;
    return result;
}

/// Baseline: best of N independent samples.
inline SearchResult run_best_of_n(const SearchContext& ctx, std::uint32_t n) {
    SearchResult result;
    result.history = HistoryBuffer(ctx.prompt.id);
    auto ids = init_population(ctx, result.history, n);
    result.best_trace.push_back(best_reward(result.history, ids));
    log_generation(ctx, result.history, 0, ids);
    result.best = best_of(result.history).id;
    return result;
}

} // namespace memetron
