#pragma once

#include <cstdint>
#include <vector>

#include "memetron/annetron.hpp"
#include "memetron/genetron.hpp"

namespace memetron {

struct MemetronConfig {
    GenetronConfig genetron;
    AnnetronConfig annetron;
};

namespace detail {

/// Points the context and the reward front end at a child budget for the
/// lifetime of the guard.
class BudgetScope {
public:
    BudgetScope(const SearchContext& ctx, Budget& child)
        : ctx_(ctx), scoped_{ctx.prompt, ctx.generator, ctx.reward, child, ctx.renderer, ctx.sampling, ctx.seed, ctx.log},
          previous_(ctx.reward.rebind_budget(child)) {}
    ~BudgetScope() { ctx_.reward.rebind_budget(previous_); }
    BudgetScope(const BudgetScope&) = delete;
    BudgetScope& operator=(const BudgetScope&) = delete;

    const SearchContext& context() const noexcept { return scoped_; }

private:
    const SearchContext& ctx_;
    SearchContext scoped_;
    Budget& previous_;
};

/// Anneals each id in `targets` in order with a fair share of what is left of
/// the budget; replaces each entry with the refined best.
inline void refine_all(const SearchContext& ctx, HistoryBuffer& history, std::vector<CandidateId>& targets,
                       const AnnetronConfig& config, std::uint32_t generation) {
    if (config.steps == 0) return;
    for (std::size_t k = 0; k < targets.size(); ++k) {
        const std::uint64_t left = targets.size() - k;
        const std::uint64_t calls = ctx.budget.remaining_model_calls() / left;
        const std::uint64_t evals = ctx.budget.remaining_reward_evals() / left;
        if (calls == 0 || evals == 0) continue;
        Budget share(calls, evals, &ctx.budget);
        BudgetScope scope(ctx, share);
        AnnealOutcome o = anneal(scope.context(), history, targets[k], config, generation, static_cast<std::uint32_t>(k));
        targets[k] = o.best;
    }
}

} // namespace detail

/// Memetic hybrid: each generation's offspring are refined by annealing
/// before the history update and elitism. With zero generations the initial
/// population itself is refined, so a population of one reduces to a single
/// annealing run.
inline SearchResult run_memetron(const SearchContext& ctx, const MemetronConfig& config) {
    validate(config.genetron);
    validate(config.annetron);
    SearchResult result;
    result.history = HistoryBuffer(ctx.prompt.id);
    HistoryBuffer& history = result.history;
    const GenetronConfig& gc = config.genetron;

    std::vector<CandidateId> population = init_population(ctx, history, gc.population_size);
    result.best_trace.push_back(best_reward(history, population));
    log_generation(ctx, history, 0, population);

    if (gc.max_generations == 0) {
        std::vector<CandidateId> refined = population;
        detail::refine_all(ctx, history, refined, config.annetron, 0);
        GenerationRecord record;
        record.population = population;
        record.offspring = refined;
        result.generations.push_back(std::move(record));
        result.best = best_of(history).id;
        return result;
    }

    for (std::uint32_t g = 1; g <= gc.max_generations; ++g) {
        GenerationRecord record;
        record.generation = g;
        bool exhausted = false;
        try {
            produce_offspring(ctx, history, population, gc, record);
        } catch (const BudgetExceeded&) {
            exhausted = true;
        }
        detail::refine_all(ctx, history, record.offspring, config.annetron, g);
        result.generations.push_back(std::move(record));
        if (exhausted) {
            result.stop = StopReason::budget;
            break;
        }
        population = elitism(history, gc.population_size);
        result.best_trace.push_back(best_reward(history, population));
        log_generation(ctx, history, g, population);
        if (converged(result.best_trace, gc.patience, gc.delta)) {
            result.stop = StopReason::converged;
            break;
        }
    }
    result.best = best_of(history).id;
    return result;
}

} // namespace memetron
