#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "memetron/core.hpp"
#include "memetron/genetron.hpp"
#include "memetron/search.hpp"

namespace memetron {

enum class AnnealScoring {
    /// Proposals scored with the run's reward function.
    direct_reward,
    /// Proposals scored against the pre-annealing response as a fixed anchor.
    anchored,
};

/// Generator temperature during annealing: offset + scale * T_t when enabled,
/// otherwise the run's sampling temperature.
struct TemperatureCoupling {
    bool enabled = true;
    double scale = 1.0;
    double offset = 0.0;
};

struct AnnetronConfig {
    std::uint32_t steps = 7;
    std::uint32_t patience = 3;
    std::uint32_t best_of_n = 3;
    double delta = 1e-6;
    TemperatureSchedule schedule;
    AnnealScoring scoring = AnnealScoring::direct_reward;
    TemperatureCoupling coupling;
};

inline void validate(const AnnetronConfig& c) {
    if (c.patience == 0) throw ValidationError("annetron.patience: must be positive");
    if (c.steps > 0 && c.patience > c.steps) throw ValidationError("annetron.patience: must not exceed steps");
    if (c.best_of_n == 0) throw ValidationError("annetron.best_of_n: must be positive");
    if (!(c.delta >= 0.0)) throw ValidationError("annetron.delta: must be non-negative");
    validate(c.schedule);
    if (!std::isfinite(c.coupling.scale) || !std::isfinite(c.coupling.offset))
        throw ValidationError("annetron.coupling: scale and offset must be finite");
    if (c.coupling.enabled && (c.coupling.offset < 0.0 || c.coupling.scale < 0.0))
        throw ValidationError("annetron.coupling: scale and offset must be non-negative");
}

/// Metropolis acceptance probability for a maximisation problem:
/// 1 when delta_r >= 0, else exp(delta_r / T).
inline double acceptance_probability(double delta_r, double temperature) {
    if (!(temperature > 0.0)) throw ValidationError("metropolis: temperature must be positive");
    if (!std::isfinite(delta_r)) throw NonFiniteRewardError("metropolis: reward difference must be finite");
    return delta_r >= 0.0 ? 1.0 : std::exp(delta_r / temperature);
}

/// Improvements are accepted without consuming randomness; worse proposals
/// consume exactly one uniform draw.
inline bool metropolis_accept(double delta_r, double temperature, SplitMix64& rng) {
    const double p = acceptance_probability(delta_r, temperature);
    if (delta_r >= 0.0) return true;
    return rng.uniform01() < p;
}

struct AnnealOutcome {
    /// argmax over the accepted states and the starting candidate.
    CandidateId best = 0;
    std::uint32_t steps_used = 0;
    StopReason stop = StopReason::completed;
    /// Best score so far, starting with the start candidate's score.
    std::vector<double> best_trace;
    std::vector<CandidateId> accepted;
};

/// Simulated-annealing refinement of `start` (already in `history`). Every
/// proposal is recorded: accepted ones advance the state, rejected ones are
/// kept flagged. `slot` separates independent runs within one generation.
inline AnnealOutcome anneal(const SearchContext& ctx, HistoryBuffer& history, CandidateId start,
                            const AnnetronConfig& config, std::uint32_t generation, std::uint32_t slot) {
    validate(config);
    const Candidate& y0 = history.at(start);
    if (!y0.scored()) throw ValidationError("annealing start candidate must be scored");
    const std::string anchor = y0.text;
    const bool anchored = config.scoring == AnnealScoring::anchored;
    const bool pairwise = ctx.reward.spec().kind == RewardKind::anchored_pairwise;
    const std::string_view pid = ctx.prompt.id;

    auto score_text = [&](const std::string& text, std::optional<double> lp) {
        return anchored ? ctx.reward.anchored_score(text, anchor, lp) : ctx.reward.evaluate(text, lp);
    };

    AnnealOutcome out;
    out.best = start;
    CandidateId current = start;
    double current_score = anchored ? ctx.reward.anchored_score(anchor, anchor) : *y0.reward;
    double best_score = current_score;
    out.best_trace.push_back(best_score);
    double temperature = config.schedule.t0;

    for (std::uint32_t t = 0; t < config.steps; ++t) {
        const double sample_temp = config.coupling.enabled
                                       ? config.coupling.offset + config.coupling.scale * temperature
                                       : ctx.sampling.temperature;
        std::vector<ScoredSample> samples;
        try {
            std::string refine = ctx.renderer.render_refine(ctx.prompt, history.at(current));
            const std::uint64_t seed = derive_seed(ctx.seed, pid, std::uint64_t{generation}, std::string_view("refine"),
                                                   std::uint64_t{slot}, std::uint64_t{t});
            samples = sample_and_score(ctx, std::move(refine), config.best_of_n, seed, sample_temp, "anneal",
                                       generation, score_text);
        } catch (const BudgetExceeded&) {
            out.stop = StopReason::budget;
            break;
        }
        const ScoredSample& pick = best_sample(samples);
        const double delta_r = pick.score - current_score;
        SplitMix64 accept_rng = make_stream(ctx.seed, pid, std::uint64_t{generation}, std::string_view("accept"),
                                            std::uint64_t{slot}, std::uint64_t{t});
        const bool accepted = metropolis_accept(delta_r, temperature, accept_rng);

        Candidate c;
        c.text = pick.text;
        // Scalar rewards are recorded on the run scale (cached, no extra
        // budget); pairwise models only have the anchored scale.
        c.reward = (anchored && !pairwise) ? ctx.reward.evaluate(pick.text, pick.logprob) : pick.score;
        c.origin = Origin::refinement(current, t, pick.sample_index, accepted);
        c.generation = generation;
        c.created_at_call = ctx.budget.call_clock();
        const CandidateId id = history.record(std::move(c), ctx.budget.call_clock());

        ctx.emit({{"step", t},
                  {"T", temperature},
                  {"proposal_reward", pick.score},
                  {"delta", delta_r},
                  {"accepted", accepted},
                  {"generation", generation},
                  {"slot", slot}},
                 "anneal");

        ++out.steps_used;
        if (accepted) {
            current = id;
            current_score = pick.score;
            out.accepted.push_back(id);
            if (pick.score > best_score) {
                best_score = pick.score;
                out.best = id;
            }
        }
        temperature = cool(temperature, config.schedule);
        out.best_trace.push_back(best_score);
        if (converged(out.best_trace, config.patience, config.delta)) {
            out.stop = StopReason::converged;
            break;
        }
    }
    return out;
}

/// Single-trajectory search: one initial sample refined by annealing.
inline SearchResult run_annetron(const SearchContext& ctx, const AnnetronConfig& config) {
    validate(config);
    SearchResult result;
    result.history = HistoryBuffer(ctx.prompt.id);
    auto ids = init_population(ctx, result.history, 1);
    AnnealOutcome o = anneal(ctx, result.history, ids.front(), config, 0, 0);
    result.best = o.best;
    result.stop = o.stop;
    result.best_trace = std::move(o.best_trace);
    return result;
}

} // namespace memetron
