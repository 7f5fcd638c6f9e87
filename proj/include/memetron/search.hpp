#pragma once

// Plumbing shared by the three search algorithms: the per-prompt context, the
// event log, the result type, and best-of-n sampling.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memetron/core.hpp"
#include "memetron/model.hpp"
#include "memetron/prompts.hpp"
#include "memetron/reward.hpp"
#include "memetron/rng.hpp"

namespace memetron {

/// Line-oriented JSONL event sink. Every record gets the `base` fields
/// merged in front of its own.
class EventLog {
public:
    using json = nlohmann::ordered_json;

    explicit EventLog(json base = json::object()) : base_(std::move(base)) {}

    void emit(const json& record) {
        json line = base_;
        for (auto it = record.begin(); it != record.end(); ++it) line[it.key()] = it.value();
        lines_.push_back(line.dump());
    }

    const std::vector<std::string>& lines() const noexcept { return lines_; }
    const json& base() const noexcept { return base_; }
    void set_base(json base) { base_ = std::move(base); }

private:
    json base_;
    std::vector<std::string> lines_;
};

struct SearchContext {
    Prompt prompt;
    Generator& generator;
    RewardEvaluator& reward;
    Budget& budget;
    const PromptRenderer& renderer;
    SamplingParams sampling;
    std::uint64_t seed = 0;
    EventLog* log = nullptr;

    /// Hybrid runs (log base carries "algorithm") also stamp the phase.
    void emit(const nlohmann::ordered_json& record, const char* phase) const {
        if (log == nullptr) return;
        nlohmann::ordered_json r = record;
        if (log->base().contains("algorithm")) r["phase"] = phase;
        log->emit(r);
    }
};

/// Per-generation bookkeeping, kept for analysis and lineage tests.
struct GenerationRecord {
    std::uint32_t generation = 0;
    std::vector<CandidateId> population; // G(g-1), the selection pool
    std::vector<CandidateId> parent_pool; // every tournament winner used
    std::vector<std::pair<CandidateId, CandidateId>> pairs;
    std::vector<CandidateId> offspring; // O(g), after refinement for hybrids
};

struct SearchResult {
    HistoryBuffer history;
    CandidateId best = 0;
    StopReason stop = StopReason::completed;
    /// Best population reward after each completed generation (or step).
    std::vector<double> best_trace;
    std::vector<GenerationRecord> generations;
};

struct ScoredSample {
    std::string text;
    double score = 0.0;
    std::uint32_t sample_index = 0;
    std::optional<double> logprob;
};

/// Draws `n` samples for `prompt_text` and returns them with scores from
/// `score_fn(text, logprob)`, in sample order.
template <typename ScoreFn>
std::vector<ScoredSample> sample_and_score(const SearchContext& ctx, std::string prompt_text, std::uint32_t n,
                                           std::uint64_t request_seed, double temperature, const char* phase,
                                           std::uint32_t generation, ScoreFn&& score_fn) {
    GeneratorRequest req{std::move(prompt_text), ctx.sampling, n};
    req.params.seed = request_seed;
    req.params.temperature = temperature;
    GeneratorResponse resp = generate(ctx.generator, req, ctx.budget);
    ctx.emit({{"event", "generate"},
              {"generation", generation},
              {"n", n},
              {"model_calls", resp.model_calls_consumed}},
             phase);
    std::vector<ScoredSample> out;
    out.reserve(resp.texts.size());
    for (std::uint32_t i = 0; i < resp.texts.size(); ++i) {
        std::optional<double> lp;
        if (resp.logprobs) lp = (*resp.logprobs)[i];
        ScoredSample s{std::move(resp.texts[i]), 0.0, i, lp};
        s.score = score_fn(s.text, lp);
        out.push_back(std::move(s));
    }
    return out;
}

/// argmax by score, ties to the lowest sample index.
inline const ScoredSample& best_sample(const std::vector<ScoredSample>& samples) {
    if (samples.empty()) throw Error("best-of-n over an empty sample set");
    const ScoredSample* best = &samples.front();
    for (const ScoredSample& s : samples)
        if (s.score > best->score) best = &s;
    return *best;
}

} // namespace memetron
