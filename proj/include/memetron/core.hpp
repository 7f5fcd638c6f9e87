#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "memetron/errors.hpp"

namespace memetron {

using CandidateId = std::uint64_t;

struct Prompt {
    std::string id;
    std::string text;
};

inline void validate(const Prompt& p) {
    if (p.id.empty()) throw ValidationError("prompt.id: must be non-empty");
    if (p.text.empty()) throw ValidationError("prompt.text: must be non-empty (prompt '" + p.id + "')");
}

/// Decoding knobs forwarded to a generator. Defaults are the experimental
/// settings used for the preference-alignment runs.
struct SamplingParams {
    double temperature = 1.5;
    std::uint32_t top_k = 50; // 0 disables
    double top_p = 1.0;
    double min_p = 0.1;
    std::uint32_t max_tokens = 4098; // per completion
    std::optional<std::uint64_t> seed;
};

inline void validate(const SamplingParams& s) {
    if (!std::isfinite(s.temperature) || s.temperature < 0.0)
        throw ValidationError("sampling.temperature: must be a finite non-negative real");
    if (!(s.top_p > 0.0 && s.top_p <= 1.0)) throw ValidationError("sampling.top_p: must lie in (0, 1]");
    if (!(s.min_p >= 0.0 && s.min_p <= 1.0)) throw ValidationError("sampling.min_p: must lie in [0, 1]");
    if (s.max_tokens == 0) throw ValidationError("sampling.max_tokens: must be positive");
}

enum class OriginKind { initial, crossover, refinement };

inline const char* to_string(OriginKind k) {
    switch (k) {
    case OriginKind::initial: return "initial";
    case OriginKind::crossover: return "crossover";
    case OriginKind::refinement: return "refinement";
    }
    return "?";
}

/// Lineage of a candidate. `accepted` is false only for annealing proposals
/// that lost the Metropolis draw; those are kept for analysis but never
/// become the search state, a population member, or the final answer.
struct Origin {
    OriginKind kind = OriginKind::initial;
    std::vector<CandidateId> parents;
    std::optional<std::uint32_t> sample_index;
    std::optional<std::uint32_t> step;
    bool accepted = true;

    static Origin initial(std::uint32_t sample_index) {
        return Origin{OriginKind::initial, {}, sample_index, std::nullopt, true};
    }
    static Origin crossover(CandidateId a, CandidateId b, std::uint32_t sample_index) {
        return Origin{OriginKind::crossover, {a, b}, sample_index, std::nullopt, true};
    }
    static Origin refinement(CandidateId parent, std::uint32_t step, std::uint32_t sample_index, bool accepted) {
        return Origin{OriginKind::refinement, {parent}, sample_index, step, accepted};
    }

    friend bool operator==(const Origin&, const Origin&) = default;
};

struct Candidate {
    CandidateId id = 0;
    std::string text;
    std::optional<double> reward;
    Origin origin;
    std::uint32_t generation = 0;
    std::uint64_t created_at_call = 0;

    bool scored() const noexcept { return reward.has_value(); }
    /// Eligible for elitism and final selection.
    bool eligible() const noexcept { return reward.has_value() && origin.accepted; }

    friend bool operator==(const Candidate&, const Candidate&) = default;
};

/// Strict "a is better than b": higher reward, ties toward the lower id.
inline bool better(const Candidate& a, const Candidate& b) {
    const double ra = *a.reward;
    const double rb = *b.reward;
    if (ra != rb) return ra > rb;
    return a.id < b.id;
}

/// Append-only record of every candidate produced for one prompt.
class HistoryBuffer {
public:
    explicit HistoryBuffer(std::string prompt_id = {}) : prompt_id_(std::move(prompt_id)) {}

    const std::string& prompt_id() const noexcept { return prompt_id_; }
    std::span<const Candidate> candidates() const noexcept { return candidates_; }
    std::size_t size() const noexcept { return candidates_.size(); }
    bool empty() const noexcept { return candidates_.empty(); }
    const Candidate& at(CandidateId id) const {
        if (id >= candidates_.size()) throw DanglingParentError("unknown candidate id " + std::to_string(id));
        return candidates_[id];
    }
    bool contains(CandidateId id) const noexcept { return id < candidates_.size(); }

    /// Appends `c`, assigning the next id. The caller-supplied id is ignored.
    CandidateId record(Candidate c) {
        for (CandidateId p : c.origin.parents) {
            if (!contains(p))
                throw DanglingParentError("candidate references nonexistent parent id " + std::to_string(p));
        }
        if (c.reward && !std::isfinite(*c.reward))
            throw NonFiniteRewardError("refusing to record a non-finite reward");
        c.id = candidates_.size();
        candidates_.push_back(std::move(c));
        return candidates_.back().id;
    }

    /// As above, additionally refusing a candidate whose creation call index
    /// was never charged to the budget.
    CandidateId record(Candidate c, std::uint64_t accounted_model_calls) {
        if (c.created_at_call > accounted_model_calls)
            throw BudgetExceeded("candidate claims model call " + std::to_string(c.created_at_call) +
                                 " but only " + std::to_string(accounted_model_calls) + " were accounted");
        return record(std::move(c));
    }

private:
    std::string prompt_id_;
    std::vector<Candidate> candidates_;
};

/// Highest-reward eligible candidate among the first `prefix` entries
/// (ties to the lowest id).
inline const Candidate& best_of(const HistoryBuffer& history, std::size_t prefix) {
    const Candidate* best = nullptr;
    auto cs = history.candidates().first(std::min(prefix, history.size()));
    for (const Candidate& c : cs) {
        if (!c.eligible()) continue;
        if (best == nullptr || better(c, *best)) best = &c;
    }
    if (best == nullptr) throw EmptyHistoryError("history holds no scored candidate");
    return *best;
}

inline const Candidate& best_of(const HistoryBuffer& history) { return best_of(history, history.size()); }

/// Model-call and reward-eval budget. A child budget charges itself and every
/// ancestor, and refuses when any level would be exceeded.
class Budget {
public:
    Budget(std::uint64_t max_model_calls, std::uint64_t max_reward_evals, Budget* parent = nullptr)
        : max_calls_(max_model_calls), max_evals_(max_reward_evals), parent_(parent) {
        if (max_model_calls == 0) throw ValidationError("budget.max_model_calls: must be positive");
        if (max_reward_evals == 0) throw ValidationError("budget.max_reward_evals: must be positive");
    }

    Budget(const Budget&) = delete;
    Budget& operator=(const Budget&) = delete;

    std::uint64_t max_model_calls() const noexcept { return max_calls_; }
    std::uint64_t max_reward_evals() const noexcept { return max_evals_; }
    std::uint64_t used_model_calls() const noexcept { return used_calls_.load(); }
    std::uint64_t used_reward_evals() const noexcept { return used_evals_.load(); }

    std::uint64_t remaining_model_calls() const noexcept {
        std::uint64_t r = max_calls_ - used_calls_.load();
        return parent_ ? std::min(r, parent_->remaining_model_calls()) : r;
    }
    std::uint64_t remaining_reward_evals() const noexcept {
        std::uint64_t r = max_evals_ - used_evals_.load();
        return parent_ ? std::min(r, parent_->remaining_reward_evals()) : r;
    }

    /// Cumulative calls on the root budget (the run-wide call clock).
    std::uint64_t call_clock() const noexcept { return parent_ ? parent_->call_clock() : used_model_calls(); }

    void charge_model_calls(std::uint64_t n) { charge(&Budget::used_calls_, &Budget::max_calls_, n, "model-call"); }
    void charge_reward_evals(std::uint64_t n) { charge(&Budget::used_evals_, &Budget::max_evals_, n, "reward-eval"); }

private:
    using Counter = std::atomic<std::uint64_t> Budget::*;
    using Limit = std::uint64_t Budget::*;

    bool can_charge(Counter counter, Limit limit, std::uint64_t n) const {
        if ((this->*counter).load() + n > this->*limit) return false;
        return parent_ == nullptr || parent_->can_charge(counter, limit, n);
    }

    void commit(Counter counter, std::uint64_t n) {
        (this->*counter) += n;
        if (parent_) parent_->commit(counter, n);
    }

    void charge(Counter counter, Limit limit, std::uint64_t n, const char* what) {
        // A budget belongs to one search loop; charging is not contended.
        if (!can_charge(counter, limit, n))
            throw BudgetExceeded(std::string(what) + " budget exhausted (requested " + std::to_string(n) + ")");
        commit(counter, n);
    }

    std::uint64_t max_calls_;
    std::uint64_t max_evals_;
    std::atomic<std::uint64_t> used_calls_{0};
    std::atomic<std::uint64_t> used_evals_{0};
    Budget* parent_;
};

struct TemperatureSchedule {
    double t0 = 1.5;
    double alpha = 0.9;
    double t_floor = 1e-6;
};

inline void validate(const TemperatureSchedule& s) {
    if (!(std::isfinite(s.t0) && s.t0 > 0.0)) throw ValidationError("schedule.t0: must be positive");
    if (!(s.alpha > 0.0 && s.alpha < 1.0)) throw ValidationError("schedule.alpha: must lie in (0, 1)");
    if (!(std::isfinite(s.t_floor) && s.t_floor >= 0.0)) throw ValidationError("schedule.t_floor: must be non-negative");
}

/// One geometric cooling step, floored at `t_floor`.
inline double cool(double temperature, const TemperatureSchedule& s) {
    return std::max(s.alpha * temperature, s.t_floor);
}

/// Temperature after `steps` cooling steps from t0.
inline double temperature_at(const TemperatureSchedule& s, std::uint32_t steps) {
    double t = s.t0;
    for (std::uint32_t i = 0; i < steps; ++i) t = cool(t, s);
    return t;
}

enum class StopReason { completed, converged, budget };

inline const char* to_string(StopReason r) {
    switch (r) {
    case StopReason::completed: return "completed";
    case StopReason::converged: return "converged";
    case StopReason::budget: return "budget";
    }
    return "?";
}

} // namespace memetron
