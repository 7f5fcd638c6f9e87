#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "memetron/core.hpp"
#include "memetron/errors.hpp"
#include "memetron/rng.hpp"

namespace memetron {

enum class RewardKind { scalar, anchored_pairwise, composite };
enum class AnchorPolicy { none, fixed_initial };

struct RewardSpec {
    RewardKind kind = RewardKind::scalar;
    std::optional<double> alpha;
    AnchorPolicy anchor_policy = AnchorPolicy::none;
};

inline void validate(const RewardSpec& s) {
    if ((s.kind == RewardKind::composite) != s.alpha.has_value())
        throw ValidationError("reward.alpha: present iff kind is composite");
    if (s.alpha && !(*s.alpha >= 0.0 && *s.alpha <= 1.0)) throw ValidationError("reward.alpha: must lie in [0, 1]");
    if ((s.kind == RewardKind::anchored_pairwise) != (s.anchor_policy == AnchorPolicy::fixed_initial))
        throw ValidationError("reward.anchor_policy: fixed_initial iff kind is anchored_pairwise");
}

/// r(x, y): a scalar score for one response.
class ScalarReward {
public:
    virtual ~ScalarReward() = default;
    virtual double score(const Prompt& prompt, std::string_view text) = 0;
    virtual bool higher_is_better() const { return true; }
    virtual std::string name() const = 0;
};

/// Preference of `text` over `anchor`; higher means more preferred. No
/// antisymmetry is assumed.
class PairwiseComparator {
public:
    virtual ~PairwiseComparator() = default;
    virtual double compare(const Prompt& prompt, std::string_view text, std::string_view anchor) = 0;
    virtual std::string name() const = 0;
};

inline double composite(double task_reward, double logprob, double alpha) {
    if (!std::isfinite(task_reward) || !std::isfinite(logprob) || !std::isfinite(alpha))
        throw NonFiniteRewardError("composite reward: non-finite input");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("composite reward: alpha must lie in [0, 1]");
    return alpha * task_reward + (1.0 - alpha) * logprob;
}

inline std::size_t levenshtein(std::string_view a, std::string_view b) {
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diag = up;
        }
    }
    return row[b.size()];
}

/// Negative edit distance to a hidden per-prompt target.
class TargetMatchReward final : public ScalarReward {
public:
    using TargetFn = std::function<std::string(const Prompt&)>;

    explicit TargetMatchReward(std::string target)
        : target_fn_([t = std::move(target)](const Prompt&) { return t; }) {}
    explicit TargetMatchReward(TargetFn fn) : target_fn_(std::move(fn)) {}

    /// Each prompt gets its own random target over `alphabet`.
    static TargetMatchReward seeded(std::uint64_t seed, std::string alphabet, std::uint32_t length) {
        return TargetMatchReward(TargetFn([=](const Prompt& p) { return seeded_target(seed, alphabet, length, p.id); }));
    }

    static std::string seeded_target(std::uint64_t seed, std::string_view alphabet, std::uint32_t length,
                                     std::string_view prompt_id) {
        SplitMix64 rng = make_stream(seed, std::string_view("target"), prompt_id);
        std::string t(length, '\0');
        for (char& c : t) c = alphabet[rng.uniform_below(alphabet.size())];
        return t;
    }

    std::string target(const Prompt& p) const { return target_fn_(p); }

    double score(const Prompt& prompt, std::string_view text) override {
        const std::size_t d = levenshtein(text, target_fn_(prompt));
        return d == 0 ? 0.0 : -static_cast<double>(d);
    }
    std::string name() const override { return "target_match"; }

private:
    TargetFn target_fn_;
};

/// Zero inside [lo, hi] whitespace-separated tokens, minus the distance to
/// the band outside it.
class TokenBandReward final : public ScalarReward {
public:
    TokenBandReward(std::size_t lo, std::size_t hi) : lo_(lo), hi_(hi) {
        if (lo > hi) throw ValidationError("token band: lo must not exceed hi");
    }

    static std::size_t count_tokens(std::string_view text) {
        std::size_t n = 0;
        bool in_token = false;
        for (unsigned char c : text) {
            const bool space = std::isspace(c) != 0;
            if (!space && !in_token) ++n;
            in_token = !space;
        }
        return n;
    }

    double score(const Prompt&, std::string_view text) override {
        const std::size_t n = count_tokens(text);
        if (n < lo_) return -static_cast<double>(lo_ - n);
        if (n > hi_) return -static_cast<double>(n - hi_);
        return 0.0;
    }
    std::string name() const override { return "token_band"; }

private:
    std::size_t lo_, hi_;
};

/// NK-style rugged landscape: mean over positions of a hashed contribution of
/// each character together with its `k` right neighbours. Neighbouring
/// one-edit moves change up to k + 1 terms at once, producing many local
/// optima.
class RuggedReward final : public ScalarReward {
public:
    RuggedReward(std::uint64_t seed, std::uint32_t k) : seed_(seed), k_(k) {}

    double score(const Prompt& prompt, std::string_view text) override {
        if (text.empty()) return 0.0;
        double total = 0.0;
        for (std::size_t i = 0; i < text.size(); ++i) {
            const std::string_view window = text.substr(i, std::min<std::size_t>(k_ + 1, text.size() - i));
            const std::uint64_t h = derive_seed(seed_, std::string_view(prompt.id), std::uint64_t{i}, window);
            total += static_cast<double>(h >> 11) * 0x1.0p-53;
        }
        return total / static_cast<double>(text.size());
    }
    std::string name() const override { return "rugged"; }

private:
    std::uint64_t seed_;
    std::uint32_t k_;
};

/// score(a, anchor) = len(a) - len(anchor).
class LengthComparator final : public PairwiseComparator {
public:
    double compare(const Prompt&, std::string_view text, std::string_view anchor) override {
        return static_cast<double>(text.size()) - static_cast<double>(anchor.size());
    }
    std::string name() const override { return "length"; }
};

/// Pairwise view of a scalar reward: r(a) - r(anchor).
class ScalarDifferenceComparator final : public PairwiseComparator {
public:
    explicit ScalarDifferenceComparator(ScalarReward& reward) : reward_(reward) {}
    double compare(const Prompt& p, std::string_view text, std::string_view anchor) override {
        return reward_.score(p, text) - reward_.score(p, anchor);
    }
    std::string name() const override { return "scalar_difference:" + reward_.name(); }

private:
    ScalarReward& reward_;
};

/// Per-prompt scoring front end: maximisation normalisation, finiteness
/// checks, caching keyed by text (and anchor), and refuse-before-call budget
/// accounting. Safe for concurrent calls.
class RewardEvaluator {
public:
    RewardEvaluator(Prompt prompt, RewardSpec spec, ScalarReward* scalar, PairwiseComparator* comparator,
                    Budget& budget)
        : prompt_(std::move(prompt)), spec_(spec), scalar_(scalar), comparator_(comparator), budget_(&budget) {
        validate(spec_);
        if (spec_.kind == RewardKind::anchored_pairwise && comparator_ == nullptr)
            throw ValidationError("reward: anchored_pairwise needs a pairwise comparator");
        if (spec_.kind != RewardKind::anchored_pairwise && scalar_ == nullptr)
            throw ValidationError("reward: scalar/composite needs a scalar reward function");
    }

    const Prompt& prompt() const noexcept { return prompt_; }
    const RewardSpec& spec() const noexcept { return spec_; }
    Budget& budget() noexcept { return *budget_; }

    /// Points subsequent charges at another budget (e.g. a fair-share child).
    /// Returns the previous one.
    Budget& rebind_budget(Budget& b) noexcept { return *std::exchange(budget_, &b); }

    void set_run_anchor(std::string anchor) {
        std::lock_guard lock(mu_);
        run_anchor_ = std::move(anchor);
    }
    const std::optional<std::string>& run_anchor() const noexcept { return run_anchor_; }

    /// r(x, text). For a pairwise model this is the anchored score against
    /// the run anchor.
    double evaluate(std::string_view text, std::optional<double> logprob = std::nullopt) {
        if (text.empty()) throw ValidationError("reward: text must be non-empty");
        {
            std::lock_guard lock(mu_);
            if (auto it = cache_.find(text); it != cache_.end()) return it->second;
        }
        double value = 0.0;
        switch (spec_.kind) {
        case RewardKind::scalar:
            budget_->charge_reward_evals(1);
            value = checked(normalised(scalar_->score(prompt_, text)));
            break;
        case RewardKind::composite:
            if (!logprob) throw ValidationError("reward: composite kind needs a log-probability for every sample");
            budget_->charge_reward_evals(1);
            value = checked(composite(normalised(scalar_->score(prompt_, text)), *logprob, *spec_.alpha));
            break;
        case RewardKind::anchored_pairwise: {
            std::string anchor;
            {
                std::lock_guard lock(mu_);
                if (!run_anchor_) throw ValidationError("reward: pairwise scoring requested before a run anchor was set");
                anchor = *run_anchor_;
            }
            value = anchored_score(text, anchor);
            break;
        }
        }
        std::lock_guard lock(mu_);
        return cache_.emplace(std::string(text), value).first->second;
    }

    /// Preference score of `text` relative to `anchor`. Scalar kinds reduce
    /// to evaluate(text) - evaluate(anchor).
    double anchored_score(std::string_view text, std::string_view anchor,
                          std::optional<double> logprob = std::nullopt) {
        if (spec_.kind != RewardKind::anchored_pairwise) return evaluate(text, logprob) - evaluate(anchor);
        auto key = std::make_pair(std::string(anchor), std::string(text));
        {
            std::lock_guard lock(mu_);
            if (auto it = anchored_cache_.find(key); it != anchored_cache_.end()) return it->second;
        }
        budget_->charge_reward_evals(1);
        const double value = checked(comparator_->compare(prompt_, text, anchor));
        std::lock_guard lock(mu_);
        return anchored_cache_.emplace(std::move(key), value).first->second;
    }

private:
    double normalised(double v) const { return scalar_->higher_is_better() ? v : -v; }

    static double checked(double v) {
        if (!std::isfinite(v)) throw NonFiniteRewardError("reward function returned a non-finite value");
        return v;
    }

    Prompt prompt_;
    RewardSpec spec_;
    ScalarReward* scalar_;
    PairwiseComparator* comparator_;
    Budget* budget_;
    std::mutex mu_;
    std::optional<std::string> run_anchor_;
    std::map<std::string, double, std::less<>> cache_;
    std::map<std::pair<std::string, std::string>, double> anchored_cache_;
};

/// Joint scalar scores for a response set under a pairwise model: each
/// response's mean preference against every other response in the set.
inline std::vector<double> rerank_set(PairwiseComparator& cmp, const Prompt& prompt,
                                      const std::vector<std::string>& texts) {
    std::vector<double> scores(texts.size(), 0.0);
    if (texts.size() < 2) return scores;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < texts.size(); ++j)
            if (i != j) s += cmp.compare(prompt, texts[i], texts[j]);
        scores[i] = s / static_cast<double>(texts.size() - 1);
    }
    return scores;
}

} // namespace memetron
