#pragma once

// Builds generators, reward functions and renderers from a RunConfig.

#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include "memetron/config.hpp"
#include "memetron/http.hpp"
#include "memetron/prompts.hpp"
#include "memetron/reward.hpp"
#include "memetron/simulated.hpp"

namespace memetron {

/// Reward objects shared by every prompt of a run. All are stateless and
/// safe for concurrent use.
struct RewardComponents {
    std::unique_ptr<ScalarReward> scalar;
    std::unique_ptr<PairwiseComparator> comparator;
    std::unique_ptr<RemoteReward> remote;

    ScalarReward* scalar_ptr() const { return scalar ? scalar.get() : nullptr; }
    PairwiseComparator* comparator_ptr() const { return comparator ? comparator.get() : nullptr; }
};

/// Forwards to a RemoteReward owned elsewhere.
class RemoteScalarView final : public ScalarReward {
public:
    explicit RemoteScalarView(RemoteReward& r) : r_(r) {}
    double score(const Prompt& p, std::string_view text) override { return r_.score(p, text); }
    bool higher_is_better() const override { return r_.higher_is_better(); }
    std::string name() const override { return r_.name(); }

private:
    RemoteReward& r_;
};

class RemoteComparatorView final : public PairwiseComparator {
public:
    explicit RemoteComparatorView(RemoteReward& r) : r_(r) {}
    double compare(const Prompt& p, std::string_view text, std::string_view anchor) override {
        return r_.compare(p, text, anchor);
    }
    std::string name() const override { return r_.name(); }

private:
    RemoteReward& r_;
};

inline std::unique_ptr<ScalarReward> make_scalar_reward(const RunConfig& c, RewardComponents& out) {
    const std::string& f = c.reward.function;
    if (f == "target_match") {
        if (c.reward.target) return std::make_unique<TargetMatchReward>(*c.reward.target);
        return std::make_unique<TargetMatchReward>(
            TargetMatchReward::seeded(c.seed.value_or(0), c.target_alphabet(), c.target_length()));
    }
    if (f == "token_band") return std::make_unique<TokenBandReward>(c.reward.band_lo, c.reward.band_hi);
    if (f == "rugged") return std::make_unique<RuggedReward>(c.seed.value_or(0), c.reward.rugged_k);
    if (f == "remote") return std::make_unique<RemoteScalarView>(*out.remote);
    throw ValidationError("reward.function: unknown value '" + f + "'");
}

inline RewardComponents make_rewards(const RunConfig& c) {
    RewardComponents out;
    const RemoteRewardConfig& rc = c.reward.remote;
    if (!rc.url.empty())
        out.remote = std::make_unique<RemoteReward>(rc.url, RetryPolicy{rc.max_retries, rc.backoff_base_ms, rc.timeout_s},
                                                    rc.higher_is_better);
    if (c.reward.spec.kind == RewardKind::anchored_pairwise) {
        const std::string& k = c.reward.comparator;
        if (k == "length") {
            out.comparator = std::make_unique<LengthComparator>();
        } else if (k == "remote") {
            out.comparator = std::make_unique<RemoteComparatorView>(*out.remote);
        } else {
            out.scalar = make_scalar_reward(c, out);
            out.comparator = std::make_unique<ScalarDifferenceComparator>(*out.scalar);
        }
    } else {
        out.scalar = make_scalar_reward(c, out);
    }
    return out;
}

inline std::unique_ptr<Generator> make_generator(const RunConfig& c,
                                                 std::function<void(const std::string&)> warn = {}) {
    if (c.backend == BackendKind::simulated) return std::make_unique<SimulatedGenerator>(c.simulated, Sentinels{});
    HttpGeneratorConfig h;
    h.base_url = c.http.base_url;
    h.model = c.http.model;
    h.retry = RetryPolicy{c.http.max_retries, c.http.backoff_base_ms, c.http.timeout_s};
    h.max_in_flight = c.http.max_in_flight;
    h.supports_min_p = c.http.supports_min_p;
    h.supports_top_k = c.http.supports_top_k;
    return std::make_unique<HttpGenerator>(std::move(h), std::move(warn));
}

inline PromptRenderer make_renderer(const RunConfig& c) {
    const std::filesystem::path dir = c.templates.dir ? std::filesystem::path(*c.templates.dir) : default_template_dir();
    const std::filesystem::path fusion = c.templates.fusion ? std::filesystem::path(*c.templates.fusion) : dir / "fusion.txt";
    const std::filesystem::path refine = c.templates.refine ? std::filesystem::path(*c.templates.refine) : dir / "refine.txt";
    std::optional<Sentinels> sentinels;
    if (c.sentinels_enabled()) sentinels = Sentinels{};
    return PromptRenderer(PromptTemplate::load(TemplateKind::fusion, fusion),
                          PromptTemplate::load(TemplateKind::refinement, refine), std::move(sentinels));
}

} // namespace memetron
