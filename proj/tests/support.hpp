#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "memetron/annetron.hpp"
#include "memetron/genetron.hpp"
#include "memetron/memetron.hpp"
#include "memetron/simulated.hpp"

namespace testing_support {

using namespace memetron;

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline const nlohmann::json& reference() {
    static const nlohmann::json j =
        nlohmann::json::parse(slurp(std::filesystem::path(MEMETRON_FIXTURE_DIR) / "reference.json"));
    return j;
}

/// Everything a search needs, wired to the simulated backend.
struct SimEnv {
    Prompt prompt;
    SimulatedGenerator generator;
    std::unique_ptr<ScalarReward> reward;
    std::unique_ptr<PairwiseComparator> comparator;
    PromptRenderer renderer;
    Budget budget;
    RewardEvaluator eval;
    EventLog log;
    std::uint64_t seed;

    explicit SimEnv(std::uint64_t seed_, std::string target = "1011001110001111", RewardSpec spec = {},
                    std::uint64_t calls = 1'000'000, std::uint64_t evals = 1'000'000, SimulatedConfig sim = {},
                    std::string prompt_id = "q")
        : prompt{std::move(prompt_id), "Produce a bit string."},
          generator(sim, Sentinels{}),
          reward(std::make_unique<TargetMatchReward>(std::move(target))),
          comparator(std::make_unique<LengthComparator>()),
          renderer(PromptRenderer::from_directory(default_template_dir(), Sentinels{})),
          budget(calls, evals),
          eval(prompt, spec, reward.get(), comparator.get(), budget),
          log(nlohmann::ordered_json::object()),
          seed(seed_) {}

    SearchContext ctx() { return SearchContext{prompt, generator, eval, budget, renderer, SamplingParams{}, seed, &log}; }

    void hybrid_log() { log.set_base({{"algorithm", "memetron"}}); }
};

/// Sum of model calls over logged generate events.
inline std::uint64_t logged_calls(const EventLog& log) {
    std::uint64_t total = 0;
    for (const std::string& line : log.lines()) {
        const auto j = nlohmann::json::parse(line);
        if (j.value("event", "") == "generate") total += j.at("model_calls").get<std::uint64_t>();
    }
    return total;
}

/// Running best over eligible candidates in id order.
inline bool running_best_monotone(const HistoryBuffer& h) {
    double best = -std::numeric_limits<double>::infinity();
    double prev = best;
    for (const Candidate& c : h.candidates()) {
        if (c.eligible()) best = std::max(best, *c.reward);
        if (best < prev) return false;
        prev = best;
    }
    return true;
}

inline std::string transcript(const HistoryBuffer& h) {
    std::string out;
    for (const Candidate& c : h.candidates()) {
        out += std::to_string(c.id) + "|" + c.text + "|" + (c.reward ? std::to_string(*c.reward) : "null") + "|" +
               to_string(c.origin.kind) + "|";
        for (auto p : c.origin.parents) out += std::to_string(p) + ",";
        out += "|" + std::to_string(c.generation) + "\n";
    }
    return out;
}

} // namespace testing_support
