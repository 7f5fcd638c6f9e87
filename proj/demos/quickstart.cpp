// Evolves 16-character bit strings toward a hidden target with the simulated
// backend and prints the best candidate of each algorithm.

#include <cstdio>

#include "memetron/annetron.hpp"
#include "memetron/genetron.hpp"
#include "memetron/memetron.hpp"
#include "memetron/simulated.hpp"

int main() {
    using namespace memetron;
    const Prompt prompt{"demo", "Write a 16-bit string."};
    SimulatedGenerator generator;
    TargetMatchReward reward("1011001110001111");
    const PromptRenderer renderer = PromptRenderer::from_directory(default_template_dir(), Sentinels{});

    auto report = [&](const char* name, auto&& run) {
        Budget budget(5000, 5000);
        RewardEvaluator eval(prompt, RewardSpec{}, &reward, nullptr, budget);
        SearchContext ctx{prompt, generator, eval, budget, renderer, SamplingParams{}, 42, nullptr};
        const SearchResult r = run(ctx);
        const Candidate& best = r.history.at(r.best);
        std::printf("%-9s best %s  reward %5.1f  candidates %3zu  model calls %4llu\n", name, best.text.c_str(),
                    *best.reward, r.history.size(), static_cast<unsigned long long>(budget.used_model_calls()));
    };

    report("genetron", [](const SearchContext& c) { return run_genetron(c, GenetronConfig{}); });
    report("annetron", [](const SearchContext& c) { return run_annetron(c, AnnetronConfig{}); });
    report("memetron", [](const SearchContext& c) { return run_memetron(c, MemetronConfig{}); });
}
