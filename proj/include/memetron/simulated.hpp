#pragma once

// Deterministic offline generator used for tests and desk-scale experiments.
//
// The backend inspects the rendered prompt for sentinel blocks:
//   response_1 + response_2  -> fusion:     splice the two parents, then up to
//                                           `max_fusion_edits` point edits
//   response                 -> refinement: exactly one point substitution
//   none                     -> plain:      a fresh random string
//
// Sample i of a request seeded with s draws from make_stream(s, i). Plain
// samples draw `length` characters as alphabet[uniform_below(|alphabet|)].
// Fusion samples draw: order bit (uniform_below(2), 1 = second parent first),
// cut point uniform_below(min(|a|, |b|) + 1), then for each of
// `max_fusion_edits` opportunities a uniform01() < p_edit test followed, on
// success, by a position and a replacement character. p_edit =
// min(1, max(min_p, edit_rate * temperature)). Refinement draws a position
// and a replacement among the alphabet characters that differ from the
// current one.

#include <cmath>
#include <string>
#include <vector>

#include "memetron/model.hpp"
#include "memetron/prompts.hpp"
#include "memetron/rng.hpp"

namespace memetron {

struct SimulatedConfig {
    std::string alphabet = "01";
    std::uint32_t length = 16;
    double edit_rate = 0.3;
    std::uint32_t max_fusion_edits = 2;
};

inline void validate(const SimulatedConfig& c) {
    if (c.alphabet.size() < 2) throw ValidationError("simulated.alphabet: needs at least two characters");
    std::string sorted = c.alphabet;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw ValidationError("simulated.alphabet: characters must be distinct");
    if (c.length == 0) throw ValidationError("simulated.length: must be positive");
    if (!(c.edit_rate >= 0.0 && std::isfinite(c.edit_rate))) throw ValidationError("simulated.edit_rate: must be >= 0");
}

enum class PromptClass { plain, fusion, refinement };

struct ClassifiedPrompt {
    PromptClass kind = PromptClass::plain;
    std::string first;  // response_1 or response
    std::string second; // response_2
};

inline ClassifiedPrompt classify_prompt(std::string_view text, const Sentinels& s) {
    auto r1 = s.extract(text, "response_1");
    auto r2 = s.extract(text, "response_2");
    if (r1 || r2) {
        if (!r1 || !r2) throw TemplateParseError("fusion prompt is missing one of its two parent responses");
        return {PromptClass::fusion, std::move(*r1), std::move(*r2)};
    }
    if (auto r = s.extract(text, "response")) return {PromptClass::refinement, std::move(*r), {}};
    if (text.find(s.begin_prefix) != std::string_view::npos)
        throw TemplateParseError("prompt carries an unrecognised sentinel block");
    return {PromptClass::plain, {}, {}};
}

class SimulatedGenerator final : public Generator {
public:
    explicit SimulatedGenerator(SimulatedConfig config = {}, Sentinels sentinels = {})
        : config_(std::move(config)), sentinels_(std::move(sentinels)) {
        validate(config_);
    }

    std::string name() const override { return "simulated"; }
    const SimulatedConfig& config() const noexcept { return config_; }

    GeneratorResponse generate(const GeneratorRequest& request) override {
        validate(request);
        if (!request.params.seed)
            throw ValidationError("simulated backend requires a seeded request");
        const ClassifiedPrompt cp = classify_prompt(request.prompt_text, sentinels_);
        if (cp.kind != PromptClass::plain && (cp.first.empty() || (cp.kind == PromptClass::fusion && cp.second.empty())))
            throw TemplateParseError("embedded parent response is empty");

        GeneratorResponse out;
        out.texts.reserve(request.n);
        std::vector<double> lps;
        for (std::uint32_t i = 0; i < request.n; ++i) {
            SplitMix64 rng = make_stream(*request.params.seed, std::uint64_t{i});
            std::string text;
            switch (cp.kind) {
            case PromptClass::plain: text = sample_plain(rng); break;
            case PromptClass::fusion: text = sample_fusion(rng, cp.first, cp.second, request.params); break;
            case PromptClass::refinement: text = sample_refinement(rng, cp.first); break;
            }
            lps.push_back(logprob(text));
            out.texts.push_back(std::move(text));
        }
        out.logprobs = std::move(lps);
        out.model_calls_consumed = request.n;
        return out;
    }

    /// Log-probability of `text` under uniform per-character sampling.
    double logprob(std::string_view text) const {
        return -static_cast<double>(text.size()) * std::log(static_cast<double>(config_.alphabet.size()));
    }

    double edit_probability(const SamplingParams& p) const {
        return std::min(1.0, std::max(p.min_p, config_.edit_rate * p.temperature));
    }

private:
    char random_char(SplitMix64& rng) const { return config_.alphabet[rng.uniform_below(config_.alphabet.size())]; }

    std::string sample_plain(SplitMix64& rng) const {
        std::string s(config_.length, '\0');
        for (char& c : s) c = random_char(rng);
        return s;
    }

    std::string sample_fusion(SplitMix64& rng, const std::string& a, const std::string& b,
                              const SamplingParams& params) const {
        const bool swap = rng.uniform_below(2) == 1;
        const std::string& head = swap ? b : a;
        const std::string& tail = swap ? a : b;
        const std::size_t cut = rng.uniform_below(std::min(a.size(), b.size()) + 1);
        std::string child = head.substr(0, cut) + tail.substr(cut);
        const double p = edit_probability(params);
        for (std::uint32_t k = 0; k < config_.max_fusion_edits; ++k) {
            if (rng.uniform01() < p) {
                const std::size_t pos = rng.uniform_below(child.size());
                child[pos] = random_char(rng);
            }
        }
        return child;
    }

    std::string sample_refinement(SplitMix64& rng, const std::string& current) const {
        std::string s = current;
        const std::size_t pos = rng.uniform_below(s.size());
        std::string others;
        for (char c : config_.alphabet)
            if (c != s[pos]) others.push_back(c);
        s[pos] = others[rng.uniform_below(others.size())];
        return s;
    }

    SimulatedConfig config_;
    Sentinels sentinels_;
};

} // namespace memetron
