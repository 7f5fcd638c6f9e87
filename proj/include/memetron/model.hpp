#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "memetron/core.hpp"
#include "memetron/errors.hpp"
#include "memetron/rng.hpp"

namespace memetron {

struct GeneratorRequest {
    std::string prompt_text;
    SamplingParams params;
    std::uint32_t n = 1;
};

struct GeneratorResponse {
    std::vector<std::string> texts;
    std::optional<std::vector<double>> logprobs;
    std::uint64_t model_calls_consumed = 0;
};

/// A text generator pi(y | x). Implementations must return exactly
/// `request.n` completions in a stable order.
class Generator {
public:
    virtual ~Generator() = default;
    virtual GeneratorResponse generate(const GeneratorRequest& request) = 0;
    virtual std::string name() const = 0;
};

inline void validate(const GeneratorRequest& r) {
    if (r.n == 0) throw ValidationError("generator request: n must be >= 1");
    if (r.prompt_text.empty()) throw ValidationError("generator request: prompt_text must be non-empty");
    validate(r.params);
}

inline bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

/// Budget-checked generation. Charges `n` calls before invoking the backend;
/// blank completions are re-drawn once (one extra charged call each) before
/// an EmptyCompletionError naming the offending index is raised.
inline GeneratorResponse generate(Generator& backend, const GeneratorRequest& request, Budget& budget) {
    validate(request);
    budget.charge_model_calls(request.n);
    GeneratorResponse resp = backend.generate(request);
    if (resp.texts.size() != request.n)
        throw TransportError("backend returned " + std::to_string(resp.texts.size()) + " completions, expected " +
                             std::to_string(request.n), false);
    if (resp.logprobs && resp.logprobs->size() != request.n) resp.logprobs.reset();
    resp.model_calls_consumed = request.n;

    for (std::size_t i = 0; i < resp.texts.size(); ++i) {
        if (!blank(resp.texts[i])) continue;
        GeneratorRequest retry = request;
        retry.n = 1;
        retry.params.seed = derive_seed(request.params.seed.value_or(0), std::string_view("redraw"), i);
        budget.charge_model_calls(1);
        GeneratorResponse again = backend.generate(retry);
        resp.model_calls_consumed += 1;
        if (again.texts.size() != 1 || blank(again.texts[0]))
            throw EmptyCompletionError("completion " + std::to_string(i) + " was empty after one re-draw", i);
        resp.texts[i] = std::move(again.texts[0]);
        if (resp.logprobs) {
            if (again.logprobs && again.logprobs->size() == 1)
                (*resp.logprobs)[i] = (*again.logprobs)[0];
            else
                resp.logprobs.reset();
        }
    }
    return resp;
}

} // namespace memetron
