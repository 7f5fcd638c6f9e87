#pragma once

// Run configuration: one JSON document with a versioned schema field.
// Unknown keys are rejected; errors name the offending field.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "memetron/annetron.hpp"
#include "memetron/core.hpp"
#include "memetron/errors.hpp"
#include "memetron/genetron.hpp"
#include "memetron/io.hpp"
#include "memetron/memetron.hpp"
#include "memetron/reward.hpp"
#include "memetron/simulated.hpp"

namespace memetron {

inline constexpr const char* kConfigSchema = "memetron.config/1";

enum class Algorithm { genetron, annetron, memetron, best_of_n_baseline };
enum class BackendKind { simulated, http };

inline const char* to_string(Algorithm a) {
    switch (a) {
    case Algorithm::genetron: return "genetron";
    case Algorithm::annetron: return "annetron";
    case Algorithm::memetron: return "memetron";
    case Algorithm::best_of_n_baseline: return "best_of_n_baseline";
    }
    return "?";
}

inline const char* to_string(BackendKind b) { return b == BackendKind::http ? "http" : "simulated"; }

struct HttpBackendConfig {
    std::string base_url;
    std::string model;
    double timeout_s = 120.0;
    std::uint32_t max_retries = 3;
    std::uint32_t backoff_base_ms = 500;
    std::uint32_t max_in_flight = 4;
    bool supports_min_p = false;
    bool supports_top_k = true;
};

struct RemoteRewardConfig {
    std::string url;
    double timeout_s = 60.0;
    std::uint32_t max_retries = 3;
    std::uint32_t backoff_base_ms = 500;
    bool higher_is_better = true;
};

struct RewardConfig {
    RewardSpec spec;
    /// Scalar function: target_match, token_band, rugged or remote.
    std::string function = "target_match";
    /// Pairwise comparator: length, scalar_difference or remote.
    std::string comparator = "length";
    /// Fixed target; when absent each prompt gets a seeded random target.
    std::optional<std::string> target;
    std::optional<std::string> target_alphabet; // defaults to the simulated alphabet
    std::optional<std::uint32_t> target_length; // defaults to the simulated length
    std::uint32_t band_lo = 5;
    std::uint32_t band_hi = 50;
    std::uint32_t rugged_k = 2;
    RemoteRewardConfig remote;
};

struct TemplateConfig {
    std::optional<std::string> dir;
    std::optional<std::string> fusion;
    std::optional<std::string> refine;
    /// Sentinel-wrapped responses; defaults to on for the simulated backend only.
    std::optional<bool> sentinels;
};

struct RunConfig {
    Algorithm algorithm = Algorithm::memetron;
    BackendKind backend = BackendKind::simulated;
    SimulatedConfig simulated;
    HttpBackendConfig http;
    SamplingParams sampling;
    RewardConfig reward;
    GenetronConfig genetron;
    AnnetronConfig annetron;
    std::uint32_t baseline_n = 64;
    std::uint64_t max_model_calls = 1'000'000;
    std::uint64_t max_reward_evals = 1'000'000;
    std::optional<std::uint64_t> seed;
    std::string output_dir = "runs/latest";
    TemplateConfig templates;

    bool sentinels_enabled() const { return templates.sentinels.value_or(backend == BackendKind::simulated); }
    std::string target_alphabet() const { return reward.target_alphabet.value_or(simulated.alphabet); }
    std::uint32_t target_length() const { return reward.target_length.value_or(simulated.length); }
};

namespace detail {

using json = nlohmann::ordered_json;

/// Typed, path-aware access to one JSON object; unknown keys are rejected by
/// finish().
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ValidationError(where() + ": must be an object");
    }

    std::string where(std::string_view key = {}) const {
        if (key.empty()) return path_.empty() ? "config" : path_;
        return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
    }

    bool has(const std::string& key) {
        used_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }

    Section sub(const std::string& key) {
        used_.insert(key);
        return Section(j_.at(key), where(key));
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        if (!has(key)) return;
        const json& v = j_.at(key);
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ValidationError("expected a boolean");
            } else if constexpr (std::is_unsigned_v<T>) {
                if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
                    throw ValidationError("expected a non-negative integer");
                if (v.get<std::uint64_t>() > std::numeric_limits<T>::max()) throw ValidationError("out of range");
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) throw ValidationError("expected a number");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ValidationError("expected a string");
            }
            out = v.get<T>();
        } catch (const ValidationError& e) {
            throw ValidationError(where(key) + ": " + e.what());
        } catch (const json::exception& e) {
            throw ValidationError(where(key) + ": " + e.what());
        }
    }

    template <typename T>
    void read(const std::string& key, std::optional<T>& out) {
        if (!has(key)) return;
        T v{};
        read(key, v);
        out = v;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) throw ValidationError(where(it.key()) + ": unknown key");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

template <typename E, std::size_t K>
E parse_enum(const std::string& text, const std::pair<const char*, E> (&table)[K], const std::string& where) {
    std::string options;
    for (const auto& [name, value] : table) {
        if (text == name) return value;
        options += options.empty() ? name : std::string(", ") + name;
    }
    throw ValidationError(where + ": unknown value '" + text + "' (expected one of " + options + ")");
}

} // namespace detail

/// Parses and validates a configuration document.
inline RunConfig parse_config(const nlohmann::ordered_json& root) {
    using detail::parse_enum;
    using detail::Section;
    RunConfig c;
    Section top(root, "");

    std::string schema;
    top.read("schema", schema);
    if (schema != kConfigSchema)
        throw ValidationError("schema: expected '" + std::string(kConfigSchema) + "', got '" + schema + "'");

    std::string algorithm = "memetron";
    top.read("algorithm", algorithm);
    static constexpr std::pair<const char*, Algorithm> algos[] = {{"genetron", Algorithm::genetron},
                                                                 {"annetron", Algorithm::annetron},
                                                                 {"memetron", Algorithm::memetron},
                                                                 {"best_of_n_baseline", Algorithm::best_of_n_baseline}};
    c.algorithm = parse_enum(algorithm, algos, "algorithm");

    top.read("seed", c.seed);
    top.read("output_dir", c.output_dir);
    if (c.output_dir.empty()) throw ValidationError("output_dir: must be non-empty");

    if (top.has("backend")) {
        Section b = top.sub("backend");
        std::string kind = "simulated";
        b.read("kind", kind);
        static constexpr std::pair<const char*, BackendKind> kinds[] = {{"simulated", BackendKind::simulated},
                                                                       {"http", BackendKind::http}};
        c.backend = parse_enum(kind, kinds, "backend.kind");
        if (b.has("simulated")) {
            Section s = b.sub("simulated");
            s.read("alphabet", c.simulated.alphabet);
            s.read("length", c.simulated.length);
            s.read("edit_rate", c.simulated.edit_rate);
            s.read("max_fusion_edits", c.simulated.max_fusion_edits);
            s.finish();
        }
        if (b.has("http")) {
            Section h = b.sub("http");
            h.read("base_url", c.http.base_url);
            h.read("model", c.http.model);
            h.read("timeout_s", c.http.timeout_s);
            h.read("max_retries", c.http.max_retries);
            h.read("backoff_base_ms", c.http.backoff_base_ms);
            h.read("max_in_flight", c.http.max_in_flight);
            h.read("supports_min_p", c.http.supports_min_p);
            h.read("supports_top_k", c.http.supports_top_k);
            h.finish();
        }
        b.finish();
    }

    if (top.has("sampling")) {
        Section s = top.sub("sampling");
        s.read("temperature", c.sampling.temperature);
        s.read("top_k", c.sampling.top_k);
        s.read("top_p", c.sampling.top_p);
        s.read("min_p", c.sampling.min_p);
        s.read("max_tokens", c.sampling.max_tokens);
        s.finish();
    }

    if (top.has("reward")) {
        Section r = top.sub("reward");
        std::string kind = "scalar";
        r.read("kind", kind);
        static constexpr std::pair<const char*, RewardKind> kinds[] = {{"scalar", RewardKind::scalar},
                                                                      {"anchored_pairwise", RewardKind::anchored_pairwise},
                                                                      {"composite", RewardKind::composite}};
        c.reward.spec.kind = parse_enum(kind, kinds, "reward.kind");
        c.reward.spec.anchor_policy =
            c.reward.spec.kind == RewardKind::anchored_pairwise ? AnchorPolicy::fixed_initial : AnchorPolicy::none;
        if (r.has("anchor_policy")) {
            std::string ap;
            r.read("anchor_policy", ap);
            static constexpr std::pair<const char*, AnchorPolicy> aps[] = {{"none", AnchorPolicy::none},
                                                                          {"fixed_initial", AnchorPolicy::fixed_initial}};
            c.reward.spec.anchor_policy = parse_enum(ap, aps, "reward.anchor_policy");
        }
        r.read("alpha", c.reward.spec.alpha);
        r.read("function", c.reward.function);
        r.read("comparator", c.reward.comparator);
        r.read("target", c.reward.target);
        r.read("target_alphabet", c.reward.target_alphabet);
        r.read("target_length", c.reward.target_length);
        if (r.has("token_band")) {
            Section tb = r.sub("token_band");
            tb.read("lo", c.reward.band_lo);
            tb.read("hi", c.reward.band_hi);
            tb.finish();
        }
        r.read("rugged_k", c.reward.rugged_k);
        if (r.has("remote")) {
            Section rm = r.sub("remote");
            rm.read("url", c.reward.remote.url);
            rm.read("timeout_s", c.reward.remote.timeout_s);
            rm.read("max_retries", c.reward.remote.max_retries);
            rm.read("backoff_base_ms", c.reward.remote.backoff_base_ms);
            rm.read("higher_is_better", c.reward.remote.higher_is_better);
            rm.finish();
        }
        r.finish();
    }

    if (top.has("genetron")) {
        Section g = top.sub("genetron");
        g.read("population_size", c.genetron.population_size);
        g.read("best_of_n", c.genetron.best_of_n);
        g.read("max_generations", c.genetron.max_generations);
        g.read("patience", c.genetron.patience);
        g.read("delta", c.genetron.delta);
        g.read("offspring_per_generation", c.genetron.offspring_per_generation);
        if (g.has("parent_pairing")) {
            std::string pp;
            g.read("parent_pairing", pp);
            static constexpr std::pair<const char*, ParentPairing> pps[] = {
                {"per_offspring", ParentPairing::per_offspring}, {"fixed_pool", ParentPairing::fixed_pool}};
            c.genetron.parent_pairing = parse_enum(pp, pps, "genetron.parent_pairing");
        }
        g.finish();
    }

    if (top.has("annetron")) {
        Section a = top.sub("annetron");
        a.read("steps", c.annetron.steps);
        a.read("patience", c.annetron.patience);
        a.read("best_of_n", c.annetron.best_of_n);
        a.read("delta", c.annetron.delta);
        if (a.has("schedule")) {
            Section s = a.sub("schedule");
            s.read("t0", c.annetron.schedule.t0);
            s.read("alpha", c.annetron.schedule.alpha);
            s.read("t_floor", c.annetron.schedule.t_floor);
            s.finish();
        }
        if (a.has("scoring")) {
            std::string sc;
            a.read("scoring", sc);
            static constexpr std::pair<const char*, AnnealScoring> scs[] = {
                {"direct_reward", AnnealScoring::direct_reward}, {"anchored", AnnealScoring::anchored}};
            c.annetron.scoring = parse_enum(sc, scs, "annetron.scoring");
        }
        if (a.has("coupling")) {
            Section s = a.sub("coupling");
            s.read("enabled", c.annetron.coupling.enabled);
            s.read("scale", c.annetron.coupling.scale);
            s.read("offset", c.annetron.coupling.offset);
            s.finish();
        }
        a.finish();
    }

    if (top.has("baseline")) {
        Section b = top.sub("baseline");
        b.read("n", c.baseline_n);
        b.finish();
    }

    if (top.has("budget")) {
        Section b = top.sub("budget");
        b.read("max_model_calls", c.max_model_calls);
        b.read("max_reward_evals", c.max_reward_evals);
        b.finish();
    }

    if (top.has("templates")) {
        Section t = top.sub("templates");
        t.read("dir", c.templates.dir);
        t.read("fusion", c.templates.fusion);
        t.read("refine", c.templates.refine);
        t.read("sentinels", c.templates.sentinels);
        t.finish();
    }
    top.finish();
    return c;
}

/// Cross-field checks for the sub-configs the algorithm actually uses.
inline void validate(const RunConfig& c) {
    if (c.backend == BackendKind::simulated) {
        if (!c.seed) throw ValidationError("seed: mandatory for the simulated backend");
        validate(c.simulated);
    } else {
        if (c.http.base_url.empty()) throw ValidationError("backend.http.base_url: required for the http backend");
        if (c.http.model.empty()) throw ValidationError("backend.http.model: required for the http backend");
        if (c.http.max_in_flight == 0) throw ValidationError("backend.http.max_in_flight: must be positive");
        if (!(c.http.timeout_s > 0.0)) throw ValidationError("backend.http.timeout_s: must be positive");
    }
    validate(c.sampling);
    validate(c.reward.spec);
    const RewardKind kind = c.reward.spec.kind;
    static const std::set<std::string> functions{"target_match", "token_band", "rugged", "remote"};
    static const std::set<std::string> comparators{"length", "scalar_difference", "remote"};
    if (!functions.count(c.reward.function))
        throw ValidationError("reward.function: unknown value '" + c.reward.function + "'");
    if (!comparators.count(c.reward.comparator))
        throw ValidationError("reward.comparator: unknown value '" + c.reward.comparator + "'");
    const bool uses_remote = (kind != RewardKind::anchored_pairwise && c.reward.function == "remote") ||
                             (kind == RewardKind::anchored_pairwise && c.reward.comparator == "remote");
    if (uses_remote && c.reward.remote.url.empty()) throw ValidationError("reward.remote.url: required for a remote reward");
    if (c.reward.band_lo > c.reward.band_hi) throw ValidationError("reward.token_band: lo must not exceed hi");
    if (c.reward.target && c.reward.target->empty()) throw ValidationError("reward.target: must be non-empty");
    if (c.target_length() == 0) throw ValidationError("reward.target_length: must be positive");
    if (c.target_alphabet().empty()) throw ValidationError("reward.target_alphabet: must be non-empty");
    if (kind == RewardKind::composite && c.reward.function == "remote")
        throw ValidationError("reward.function: composite rewards need a local task reward");
    if (c.max_model_calls == 0) throw ValidationError("budget.max_model_calls: must be positive");
    if (c.max_reward_evals == 0) throw ValidationError("budget.max_reward_evals: must be positive");
    switch (c.algorithm) {
    case Algorithm::genetron: validate(c.genetron); break;
    case Algorithm::annetron: validate(c.annetron); break;
    case Algorithm::memetron:
        validate(c.genetron);
        validate(c.annetron);
        break;
    case Algorithm::best_of_n_baseline:
        if (c.baseline_n == 0) throw ValidationError("baseline.n: must be positive");
        break;
    }
}

inline RunConfig load_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ValidationError("config: file not found: " + path.string());
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(io::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("config: " + path.string() + " is not valid JSON (" + e.what() + ")");
    }
    RunConfig c = parse_config(j);
    validate(c);
    return c;
}

/// Fully resolved configuration (defaults filled in); parse_config of the
/// result yields the same configuration.
inline nlohmann::ordered_json to_json(const RunConfig& c) {
    using json = nlohmann::ordered_json;
    auto opt = [](const auto& o) { return o ? json(*o) : json(nullptr); };
    json j;
    j["schema"] = kConfigSchema;
    j["algorithm"] = to_string(c.algorithm);
    j["seed"] = opt(c.seed);
    j["output_dir"] = c.output_dir;
    j["backend"] = {{"kind", to_string(c.backend)},
                    {"simulated",
                     {{"alphabet", c.simulated.alphabet},
                      {"length", c.simulated.length},
                      {"edit_rate", c.simulated.edit_rate},
                      {"max_fusion_edits", c.simulated.max_fusion_edits}}},
                    {"http",
                     {{"base_url", c.http.base_url},
                      {"model", c.http.model},
                      {"timeout_s", c.http.timeout_s},
                      {"max_retries", c.http.max_retries},
                      {"backoff_base_ms", c.http.backoff_base_ms},
                      {"max_in_flight", c.http.max_in_flight},
                      {"supports_min_p", c.http.supports_min_p},
                      {"supports_top_k", c.http.supports_top_k}}}};
    j["sampling"] = {{"temperature", c.sampling.temperature},
                     {"top_k", c.sampling.top_k},
                     {"top_p", c.sampling.top_p},
                     {"min_p", c.sampling.min_p},
                     {"max_tokens", c.sampling.max_tokens}};
    const char* kind = c.reward.spec.kind == RewardKind::scalar              ? "scalar"
                       : c.reward.spec.kind == RewardKind::anchored_pairwise ? "anchored_pairwise"
                                                                             : "composite";
    j["reward"] = {{"kind", kind},
                   {"anchor_policy", c.reward.spec.anchor_policy == AnchorPolicy::fixed_initial ? "fixed_initial" : "none"},
                   {"alpha", opt(c.reward.spec.alpha)},
                   {"function", c.reward.function},
                   {"comparator", c.reward.comparator},
                   {"target", opt(c.reward.target)},
                   {"target_alphabet", opt(c.reward.target_alphabet)},
                   {"target_length", opt(c.reward.target_length)},
                   {"token_band", {{"lo", c.reward.band_lo}, {"hi", c.reward.band_hi}}},
                   {"rugged_k", c.reward.rugged_k},
                   {"remote",
                    {{"url", c.reward.remote.url},
                     {"timeout_s", c.reward.remote.timeout_s},
                     {"max_retries", c.reward.remote.max_retries},
                     {"backoff_base_ms", c.reward.remote.backoff_base_ms},
                     {"higher_is_better", c.reward.remote.higher_is_better}}}};
    j["genetron"] = {{"population_size", c.genetron.population_size},
                     {"best_of_n", c.genetron.best_of_n},
                     {"max_generations", c.genetron.max_generations},
                     {"patience", c.genetron.patience},
                     {"delta", c.genetron.delta},
                     {"parent_pairing",
                      c.genetron.parent_pairing == ParentPairing::fixed_pool ? "fixed_pool" : "per_offspring"},
                     {"offspring_per_generation", c.genetron.offspring_per_generation}};
    j["annetron"] = {{"steps", c.annetron.steps},
                     {"patience", c.annetron.patience},
                     {"best_of_n", c.annetron.best_of_n},
                     {"delta", c.annetron.delta},
                     {"schedule",
                      {{"t0", c.annetron.schedule.t0},
                       {"alpha", c.annetron.schedule.alpha},
                       {"t_floor", c.annetron.schedule.t_floor}}},
                     {"scoring", c.annetron.scoring == AnnealScoring::anchored ? "anchored" : "direct_reward"},
                     {"coupling",
                      {{"enabled", c.annetron.coupling.enabled},
                       {"scale", c.annetron.coupling.scale},
                       {"offset", c.annetron.coupling.offset}}}};
    j["baseline"] = {{"n", c.baseline_n}};
    j["budget"] = {{"max_model_calls", c.max_model_calls}, {"max_reward_evals", c.max_reward_evals}};
    j["templates"] = {{"dir", opt(c.templates.dir)},
                      {"fusion", opt(c.templates.fusion)},
                      {"refine", opt(c.templates.refine)},
                      {"sentinels", opt(c.templates.sentinels)}};
    return j;
}

} // namespace memetron
