#pragma once

// Corpus runs: per-prompt search with a worker pool, run-directory artifacts
// (histories, logs, manifest) and resume.

#include <atomic>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "memetron/annetron.hpp"
#include "memetron/components.hpp"
#include "memetron/config.hpp"
#include "memetron/genetron.hpp"
#include "memetron/io.hpp"
#include "memetron/memetron.hpp"

#ifndef MEMETRON_VERSION
#define MEMETRON_VERSION "0.1.0"
#endif

namespace memetron {

namespace fs = std::filesystem;

inline constexpr const char* kManifestSchema = "memetron.manifest/1";

enum ExitCode : int { exit_ok = 0, exit_validation = 1, exit_runtime = 2, exit_partial = 3 };

struct PromptOutcome {
    std::string id;
    std::string status = "failed"; // ok, partial or failed
    std::optional<std::string> stop;
    std::size_t candidates = 0;
    std::uint64_t model_calls = 0;
    std::uint64_t reward_evals = 0;
    std::optional<CandidateId> best_id;
    std::optional<double> best_reward;
    std::string error;
    bool auth_failure = false;
};

struct RunOptions {
    std::uint32_t workers = 1;
    /// Continue an existing run directory; prompts already marked ok are kept.
    std::optional<fs::path> resume;
    /// Overrides the configured output_dir.
    std::optional<fs::path> output_dir;
    std::function<void(const std::string&)> log;
};

struct RunReport {
    fs::path dir;
    int exit_code = exit_ok;
    std::vector<PromptOutcome> prompts;
};

/// Runs the configured algorithm on one prompt with its own budget.
inline SearchResult search_prompt(const RunConfig& cfg, const Prompt& prompt, Generator& generator,
                                  const RewardComponents& rewards, const PromptRenderer& renderer, Budget& budget,
                                  EventLog& log) {
    RewardEvaluator eval(prompt, cfg.reward.spec, rewards.scalar_ptr(), rewards.comparator_ptr(), budget);
    SearchContext ctx{prompt, generator, eval, budget, renderer, cfg.sampling, *cfg.seed, &log};
    switch (cfg.algorithm) {
    case Algorithm::genetron: return run_genetron(ctx, cfg.genetron);
    case Algorithm::annetron: return run_annetron(ctx, cfg.annetron);
    case Algorithm::memetron: return run_memetron(ctx, MemetronConfig{cfg.genetron, cfg.annetron});
    case Algorithm::best_of_n_baseline: return run_best_of_n(ctx, cfg.baseline_n);
    }
    throw ValidationError("algorithm: unsupported");
}

inline nlohmann::ordered_json log_base(const RunConfig& cfg, const Prompt& p) {
    nlohmann::ordered_json base;
    base["prompt_id"] = p.id;
    if (cfg.algorithm == Algorithm::memetron) base["algorithm"] = "memetron";
    return base;
}

/// Searches one prompt and writes its history and log files into `dir`.
/// Failures are captured in the outcome.
inline PromptOutcome run_one(const RunConfig& cfg, const Prompt& prompt, Generator& generator,
                             const RewardComponents& rewards, const PromptRenderer& renderer, const fs::path& dir) {
    PromptOutcome out;
    out.id = prompt.id;
    Budget budget(cfg.max_model_calls, cfg.max_reward_evals);
    EventLog log(log_base(cfg, prompt));
    std::optional<SearchResult> result;
    try {
        // Seeds are fixed by the config, so a rerun of a prompt is identical.
        result = search_prompt(cfg, prompt, generator, rewards, renderer, budget, log);
    } catch (const AuthError& e) {
        out.error = e.what();
        out.auth_failure = true;
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    out.model_calls = budget.used_model_calls();
    out.reward_evals = budget.used_reward_evals();
    if (result) {
        out.stop = to_string(result->stop);
        out.status = result->stop == StopReason::budget ? "partial" : "ok";
        out.candidates = result->history.size();
        out.best_id = result->best;
        out.best_reward = result->history.at(result->best).reward;
        io::write_file(dir / io::history_file_name(prompt.id), io::history_to_jsonl(result->history));
    }
    nlohmann::ordered_json fin{{"event", "finish"},
                               {"status", out.status},
                               {"stop", out.stop ? nlohmann::ordered_json(*out.stop) : nlohmann::ordered_json(nullptr)},
                               {"candidates", out.candidates},
                               {"model_calls", out.model_calls},
                               {"reward_evals", out.reward_evals}};
    if (!out.error.empty()) fin["error"] = out.error;
    log.emit(fin);
    std::string lines;
    for (const std::string& l : log.lines()) lines += l + "\n";
    io::write_file(dir / io::log_file_name(prompt.id), lines);
    return out;
}

inline nlohmann::ordered_json to_json(const PromptOutcome& o) {
    using json = nlohmann::ordered_json;
    json j;
    j["id"] = o.id;
    j["status"] = o.status;
    j["stop"] = o.stop ? json(*o.stop) : json(nullptr);
    j["history"] = o.status == "failed" ? json(nullptr) : json(io::history_file_name(o.id));
    j["log"] = io::log_file_name(o.id);
    j["candidates"] = o.candidates;
    j["model_calls"] = o.model_calls;
    j["reward_evals"] = o.reward_evals;
    j["best_id"] = o.best_id ? json(*o.best_id) : json(nullptr);
    j["best_reward"] = o.best_reward ? json(*o.best_reward) : json(nullptr);
    j["error"] = o.error.empty() ? json(nullptr) : json(o.error);
    return j;
}

inline PromptOutcome outcome_from_json(const nlohmann::ordered_json& j) {
    PromptOutcome o;
    o.id = j.at("id").get<std::string>();
    o.status = j.at("status").get<std::string>();
    if (!j.at("stop").is_null()) o.stop = j.at("stop").get<std::string>();
    o.candidates = j.at("candidates").get<std::size_t>();
    o.model_calls = j.at("model_calls").get<std::uint64_t>();
    o.reward_evals = j.at("reward_evals").get<std::uint64_t>();
    if (!j.at("best_id").is_null()) o.best_id = j.at("best_id").get<CandidateId>();
    if (!j.at("best_reward").is_null()) o.best_reward = j.at("best_reward").get<double>();
    if (!j.at("error").is_null()) o.error = j.at("error").get<std::string>();
    return o;
}

/// Exit status for a finished corpus.
inline int exit_code_for(const std::vector<PromptOutcome>& outcomes) {
    bool any_auth = false, all_failed = true, any_incomplete = false;
    for (const PromptOutcome& o : outcomes) {
        any_auth |= o.auth_failure;
        all_failed &= o.status == "failed";
        any_incomplete |= o.status != "ok";
    }
    if (any_auth || all_failed) return exit_runtime;
    return any_incomplete ? exit_partial : exit_ok;
}

inline nlohmann::ordered_json build_manifest(const RunConfig& cfg, const std::vector<PromptOutcome>& outcomes) {
    using json = nlohmann::ordered_json;
    json m;
    m["schema"] = kManifestSchema;
    m["version"] = MEMETRON_VERSION;
    // The directory itself is not recorded, so runs written to different
    // places stay byte-identical.
    m["config"] = to_json(cfg);
    m["config"].erase("output_dir");
    m["prompts_file"] = "prompts.jsonl";
    json entries = json::array();
    std::uint64_t calls = 0, evals = 0;
    std::size_t candidates = 0, ok = 0, partial = 0, failed = 0;
    for (const PromptOutcome& o : outcomes) {
        entries.push_back(to_json(o));
        calls += o.model_calls;
        evals += o.reward_evals;
        candidates += o.candidates;
        ok += o.status == "ok";
        partial += o.status == "partial";
        failed += o.status == "failed";
    }
    m["prompts"] = std::move(entries);
    m["totals"] = {{"prompts", outcomes.size()},
                   {"ok", ok},
                   {"partial", partial},
                   {"failed", failed},
                   {"candidates", candidates},
                   {"model_calls", calls},
                   {"reward_evals", evals}};
    return m;
}

inline std::string prompts_to_jsonl(const std::vector<Prompt>& prompts) {
    std::string out;
    for (const Prompt& p : prompts) out += nlohmann::ordered_json{{"id", p.id}, {"text", p.text}}.dump() + "\n";
    return out;
}

inline nlohmann::ordered_json read_manifest(const fs::path& dir) {
    const fs::path path = dir / "manifest.json";
    if (!fs::exists(path)) throw ValidationError("run directory has no manifest.json: " + dir.string());
    try {
        nlohmann::ordered_json m = nlohmann::ordered_json::parse(io::read_file(path));
        if (m.value("schema", "") != kManifestSchema)
            throw ValidationError("manifest: unsupported schema in " + path.string());
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": malformed manifest (" + e.what() + ")");
    }
}

/// Runs every prompt (in parallel over `options.workers` threads) and writes
/// the run directory. Each prompt has its own budget and PRNG streams, so the
/// artifacts do not depend on the worker count.
inline RunReport run_corpus(RunConfig cfg, const std::vector<Prompt>& prompts, const RunOptions& options = {}) {
    validate(cfg);
    if (prompts.empty()) throw ValidationError("prompts: no prompts to run");
    if (options.workers == 0) throw ValidationError("workers: must be positive");
    auto say = [&](const std::string& msg) {
        if (options.log) options.log(msg);
    };

    RunReport report;
    std::vector<std::optional<PromptOutcome>> done(prompts.size());
    if (options.resume) {
        report.dir = *options.resume;
        const nlohmann::ordered_json m = read_manifest(report.dir);
        RunConfig stored = parse_config(m.at("config"));
        stored.output_dir = cfg.output_dir;
        if (to_json(stored) != to_json(cfg))
            throw ValidationError("resume: configuration differs from the one recorded in " + report.dir.string());
        for (const auto& entry : m.at("prompts")) {
            PromptOutcome o = outcome_from_json(entry);
            if (o.status != "ok" || !fs::exists(report.dir / io::history_file_name(o.id))) continue;
            for (std::size_t i = 0; i < prompts.size(); ++i)
                if (prompts[i].id == o.id) done[i] = o;
        }
    } else {
        report.dir = options.output_dir ? *options.output_dir : fs::path(cfg.output_dir);
        if (fs::exists(report.dir / "manifest.json"))
            throw ValidationError("output_dir: " + report.dir.string() + " already holds a run (use --resume)");
        if (options.output_dir) cfg.output_dir = options.output_dir->string();
    }
    std::error_code ec;
    fs::create_directories(report.dir, ec);
    if (ec) throw ValidationError("output_dir: cannot create " + report.dir.string() + ": " + ec.message());

    PromptRenderer renderer = make_renderer(cfg);
    RewardComponents rewards = make_rewards(cfg);
    std::mutex say_mu;
    auto unique_say = [&](const std::string& msg) {
        std::lock_guard lock(say_mu);
        say(msg);
    };
    std::unique_ptr<Generator> generator = make_generator(cfg, [&](const std::string& w) { unique_say("warning: " + w); });

    io::write_file(report.dir / "prompts.jsonl", prompts_to_jsonl(prompts));

    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    auto worker = [&] {
        for (std::size_t i = next++; i < prompts.size(); i = next++) {
            if (done[i]) continue;
            if (abort.load()) {
                PromptOutcome skipped;
                skipped.id = prompts[i].id;
                skipped.error = "skipped after an authentication failure";
                done[i] = skipped;
                continue;
            }
            PromptOutcome o = run_one(cfg, prompts[i], *generator, rewards, renderer, report.dir);
            if (o.auth_failure) abort = true;
            unique_say("prompt " + o.id + ": " + o.status + (o.error.empty() ? "" : " (" + o.error + ")"));
            done[i] = std::move(o);
        }
    };
    const std::uint32_t n_threads = std::min<std::size_t>(options.workers, prompts.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::uint32_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }

    for (auto& o : done) report.prompts.push_back(std::move(*o));
    io::write_file(report.dir / "manifest.json", build_manifest(cfg, report.prompts).dump(2) + "\n");
    report.exit_code = exit_code_for(report.prompts);
    return report;
}

} // namespace memetron
