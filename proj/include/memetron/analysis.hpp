#pragma once

// Post-hoc analysis over a run directory: generation membership, statistical
// comparisons (report.csv, summary.json) and flat exports.

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "memetron/components.hpp"
#include "memetron/config.hpp"
#include "memetron/core.hpp"
#include "memetron/io.hpp"
#include "memetron/runner.hpp"
#include "memetron/stats.hpp"

namespace memetron {

inline constexpr const char* kSummarySchema = "memetron.summary/1";

/// Members of each stored generation: generation 0 is the initial sample;
/// generation g >= 1 is every crossover offspring of g, each replaced by the
/// best candidate along its accepted refinement chain. Rejected proposals
/// never count.
inline std::map<std::uint32_t, std::vector<CandidateId>> generation_members(const HistoryBuffer& history) {
    const auto& cs = history.candidates();
    std::map<CandidateId, CandidateId> accepted_child;
    for (const Candidate& c : cs)
        if (c.origin.kind == OriginKind::refinement && c.origin.accepted)
            accepted_child.emplace(c.origin.parents.front(), c.id);

    std::map<std::uint32_t, std::vector<CandidateId>> out;
    for (const Candidate& c : cs) {
        if (c.origin.kind == OriginKind::initial) {
            out[0].push_back(c.id);
        } else if (c.origin.kind == OriginKind::crossover) {
            CandidateId best = c.id;
            for (auto it = accepted_child.find(c.id); it != accepted_child.end(); it = accepted_child.find(it->second))
                if (better(history.at(it->second), history.at(best))) best = it->second;
            out[c.generation].push_back(best);
        }
    }
    return out;
}

struct LoadedPrompt {
    Prompt prompt;
    HistoryBuffer history;
};

/// A run directory: its manifest, resolved config and every persisted history
/// (failed prompts have none and are skipped).
struct LoadedRun {
    nlohmann::ordered_json manifest;
    RunConfig config;
    std::vector<LoadedPrompt> prompts;
};

inline LoadedRun load_run(const fs::path& dir) {
    LoadedRun run;
    run.manifest = read_manifest(dir);
    run.config = parse_config(run.manifest.at("config"));
    std::map<std::string, std::string> texts;
    const fs::path prompts_path = dir / run.manifest.value("prompts_file", "prompts.jsonl");
    if (fs::exists(prompts_path))
        for (Prompt& p : io::read_prompts(prompts_path)) texts[p.id] = std::move(p.text);
    for (const auto& entry : run.manifest.at("prompts")) {
        if (entry.at("history").is_null()) continue;
        LoadedPrompt lp;
        lp.prompt.id = entry.at("id").get<std::string>();
        lp.prompt.text = texts.count(lp.prompt.id) ? texts[lp.prompt.id] : lp.prompt.id;
        lp.history = io::read_history(dir / entry.at("history").get<std::string>(), lp.prompt.id);
        run.prompts.push_back(std::move(lp));
    }
    return run;
}

/// Per-question scores keyed by 1-based generation label (label 1 is the
/// initial population). Pairwise runs are reranked jointly over each
/// question's response set; scalar runs use the recorded rewards.
inline std::vector<stats::QuestionScores> question_scores(const LoadedRun& run, std::string* source = nullptr) {
    const bool pairwise = run.config.reward.spec.kind == RewardKind::anchored_pairwise;
    if (source) *source = pairwise ? "set_rerank" : "reward";
    std::optional<RewardComponents> rewards;
    if (pairwise) rewards = make_rewards(run.config);
    std::vector<stats::QuestionScores> out;
    for (const LoadedPrompt& lp : run.prompts) {
        stats::QuestionScores q;
        q.question_id = lp.prompt.id;
        const auto members = generation_members(lp.history);
        if (pairwise) {
            std::vector<std::string> texts;
            std::vector<std::uint32_t> labels;
            for (const auto& [g, ids] : members)
                for (CandidateId id : ids) {
                    texts.push_back(lp.history.at(id).text);
                    labels.push_back(g + 1);
                }
            const std::vector<double> scores = rerank_set(*rewards->comparator, lp.prompt, texts);
            for (std::size_t i = 0; i < scores.size(); ++i) q.by_generation[labels[i]].push_back(scores[i]);
        } else {
            for (const auto& [g, ids] : members)
                for (CandidateId id : ids)
                    if (const auto& r = lp.history.at(id).reward) q.by_generation[g + 1].push_back(*r);
        }
        out.push_back(std::move(q));
    }
    return out;
}

/// Final vs each earlier generation; "final" is the last label present for
/// every question.
inline std::vector<std::pair<std::uint32_t, std::uint32_t>> default_comparisons(
    const std::vector<stats::QuestionScores>& qs) {
    if (qs.empty()) throw InsufficientDataError("analysis: the run has no scored histories");
    std::uint32_t final_label = UINT32_MAX;
    for (const auto& q : qs) {
        if (q.by_generation.empty())
            throw MissingGenerationError("question '" + q.question_id + "' has no scored generations");
        final_label = std::min(final_label, q.by_generation.rbegin()->first);
    }
    if (final_label < 2) throw MissingGenerationError("analysis needs at least two generations");
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    for (std::uint32_t g = 1; g < final_label; ++g) out.emplace_back(g, final_label);
    return out;
}

struct AnalyzeOptions {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> comparisons; // empty: defaults
    stats::ComparisonOptions stats;
};

struct AnalysisReport {
    std::string score_source;
    std::vector<stats::GenerationComparison> comparisons;
};

inline const char* to_string(stats::Alternative a) {
    switch (a) {
    case stats::Alternative::two_sided: return "two_sided";
    case stats::Alternative::less: return "less";
    case stats::Alternative::greater: return "greater";
    }
    return "?";
}

inline std::string report_csv(const AnalysisReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? io::format_double(*v) : std::string(); };
    std::string out = io::csv_row({"gen_a", "gen_b", "question_id", "test_used", "statistic", "p_raw", "p_adjusted",
                                   "mean_diff", "cohens_d", "cliffs_delta", "significant_raw", "significant_fdr",
                                   "shapiro_p_a", "shapiro_p_b"});
    for (const auto& cmp : r.comparisons)
        for (const auto& row : cmp.rows)
            out += io::csv_row({std::to_string(row.gen_a), std::to_string(row.gen_b), row.question_id,
                                stats::to_string(row.test_used), io::format_double(row.statistic),
                                io::format_double(row.p_raw), io::format_double(row.p_adjusted),
                                io::format_double(row.mean_diff), opt(row.cohens_d), io::format_double(row.cliffs_delta),
                                row.significant_raw ? "true" : "false", row.significant_fdr ? "true" : "false",
                                opt(row.shapiro_p_a), opt(row.shapiro_p_b)});
    return out;
}

inline nlohmann::ordered_json summary_json(const AnalysisReport& r, const stats::ComparisonOptions& opt) {
    using json = nlohmann::ordered_json;
    auto o = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json j;
    j["schema"] = kSummarySchema;
    j["score_source"] = r.score_source;
    j["alternative"] = to_string(opt.alternative);
    j["normality_alpha"] = opt.normality_alpha;
    j["significance"] = opt.significance;
    j["fdr_q"] = opt.fdr_q;
    json rows = json::array();
    for (const auto& cmp : r.comparisons) {
        const stats::ComparisonSummary& s = cmp.summary;
        rows.push_back({{"label", "Gen " + std::to_string(s.gen_a) + " vs " + std::to_string(s.gen_b)},
                        {"gen_a", s.gen_a},
                        {"gen_b", s.gen_b},
                        {"questions", s.questions},
                        {"mean_diff", {{"mean", s.mean_diff_mean}, {"sd", s.mean_diff_sd}}},
                        {"tests", {{"welch", s.welch_count}, {"mann_whitney", s.mann_whitney_count}}},
                        {"significant", {{"raw", s.significant_raw}, {"fdr", s.significant_fdr}}},
                        {"cohens_d", {{"per_question_mean", o(s.cohens_d_mean)}, {"pooled", o(s.cohens_d_pooled)}}},
                        {"cliffs_delta",
                         {{"per_question_mean", s.cliffs_delta_mean}, {"pooled", s.cliffs_delta_pooled}}}});
    }
    j["comparisons"] = std::move(rows);
    return j;
}

/// Computes every comparison and writes report.csv and summary.json into `dir`.
inline AnalysisReport analyze_run(const fs::path& dir, const AnalyzeOptions& options = {}) {
    const LoadedRun run = load_run(dir);
    AnalysisReport report;
    const auto qs = question_scores(run, &report.score_source);
    auto pairs = options.comparisons.empty() ? default_comparisons(qs) : options.comparisons;
    for (const auto& [a, b] : pairs) {
        if (a == 0 || b == 0) throw ValidationError("compare: generation labels start at 1");
        report.comparisons.push_back(stats::compare_generations(qs, a, b, options.stats));
    }
    io::write_file(dir / "report.csv", report_csv(report));
    io::write_file(dir / "summary.json", summary_json(report, options.stats).dump(2) + "\n");
    return report;
}

// Flat exports for downstream training-data use.

struct ExportRow {
    std::string prompt_id;
    CandidateId id = 0;
    std::string text;
    std::optional<double> reward;
    Origin origin;
    std::uint32_t generation = 0;

    bool operator==(const ExportRow&) const = default;
};

inline std::vector<ExportRow> export_rows(const LoadedRun& run) {
    std::vector<ExportRow> rows;
    for (const LoadedPrompt& lp : run.prompts)
        for (const Candidate& c : lp.history.candidates())
            rows.push_back({lp.prompt.id, c.id, c.text, c.reward, c.origin, c.generation});
    return rows;
}

inline const std::vector<std::string>& export_columns() {
    static const std::vector<std::string> cols{"prompt_id", "id", "text", "reward", "origin", "generation"};
    return cols;
}

inline std::string export_csv(const std::vector<ExportRow>& rows) {
    std::string out = io::csv_row(export_columns());
    for (const ExportRow& r : rows)
        out += io::csv_row({r.prompt_id, std::to_string(r.id), r.text, r.reward ? io::format_double(*r.reward) : "",
                            io::to_json(r.origin).dump(), std::to_string(r.generation)});
    return out;
}

inline std::string export_jsonl(const std::vector<ExportRow>& rows) {
    std::string out;
    for (const ExportRow& r : rows) {
        nlohmann::ordered_json j;
        j["prompt_id"] = r.prompt_id;
        j["id"] = r.id;
        j["text"] = r.text;
        j["reward"] = r.reward ? nlohmann::ordered_json(*r.reward) : nlohmann::ordered_json(nullptr);
        j["origin"] = io::to_json(r.origin);
        j["generation"] = r.generation;
        out += j.dump() + "\n";
    }
    return out;
}

inline std::vector<ExportRow> import_csv(std::string_view text) {
    const auto table = io::parse_csv(text);
    if (table.empty() || table.front() != export_columns()) throw ParseError("export csv: unexpected header");
    std::vector<ExportRow> rows;
    for (std::size_t i = 1; i < table.size(); ++i) {
        const auto& f = table[i];
        const std::string where = "export csv row " + std::to_string(i + 1);
        if (f.size() != 6) throw ParseError(where + ": expected 6 fields");
        try {
            ExportRow r;
            r.prompt_id = f[0];
            r.id = static_cast<CandidateId>(std::stoull(f[1]));
            r.text = f[2];
            if (!f[3].empty()) r.reward = io::parse_double(f[3]);
            r.origin = io::origin_from_json(nlohmann::ordered_json::parse(f[4]));
            r.generation = static_cast<std::uint32_t>(std::stoul(f[5]));
            rows.push_back(std::move(r));
        } catch (const std::exception& e) {
            throw ParseError(where + ": " + e.what());
        }
    }
    return rows;
}

inline std::vector<ExportRow> import_jsonl(const fs::path& path) {
    std::vector<ExportRow> rows;
    io::for_each_line(path, [&](const std::string& line, std::size_t number) {
        try {
            const auto j = nlohmann::ordered_json::parse(line);
            ExportRow r;
            r.prompt_id = j.at("prompt_id").get<std::string>();
            r.id = j.at("id").get<CandidateId>();
            r.text = j.at("text").get<std::string>();
            if (!j.at("reward").is_null()) r.reward = j.at("reward").get<double>();
            r.origin = io::origin_from_json(j.at("origin"));
            r.generation = j.at("generation").get<std::uint32_t>();
            rows.push_back(std::move(r));
        } catch (const std::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(number) + ": " + e.what());
        }
    });
    return rows;
}

/// Writes export.csv or export.jsonl into the run directory.
inline fs::path export_run(const fs::path& dir, const std::string& format) {
    if (format != "csv" && format != "jsonl") throw ValidationError("format: expected csv or jsonl");
    const auto rows = export_rows(load_run(dir));
    const fs::path out = dir / ("export." + format);
    io::write_file(out, format == "csv" ? export_csv(rows) : export_jsonl(rows));
    return out;
}

} // namespace memetron
