// memetron: run searches over a prompt corpus, analyse and export runs.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "memetron/analysis.hpp"
#include "memetron/config.hpp"
#include "memetron/io.hpp"
#include "memetron/runner.hpp"

namespace {

using namespace memetron;

std::pair<std::uint32_t, std::uint32_t> parse_pair(const std::string& s) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw ValidationError("compare: expected a:b, got '" + s + "'");
    try {
        std::size_t used_a = 0, used_b = 0;
        const std::string a = s.substr(0, colon), b = s.substr(colon + 1);
        const unsigned long ga = std::stoul(a, &used_a), gb = std::stoul(b, &used_b);
        if (used_a != a.size() || used_b != b.size()) throw std::invalid_argument(s);
        return {static_cast<std::uint32_t>(ga), static_cast<std::uint32_t>(gb)};
    } catch (const std::logic_error&) {
        throw ValidationError("compare: expected a:b with generation numbers, got '" + s + "'");
    }
}

stats::Alternative parse_alternative(const std::string& s) {
    if (s == "two_sided") return stats::Alternative::two_sided;
    if (s == "less") return stats::Alternative::less;
    if (s == "greater") return stats::Alternative::greater;
    throw ValidationError("alternative: expected two_sided, less or greater");
}

int report_error(const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (dynamic_cast<const ValidationError*>(&e)) return exit_validation;
    return exit_runtime;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reward-guided metaheuristic search over text-generator outputs"};
    app.require_subcommand(1);

    std::string config_path, prompts_path, resume_dir, out_dir;
    std::uint32_t workers = 1;
    auto* run = app.add_subcommand("run", "Search every prompt of a corpus and write a run directory");
    run->add_option("--config", config_path, "Run configuration (JSON)")->required();
    run->add_option("--prompts", prompts_path, "Prompt corpus (JSONL of {\"id\",\"text\"})")->required();
    run->add_option("--workers", workers, "Prompts processed in parallel")->check(CLI::PositiveNumber);
    run->add_option("--resume", resume_dir, "Continue an existing run directory");
    run->add_option("--out", out_dir, "Output directory (overrides output_dir in the config)");

    std::string analyze_dir, alternative = "two_sided";
    std::vector<std::string> compare;
    double fdr_q = 0.05;
    auto* analyze = app.add_subcommand("analyze", "Compare generations across questions");
    analyze->add_option("run_dir", analyze_dir, "Run directory")->required();
    analyze->add_option("--compare", compare, "Generation pairs a:b (1 is the initial population)");
    analyze->add_option("--fdr", fdr_q, "Benjamini-Hochberg FDR level");
    analyze->add_option("--alternative", alternative, "two_sided, less or greater");

    std::string export_dir, format;
    auto* exp = app.add_subcommand("export", "Flatten run histories into one file");
    exp->add_option("run_dir", export_dir, "Run directory")->required();
    exp->add_option("--format", format, "csv or jsonl")->required()->check(CLI::IsMember({"csv", "jsonl"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_validation;
    }

    try {
        if (*run) {
            RunConfig cfg = load_config(config_path);
            const std::vector<Prompt> prompts = io::read_prompts(prompts_path);
            RunOptions opts;
            opts.workers = workers;
            if (!resume_dir.empty()) opts.resume = resume_dir;
            if (!out_dir.empty()) opts.output_dir = out_dir;
            opts.log = [](const std::string& m) { std::cerr << m << "\n"; };
            const RunReport report = run_corpus(cfg, prompts, opts);
            std::cout << report.dir.string() << "\n";
            return report.exit_code;
        }
        if (*analyze) {
            AnalyzeOptions opts;
            for (const std::string& c : compare) opts.comparisons.push_back(parse_pair(c));
            if (!(fdr_q > 0.0 && fdr_q < 1.0)) throw ValidationError("fdr: q must lie in (0, 1)");
            opts.stats.fdr_q = fdr_q;
            opts.stats.alternative = parse_alternative(alternative);
            const AnalysisReport report = analyze_run(analyze_dir, opts);
            for (const auto& cmp : report.comparisons) {
                const auto& s = cmp.summary;
                std::printf("Gen %u vs %u: mean diff %.4f +/- %.4f, welch/mw %zu/%zu, sig raw/fdr %zu/%zu, "
                            "cliff's delta %.3f\n",
                            s.gen_a, s.gen_b, s.mean_diff_mean, s.mean_diff_sd, s.welch_count, s.mann_whitney_count,
                            s.significant_raw, s.significant_fdr, s.cliffs_delta_mean);
            }
            return exit_ok;
        }
        if (*exp) {
            std::cout << export_run(export_dir, format).string() << "\n";
            return exit_ok;
        }
    } catch (const std::exception& e) {
        return report_error(e);
    }
    return exit_ok;
}
