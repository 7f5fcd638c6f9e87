#include <gtest/gtest.h>

#include <filesystem>

#include "memetron/config.hpp"
#include "memetron/io.hpp"
#include "support.hpp"

using namespace memetron;
using json = nlohmann::ordered_json;

namespace {

class TempDir {
public:
    TempDir() {
        path_ = std::filesystem::temp_directory_path() /
                ("memetron_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
                 ::testing::UnitTest::GetInstance()->current_test_info()->name());
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

json minimal() { return {{"schema", "memetron.config/1"}, {"seed", 7}}; }

std::string validation_message(const json& j) {
    try {
        validate(parse_config(j));
    } catch (const ValidationError& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST(Config, DefaultsMatchTheExperimentalSetup) {
    const RunConfig c = parse_config(minimal());
    EXPECT_EQ(c.algorithm, Algorithm::memetron);
    EXPECT_EQ(c.backend, BackendKind::simulated);
    EXPECT_EQ(c.genetron.population_size, 16u);
    EXPECT_EQ(c.genetron.best_of_n, 3u);
    EXPECT_EQ(c.genetron.max_generations, 3u);
    EXPECT_EQ(c.annetron.steps, 7u);
    EXPECT_EQ(c.annetron.best_of_n, 3u);
    EXPECT_EQ(c.sampling.temperature, 1.5);
    EXPECT_EQ(c.sampling.top_k, 50u);
    EXPECT_EQ(c.sampling.min_p, 0.1);
    EXPECT_EQ(c.sampling.max_tokens, 4098u);
    EXPECT_EQ(c.baseline_n, 64u);
    EXPECT_TRUE(c.sentinels_enabled());
    EXPECT_NO_THROW(validate(c));
}

TEST(Config, UnknownKeyNamesItsPath) {
    json j = minimal();
    j["genetron"] = {{"populaton_size", 4}};
    EXPECT_EQ(validation_message(j), "genetron.populaton_size: unknown key");
    j = minimal();
    j["colour"] = "blue";
    EXPECT_EQ(validation_message(j), "colour: unknown key");
}

TEST(Config, TypeErrorsNameTheirPath) {
    json j = minimal();
    j["annetron"] = {{"steps", -1}};
    EXPECT_NE(validation_message(j).find("annetron.steps"), std::string::npos);
    j = minimal();
    j["sampling"] = {{"temperature", "hot"}};
    EXPECT_NE(validation_message(j).find("sampling.temperature"), std::string::npos);
}

TEST(Config, SchemaAndSeedRequired) {
    json j = minimal();
    j.erase("schema");
    EXPECT_NE(validation_message(j).find("schema"), std::string::npos);
    j = minimal();
    j.erase("seed");
    EXPECT_NE(validation_message(j).find("seed"), std::string::npos);
}

TEST(Config, CrossFieldChecks) {
    json j = minimal();
    j["reward"] = {{"kind", "composite"}};
    EXPECT_NE(validation_message(j).find("alpha"), std::string::npos);
    j["reward"] = {{"kind", "composite"}, {"alpha", 0.5}};
    EXPECT_EQ(validation_message(j), "");
    j = minimal();
    j["reward"] = {{"function", "remote"}};
    EXPECT_NE(validation_message(j).find("reward.remote.url"), std::string::npos);
    j = minimal();
    j["backend"] = {{"kind", "http"}};
    EXPECT_NE(validation_message(j).find("base_url"), std::string::npos);
    j = minimal();
    j["genetron"] = {{"patience", 9}};
    EXPECT_NE(validation_message(j).find("patience"), std::string::npos);
    j["algorithm"] = "annetron";
    EXPECT_EQ(validation_message(j), "");
}

TEST(Config, RoundTripsThroughJson) {
    json j = minimal();
    j["algorithm"] = "genetron";
    j["genetron"] = {{"population_size", 8}, {"parent_pairing", "fixed_pool"}};
    j["annetron"] = {{"scoring", "anchored"}, {"schedule", {{"t0", 2.0}}}};
    j["reward"] = {{"kind", "anchored_pairwise"}, {"anchor_policy", "fixed_initial"}};
    const RunConfig c = parse_config(j);
    const json once = to_json(c);
    EXPECT_EQ(to_json(parse_config(once)), once);
    EXPECT_EQ(once["genetron"]["parent_pairing"], "fixed_pool");
}

TEST(Config, LoadReportsMissingAndMalformedFiles) {
    TempDir dir;
    EXPECT_THROW(load_config(dir.path() / "nope.json"), ValidationError);
    io::write_file(dir.path() / "bad.json", "{ not json");
    EXPECT_THROW(load_config(dir.path() / "bad.json"), ValidationError);
    io::write_file(dir.path() / "ok.json", minimal().dump());
    EXPECT_EQ(load_config(dir.path() / "ok.json").seed, 7u);
}

TEST(HistoryIo, JsonlRoundTrip) {
    testing_support::SimEnv env(3);
    const SearchResult r = run_memetron(env.ctx(), MemetronConfig{});
    TempDir dir;
    const auto path = dir.path() / io::history_file_name("q");
    io::write_file(path, io::history_to_jsonl(r.history));
    const HistoryBuffer back = io::read_history(path, "q");
    ASSERT_EQ(back.size(), r.history.size());
    for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back.at(i), r.history.at(i));
    EXPECT_EQ(io::history_to_jsonl(back), io::history_to_jsonl(r.history));
}

TEST(HistoryIo, CandidateFieldOrder) {
    Candidate c;
    c.text = "x";
    c.reward = -1.5;
    c.origin = Origin::initial(2);
    EXPECT_EQ(io::to_json(c).dump(),
              R"({"id":0,"text":"x","reward":-1.5,"origin":{"kind":"initial","parents":[],"sample_index":2,"step":null,"accepted":true},"generation":0,"created_at_call":0})");
}

TEST(HistoryIo, MalformedLineReportsFileAndLine) {
    TempDir dir;
    const auto path = dir.path() / "history_q.jsonl";
    Candidate c;
    c.text = "x";
    c.reward = 1.0;
    io::write_file(path, io::to_json(c).dump() + "\n{broken\n");
    try {
        io::read_history(path, "q");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find(path.string() + ":2"), std::string::npos) << e.what();
    }
}

TEST(HistoryIo, DanglingParentRejected) {
    TempDir dir;
    const auto path = dir.path() / "history_q.jsonl";
    Candidate c;
    c.text = "x";
    c.reward = 1.0;
    c.origin = Origin::crossover(4, 5, 0);
    io::write_file(path, io::to_json(c).dump() + "\n");
    EXPECT_THROW(io::read_history(path, "q"), ParseError);
}

TEST(PromptsIo, ErrorsCarryLineNumbers) {
    TempDir dir;
    const auto p = dir.path() / "p.jsonl";
    auto message = [&](const std::string& content) {
        io::write_file(p, content);
        try {
            io::read_prompts(p);
        } catch (const ValidationError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    EXPECT_NE(message("{\"id\":\"a\",\"text\":\"x\"}\n\n{\"id\":\"a\",\"text\":\"y\"}\n").find("prompts line 3: duplicate"),
              std::string::npos);
    EXPECT_NE(message("{\"id\":\"a\"}\n").find("prompts line 1"), std::string::npos);
    EXPECT_NE(message("{\"id\":\"a\",\"text\":\"\"}\n").find("prompts line 1"), std::string::npos);
    EXPECT_NE(message("").find("no prompts"), std::string::npos);
    EXPECT_THROW(io::read_prompts(dir.path() / "missing.jsonl"), ValidationError);
    io::write_file(p, "{\"id\":\"a\",\"text\":\"x\"}\r\n{\"id\":\"b\",\"text\":\"y\"}\r\n");
    EXPECT_EQ(io::read_prompts(p).size(), 2u);
}

TEST(Csv, QuotingRoundTrip) {
    const std::vector<std::string> row{"plain", "with,comma", "with \"quote\"", "multi\nline", ""};
    const std::string text = io::csv_row(row) + io::csv_row({"a", "b", "c", "d", "e"});
    const auto parsed = io::parse_csv(text);
    ASSERT_EQ(parsed.size(), 2u);
    EXPECT_EQ(parsed[0], row);
    EXPECT_EQ(io::csv_escape("with \"quote\""), "\"with \"\"quote\"\"\"");
}

TEST(FileSafe, PercentEncodesUnsafeCharacters) {
    EXPECT_EQ(io::file_safe("q-1_a.b"), "q-1_a.b");
    EXPECT_EQ(io::file_safe("a/b c"), "a%2Fb%20c");
    EXPECT_EQ(io::file_safe(".."), "%2E.");
    EXPECT_NE(io::file_safe("a/b"), io::file_safe("a%2Fb"));
}

TEST(Numbers, FormatDoubleRoundTrips) {
    for (double v : {0.1, -3.0, 1e-300, 12345.678901234567}) EXPECT_EQ(io::parse_double(io::format_double(v)), v);
}
