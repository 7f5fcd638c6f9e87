#pragma once

// Flat-file formats: candidate JSONL histories, prompt corpora, CSV.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "memetron/core.hpp"
#include "memetron/errors.hpp"

namespace memetron::io {

using json = nlohmann::ordered_json;

/// Shortest decimal text that round-trips to the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw Error("format_double: conversion failed");
    return std::string(buf, end);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ParseError("not a number: '" + std::string(s) + "'");
    return v;
}

inline OriginKind parse_origin_kind(std::string_view s) {
    if (s == "initial") return OriginKind::initial;
    if (s == "crossover") return OriginKind::crossover;
    if (s == "refinement") return OriginKind::refinement;
    throw ParseError("unknown origin kind '" + std::string(s) + "'");
}

inline json to_json(const Origin& o) {
    json j;
    j["kind"] = to_string(o.kind);
    j["parents"] = o.parents;
    j["sample_index"] = o.sample_index ? json(*o.sample_index) : json(nullptr);
    j["step"] = o.step ? json(*o.step) : json(nullptr);
    j["accepted"] = o.accepted;
    return j;
}

inline Origin origin_from_json(const json& j) {
    Origin o;
    o.kind = parse_origin_kind(j.at("kind").get<std::string>());
    o.parents = j.at("parents").get<std::vector<CandidateId>>();
    if (!j.at("sample_index").is_null()) o.sample_index = j.at("sample_index").get<std::uint32_t>();
    if (!j.at("step").is_null()) o.step = j.at("step").get<std::uint32_t>();
    o.accepted = j.value("accepted", true);
    return o;
}

inline json to_json(const Candidate& c) {
    json j;
    j["id"] = c.id;
    j["text"] = c.text;
    j["reward"] = c.reward ? json(*c.reward) : json(nullptr);
    j["origin"] = to_json(c.origin);
    j["generation"] = c.generation;
    j["created_at_call"] = c.created_at_call;
    return j;
}

inline Candidate candidate_from_json(const json& j) {
    Candidate c;
    c.id = j.at("id").get<CandidateId>();
    c.text = j.at("text").get<std::string>();
    if (!j.at("reward").is_null()) c.reward = j.at("reward").get<double>();
    c.origin = origin_from_json(j.at("origin"));
    c.generation = j.at("generation").get<std::uint32_t>();
    c.created_at_call = j.at("created_at_call").get<std::uint64_t>();
    return c;
}

inline std::string history_to_jsonl(const HistoryBuffer& h) {
    std::string out;
    for (const Candidate& c : h.candidates()) {
        out += to_json(c).dump();
        out += '\n';
    }
    return out;
}

/// Prompt ids become part of file names; anything outside [A-Za-z0-9._-] is
/// percent-encoded.
inline std::string file_safe(std::string_view id) {
    static constexpr char hex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : id) {
        if (std::isalnum(c) || c == '.' || c == '_' || c == '-') {
            out += static_cast<char>(c);
        } else {
            out += '%';
            out += hex[c >> 4];
            out += hex[c & 15];
        }
    }
    if (out == "." || out == "..") out = "%2E" + out.substr(1);
    return out;
}

inline std::string history_file_name(std::string_view prompt_id) { return "history_" + file_safe(prompt_id) + ".jsonl"; }
inline std::string log_file_name(std::string_view prompt_id) { return "log_" + file_safe(prompt_id) + ".jsonl"; }

inline void write_file(const std::filesystem::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("write failed for " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Calls `fn(line, line_number)` for each non-blank line of a file.
template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        fn(line, number);
    }
}

/// Loads a persisted history, checking ids are consecutive and lineage is
/// well-formed. Errors name the file and line.
inline HistoryBuffer read_history(const std::filesystem::path& path, std::string prompt_id) {
    HistoryBuffer h(std::move(prompt_id));
    for_each_line(path, [&](const std::string& line, std::size_t number) {
        const std::string where = path.string() + ":" + std::to_string(number);
        Candidate c;
        try {
            c = candidate_from_json(json::parse(line));
        } catch (const json::exception& e) {
            throw ParseError(where + ": malformed history line (" + e.what() + ")");
        } catch (const ParseError& e) {
            throw ParseError(where + ": " + e.what());
        }
        if (c.id != h.size()) throw ParseError(where + ": expected id " + std::to_string(h.size()));
        try {
            h.record(std::move(c));
        } catch (const Error& e) {
            throw ParseError(where + ": " + e.what());
        }
    });
    return h;
}

/// Prompt corpus: JSONL of {"id": str, "text": str}; ids must be unique.
inline std::vector<Prompt> read_prompts(const std::filesystem::path& path) {
    std::vector<Prompt> prompts;
    std::set<std::string> seen;
    if (!std::filesystem::exists(path)) throw ValidationError("prompts: file not found: " + path.string());
    for_each_line(path, [&](const std::string& line, std::size_t number) {
        const std::string where = "prompts line " + std::to_string(number);
        Prompt p;
        try {
            json j = json::parse(line);
            p.id = j.at("id").get<std::string>();
            p.text = j.at("text").get<std::string>();
        } catch (const json::exception& e) {
            throw ValidationError(where + ": " + e.what());
        }
        try {
            validate(p);
        } catch (const ValidationError& e) {
            throw ValidationError(where + ": " + e.what());
        }
        if (!seen.insert(p.id).second) throw ValidationError(where + ": duplicate prompt id '" + p.id + "'");
        prompts.push_back(std::move(p));
    });
    if (prompts.empty()) throw ValidationError("prompts: file contains no prompts");
    return prompts;
}

// CSV (RFC 4180 quoting).

inline std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline std::string csv_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += csv_escape(fields[i]);
    }
    out += '\n';
    return out;
}

inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            field_started = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            field_started = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            row.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(row));
            row.clear();
            field_started = false;
        } else {
            field += c;
            field_started = true;
        }
    }
    if (quoted) throw ParseError("csv: unterminated quoted field");
    if (field_started || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace memetron::io
