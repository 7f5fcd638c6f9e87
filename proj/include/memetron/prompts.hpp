#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "memetron/core.hpp"
#include "memetron/errors.hpp"

#ifndef MEMETRON_TEMPLATE_DIR
#define MEMETRON_TEMPLATE_DIR "templates"
#endif

namespace memetron {

enum class TemplateKind { fusion, refinement };

inline std::vector<std::string_view> placeholders_for(TemplateKind kind) {
    if (kind == TemplateKind::fusion) return {"{query}", "{response_1}", "{response_2}"};
    return {"{query}", "{response}"};
}

inline std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
    std::size_t n = 0;
    for (std::size_t pos = haystack.find(needle); pos != std::string_view::npos;
         pos = haystack.find(needle, pos + needle.size()))
        ++n;
    return n;
}

struct PromptTemplate {
    TemplateKind kind;
    std::string body;

    /// Every placeholder of the kind must appear exactly once.
    void check() const {
        for (std::string_view ph : placeholders_for(kind)) {
            if (count_occurrences(body, ph) != 1)
                throw ValidationError("template: placeholder " + std::string(ph) + " must appear exactly once");
        }
    }

    static PromptTemplate load(TemplateKind kind, const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ValidationError("template: cannot open " + path.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        PromptTemplate t{kind, ss.str()};
        t.check();
        return t;
    }
};

inline std::filesystem::path default_template_dir() { return MEMETRON_TEMPLATE_DIR; }

/// Marker lines that wrap embedded responses so a simulated backend can
/// recover them unambiguously. Not part of the instruction text.
struct Sentinels {
    std::string begin_prefix = "<<<MEMETRON:BEGIN:";
    std::string end_prefix = "<<<MEMETRON:END:";
    std::string suffix = ">>>";

    std::string begin(std::string_view name) const { return begin_prefix + std::string(name) + suffix; }
    std::string end(std::string_view name) const { return end_prefix + std::string(name) + suffix; }

    std::string wrap(std::string_view name, std::string_view text) const {
        if (text.find(begin_prefix) != std::string_view::npos || text.find(end_prefix) != std::string_view::npos)
            throw ValidationError("response text contains a sentinel marker");
        std::string out;
        out.reserve(text.size() + 64);
        out += '\n';
        out += begin(name);
        out += '\n';
        out += text;
        out += '\n';
        out += end(name);
        return out;
    }

    /// Recover the text wrapped under `name`; nullopt if the begin marker is
    /// absent. A begin marker without its end marker is a parse error.
    std::optional<std::string> extract(std::string_view rendered, std::string_view name) const {
        const std::string open = begin(name) + "\n";
        const std::string close = "\n" + end(name);
        auto b = rendered.find(open);
        if (b == std::string_view::npos) return std::nullopt;
        b += open.size();
        auto e = rendered.find(close, b);
        if (e == std::string_view::npos)
            throw TemplateParseError("unterminated sentinel block '" + std::string(name) + "'");
        return std::string(rendered.substr(b, e - b));
    }
};

/// Substitutes `{name}` placeholders in one left-to-right pass, so payload
/// text is never re-scanned for placeholders.
inline std::string substitute(std::string_view body,
                              const std::vector<std::pair<std::string_view, std::string_view>>& values) {
    std::string out;
    out.reserve(body.size() + 256);
    std::size_t pos = 0;
    while (pos < body.size()) {
        std::size_t best = std::string_view::npos;
        const std::pair<std::string_view, std::string_view>* hit = nullptr;
        for (const auto& kv : values) {
            auto p = body.find(kv.first, pos);
            if (p < best) {
                best = p;
                hit = &kv;
            }
        }
        if (hit == nullptr) {
            out.append(body.substr(pos));
            break;
        }
        out.append(body.substr(pos, best - pos));
        out.append(hit->second);
        pos = best + hit->first.size();
    }
    return out;
}

class PromptRenderer {
public:
    PromptRenderer(PromptTemplate fusion, PromptTemplate refine, std::optional<Sentinels> sentinels = std::nullopt)
        : fusion_(std::move(fusion)), refine_(std::move(refine)), sentinels_(std::move(sentinels)) {
        if (fusion_.kind != TemplateKind::fusion || refine_.kind != TemplateKind::refinement)
            throw ValidationError("template kinds do not match their slots");
        fusion_.check();
        refine_.check();
    }

    /// Loads `fusion.txt` and `refine.txt` from `dir`.
    static PromptRenderer from_directory(const std::filesystem::path& dir,
                                         std::optional<Sentinels> sentinels = std::nullopt) {
        return PromptRenderer(PromptTemplate::load(TemplateKind::fusion, dir / "fusion.txt"),
                              PromptTemplate::load(TemplateKind::refinement, dir / "refine.txt"),
                              std::move(sentinels));
    }

    std::string render_fusion(const Prompt& x, const Candidate& yi, const Candidate& yj) const {
        if (yi.id == yj.id) throw ValidationError("fusion requires two distinct parents (both are id " +
                                                  std::to_string(yi.id) + ")");
        return render_fusion_text(x.text, yi.text, yj.text);
    }

    std::string render_fusion_text(std::string_view query, std::string_view r1, std::string_view r2) const {
        if (sentinels_) {
            const std::string w1 = sentinels_->wrap("response_1", r1);
            const std::string w2 = sentinels_->wrap("response_2", r2);
            return substitute(fusion_.body, {{"{query}", query}, {"{response_1}", w1}, {"{response_2}", w2}});
        }
        return substitute(fusion_.body, {{"{query}", query}, {"{response_1}", r1}, {"{response_2}", r2}});
    }

    std::string render_refine(const Prompt& x, const Candidate& y) const { return render_refine_text(x.text, y.text); }

    std::string render_refine_text(std::string_view query, std::string_view response) const {
        if (response.empty()) throw ValidationError("refinement requires a non-empty response");
        if (sentinels_) {
            const std::string w = sentinels_->wrap("response", response);
            return substitute(refine_.body, {{"{query}", query}, {"{response}", w}});
        }
        return substitute(refine_.body, {{"{query}", query}, {"{response}", response}});
    }

    const PromptTemplate& fusion_template() const noexcept { return fusion_; }
    const PromptTemplate& refine_template() const noexcept { return refine_; }
    const std::optional<Sentinels>& sentinels() const noexcept { return sentinels_; }

private:
    PromptTemplate fusion_;
    PromptTemplate refine_;
    std::optional<Sentinels> sentinels_;
};

} // namespace memetron
