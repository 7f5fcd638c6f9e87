#pragma once

// Network backends: an OpenAI-compatible chat-completions generator and a
// remote reward endpoint. Pulls in cpp-httplib, so only translation units that
// talk to the network should include this header.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "memetron/errors.hpp"
#include "memetron/model.hpp"
#include "memetron/reward.hpp"

namespace memetron {

struct Endpoint {
    std::string origin; // scheme://host[:port]
    std::string path;   // path prefix, no trailing slash
};

/// Splits "http://host:port/prefix" into the client origin and path prefix.
inline Endpoint split_url(std::string_view url) {
    const auto scheme = url.find("://");
    if (scheme == std::string_view::npos) throw ValidationError("url: missing scheme in '" + std::string(url) + "'");
    const std::string_view s = url.substr(0, scheme);
    if (s != "http" && s != "https") throw ValidationError("url: unsupported scheme '" + std::string(s) + "'");
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (s == "https") throw ValidationError("url: https needs a build with OpenSSL support");
#endif
    const auto slash = url.find('/', scheme + 3);
    Endpoint e;
    e.origin = std::string(url.substr(0, slash));
    if (slash != std::string_view::npos) e.path = std::string(url.substr(slash));
    while (!e.path.empty() && e.path.back() == '/') e.path.pop_back();
    if (e.origin.size() <= scheme + 3) throw ValidationError("url: missing host in '" + std::string(url) + "'");
    return e;
}

inline std::optional<std::string> env_value(const char* name) {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
}

struct RetryPolicy {
    std::uint32_t max_retries = 3;
    std::uint32_t backoff_base_ms = 500;
    double timeout_s = 120.0;
};

/// Counting semaphore bounding concurrent requests.
class InFlightLimiter {
public:
    explicit InFlightLimiter(std::uint32_t limit) : free_(limit) {
        if (limit == 0) throw ValidationError("http.max_in_flight: must be positive");
    }
    void acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return free_ > 0; });
        --free_;
    }
    void release() {
        {
            std::lock_guard lock(mu_);
            ++free_;
        }
        cv_.notify_one();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::uint32_t free_;
};

/// POSTs `body` as JSON with bearer auth. Transport failures, 429 and 5xx are
/// retried with exponential backoff (base * 2^(retry-1)); 401/403 raise
/// AuthError at once; other statuses are not retried.
inline nlohmann::json post_json(const Endpoint& ep, const std::string& path, const nlohmann::json& body,
                                const std::optional<std::string>& token, const RetryPolicy& policy,
                                InFlightLimiter* limiter = nullptr) {
    const std::string payload = body.dump();
    httplib::Headers headers;
    if (token) headers.emplace("Authorization", "Bearer " + *token);
    std::string last_error;
    for (std::uint32_t attempt = 0;; ++attempt) {
        if (attempt > 0) {
            const auto wait = std::chrono::milliseconds(std::uint64_t{policy.backoff_base_ms} << (attempt - 1));
            std::this_thread::sleep_for(wait);
        }
        httplib::Result res;
        {
            if (limiter) limiter->acquire();
            httplib::Client client(ep.origin);
            const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
                std::chrono::duration<double>(policy.timeout_s));
            client.set_connection_timeout(timeout);
            client.set_read_timeout(timeout);
            client.set_write_timeout(timeout);
            res = client.Post(path.empty() ? "/" : path, headers, payload, "application/json");
            if (limiter) limiter->release();
        }
        bool retryable = true;
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
        } else if (res->status == 401 || res->status == 403) {
            throw AuthError("authentication rejected by " + ep.origin + path + " (HTTP " + std::to_string(res->status) +
                            ")");
        } else if (res->status == 429) {
            last_error = "rate limited (HTTP 429)";
        } else if (res->status >= 500) {
            last_error = "server error (HTTP " + std::to_string(res->status) + ")";
        } else if (res->status != 200) {
            last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
            retryable = false;
        } else {
            try {
                return nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::exception& e) {
                throw TransportError(std::string("malformed JSON response: ") + e.what(), false);
            }
        }
        if (!retryable) throw TransportError(last_error, false);
        if (attempt >= policy.max_retries)
            throw TransportError(last_error + " after " + std::to_string(attempt + 1) + " attempts", true);
    }
}

struct HttpGeneratorConfig {
    std::string base_url;
    std::string model;
    RetryPolicy retry;
    std::uint32_t max_in_flight = 4;
    bool supports_min_p = false;
    bool supports_top_k = true;
};

/// POST {base_url}/v1/chat/completions. The bearer token comes from
/// MEMETRON_API_KEY.
class HttpGenerator final : public Generator {
public:
    using WarningSink = std::function<void(const std::string&)>;

    explicit HttpGenerator(HttpGeneratorConfig config, WarningSink warn = {})
        : config_(std::move(config)), endpoint_(split_url(config_.base_url)), limiter_(config_.max_in_flight),
          token_(env_value("MEMETRON_API_KEY")), warn_(std::move(warn)) {
        if (config_.model.empty()) throw ValidationError("http.model: must be non-empty");
    }

    /// The request body sent for `request`.
    nlohmann::json request_body(const GeneratorRequest& request) {
        nlohmann::json body;
        body["model"] = config_.model;
        body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", request.prompt_text}}});
        body["temperature"] = request.params.temperature;
        body["top_p"] = request.params.top_p;
        if (config_.supports_top_k) body["top_k"] = request.params.top_k;
        if (config_.supports_min_p) {
            body["min_p"] = request.params.min_p;
        } else if (request.params.min_p > 0.0) {
            warn_once("min_p is not supported by the endpoint and is dropped");
        }
        body["max_tokens"] = request.params.max_tokens;
        body["n"] = request.n;
        if (request.params.seed) body["seed"] = *request.params.seed;
        return body;
    }

    GeneratorResponse generate(const GeneratorRequest& request) override {
        validate(request);
        const nlohmann::json reply =
            post_json(endpoint_, endpoint_.path + "/v1/chat/completions", request_body(request), token_, config_.retry,
                      &limiter_);
        return parse_reply(reply, request.n);
    }

    /// Completions ordered by choice index; logprobs kept only when every
    /// choice carries them.
    static GeneratorResponse parse_reply(const nlohmann::json& reply, std::uint32_t n) {
        GeneratorResponse out;
        if (!reply.contains("choices") || !reply["choices"].is_array())
            throw TransportError("response has no choices array", false);
        const auto& choices = reply["choices"];
        out.texts.assign(choices.size(), {});
        std::vector<double> lps(choices.size(), 0.0);
        bool all_lp = !choices.empty();
        std::vector<bool> seen(choices.size(), false);
        for (std::size_t k = 0; k < choices.size(); ++k) {
            const auto& c = choices[k];
            const std::size_t i = c.value("index", k);
            if (i >= choices.size() || seen[i]) throw TransportError("response has inconsistent choice indices", false);
            seen[i] = true;
            const auto& msg = c.at("message");
            out.texts[i] = msg.at("content").is_null() ? std::string() : msg.at("content").get<std::string>();
            const auto lp = c.find("logprobs");
            if (lp != c.end() && lp->is_object() && lp->contains("content") && (*lp)["content"].is_array()) {
                double sum = 0.0;
                for (const auto& tok : (*lp)["content"]) sum += tok.at("logprob").get<double>();
                lps[i] = sum;
            } else {
                all_lp = false;
            }
        }
        if (out.texts.size() != n)
            throw TransportError("backend returned " + std::to_string(out.texts.size()) + " completions, expected " +
                                 std::to_string(n), false);
        if (all_lp) out.logprobs = std::move(lps);
        out.model_calls_consumed = n;
        return out;
    }

    std::string name() const override { return "http:" + config_.model; }

private:
    void warn_once(const std::string& message) {
        std::lock_guard lock(warn_mu_);
        if (warned_ || !warn_) return;
        warned_ = true;
        warn_(message);
    }

    HttpGeneratorConfig config_;
    Endpoint endpoint_;
    InFlightLimiter limiter_;
    std::optional<std::string> token_;
    WarningSink warn_;
    std::mutex warn_mu_;
    bool warned_ = false;
};

/// Remote reward service: POST {"prompt","candidates","anchor"} returning
/// {"scores"}. Bearer token from MEMETRON_REWARD_TOKEN. Usable both as a
/// scalar reward (anchor null) and as a pairwise comparator.
class RemoteReward final : public ScalarReward, public PairwiseComparator {
public:
    RemoteReward(std::string url, RetryPolicy retry, bool higher_is_better = true)
        : endpoint_(split_url(url)), retry_(retry), token_(env_value("MEMETRON_REWARD_TOKEN")),
          higher_is_better_(higher_is_better) {}

    std::vector<double> score_batch(const Prompt& prompt, const std::vector<std::string>& candidates,
                                    std::optional<std::string_view> anchor) {
        nlohmann::json body;
        body["prompt"] = prompt.text;
        body["candidates"] = candidates;
        body["anchor"] = anchor ? nlohmann::json(std::string(*anchor)) : nlohmann::json(nullptr);
        const nlohmann::json reply = post_json(endpoint_, endpoint_.path, body, token_, retry_);
        if (!reply.contains("scores") || !reply["scores"].is_array())
            throw TransportError("reward response has no scores array", false);
        std::vector<double> scores;
        for (const auto& s : reply["scores"]) {
            if (!s.is_number()) throw NonFiniteRewardError("reward response holds a non-numeric score");
            scores.push_back(s.get<double>());
        }
        if (scores.size() != candidates.size())
            throw TransportError("reward response has " + std::to_string(scores.size()) + " scores for " +
                                 std::to_string(candidates.size()) + " candidates", false);
        return scores;
    }

    double score(const Prompt& prompt, std::string_view text) override {
        return score_batch(prompt, {std::string(text)}, std::nullopt).front();
    }
    double compare(const Prompt& prompt, std::string_view text, std::string_view anchor) override {
        return score_batch(prompt, {std::string(text)}, anchor).front();
    }
    bool higher_is_better() const override { return higher_is_better_; }
    std::string name() const override { return "remote"; }

private:
    Endpoint endpoint_;
    RetryPolicy retry_;
    std::optional<std::string> token_;
    bool higher_is_better_;
};

} // namespace memetron
