// SPDX-License-Identifier: Apache-2.0
#include "rita/llm.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <regex>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "rita/error.hpp"

namespace rita {

namespace {

std::string lower_trimmed(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    std::string out(s.substr(b, e - b + 1));
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool is_greeting(const std::string& text) {
    static const char* const greetings[] = {"hi", "hello", "hey", "greetings", "good morning",
                                            "good afternoon", "good evening", "howdy"};
    for (const char* g : greetings) {
        const std::size_t n = std::char_traits<char>::length(g);
        if (text.compare(0, n, g) == 0 && (text.size() == n || !std::isalpha(static_cast<unsigned char>(text[n])))) {
            return true;
        }
    }
    return false;
}

} // namespace

LlmReply StubLlm::respond(std::span<const ChatTurn> history, std::string_view user_text) const {
    LlmReply reply;
    std::string_view text = user_text;
    if (text.size() > input_cap_) {
        text = text.substr(0, input_cap_);
        reply.warnings.push_back("input truncated to " + std::to_string(input_cap_) + " characters");
    }
    const std::string norm = lower_trimmed(text);
    const bool returning = std::any_of(history.begin(), history.end(),
                                       [](const ChatTurn& t) { return t.role == "assistant"; });
    if (is_greeting(norm)) {
        reply.text = returning ? "Hello again! What else would you like to talk about?"
                               : "Hello! It is nice to meet you. What would you like to talk about?";
    } else if (!norm.empty() && norm.back() == '?') {
        reply.text = "That is a good question. Let me think about it for a moment.";
    } else {
        const auto b = text.find_first_not_of(" \t\r\n");
        const auto e = text.find_last_not_of(" \t\r\n");
        reply.text = "You said: " + std::string(b == std::string_view::npos ? std::string_view{} : text.substr(b, e - b + 1));
    }
    if (!reply.warnings.empty()) reply.text = "(Your message was shortened.) " + reply.text;
    return reply;
}

// ---------------------------------------------------------------------------

RemoteLlm::RemoteLlm(RemoteLlmConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) fail(Errc::config, "remote LLM endpoint is not configured");
}

namespace {

struct ParsedUrl {
    std::string origin; // scheme://host:port
    std::string path;
};

ParsedUrl split_url(const std::string& url) {
    static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, re)) fail(Errc::config, "malformed LLM endpoint URL '" + url + "'");
    return {m[1].str(), m[2].matched ? m[2].str() : "/"};
}

/// Transport-level failure that deserves the single retry.
struct Retryable : Error {
    using Error::Error;
};

} // namespace

std::string RemoteLlm::request_once(std::span<const ChatTurn> history, std::string_view user_text) const {
    const ParsedUrl url = split_url(config_.endpoint);
    httplib::Client client(url.origin);
    const auto timeout_s = config_.timeout_ms / 1000;
    const auto timeout_us = (config_.timeout_ms % 1000) * 1000;
    client.set_connection_timeout(timeout_s, timeout_us);
    client.set_read_timeout(timeout_s, timeout_us);
    client.set_write_timeout(timeout_s, timeout_us);

    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
        const char* key = std::getenv(config_.api_key_env.c_str());
        if (!key || !*key) fail(Errc::auth, "credential variable " + config_.api_key_env + " is not set");
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    nlohmann::json messages = nlohmann::json::array();
    messages.push_back({{"role", "system"}, {"content", config_.system_prompt}});
    for (const auto& turn : history) messages.push_back({{"role", turn.role}, {"content", turn.text}});
    messages.push_back({{"role", "user"}, {"content", std::string(user_text)}});
    const nlohmann::json body = {{"model", config_.model}, {"messages", messages}};

    auto res = client.Post(url.path, headers, body.dump(), "application/json");
    if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
            throw Retryable(Errc::timeout, "LLM request timed out: " + httplib::to_string(err));
        }
        throw Retryable(Errc::network, "LLM request failed: " + httplib::to_string(err));
    }
    if (res->status == 401 || res->status == 403) {
        fail(Errc::auth, "LLM endpoint rejected credentials (HTTP " + std::to_string(res->status) + ")");
    }
    if (res->status >= 500) throw Retryable(Errc::network, "LLM endpoint returned HTTP " + std::to_string(res->status));
    if (res->status != 200) fail(Errc::protocol, "LLM endpoint returned HTTP " + std::to_string(res->status));

    try {
        const auto doc = nlohmann::json::parse(res->body);
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::protocol, std::string("malformed LLM response: ") + e.what());
    }
}

LlmReply RemoteLlm::respond(std::span<const ChatTurn> history, std::string_view user_text) const {
    try {
        try {
            return {request_once(history, user_text), {}};
        } catch (const Retryable&) {
            return {request_once(history, user_text), {}};
        }
    } catch (const Error& e) {
        if (e.code() == Errc::auth || e.code() == Errc::config || !config_.fallback_to_stub) {
            fail(e.code(), e.what());
        }
        LlmReply reply = fallback_.respond(history, user_text);
        reply.warnings.insert(reply.warnings.begin(),
                              std::string("remote LLM unavailable, using stub: ") + e.what());
        return reply;
    }
}

} // namespace rita
