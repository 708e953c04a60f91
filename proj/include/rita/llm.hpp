// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rita/embedder.hpp"

namespace rita {

struct ChatTurn {
    std::string role; // "user" or "assistant"
    std::string text;

    friend bool operator==(const ChatTurn&, const ChatTurn&) = default;
};

struct LlmReply {
    std::string text;
    /// Non-fatal conditions worth surfacing to the client (fallbacks, truncation).
    std::vector<std::string> warnings;
};

class LlmAdapter {
public:
    virtual ~LlmAdapter() = default;
    virtual std::string_view id() const noexcept = 0;
    virtual LlmReply respond(std::span<const ChatTurn> history, std::string_view user_text) const = 0;
};

/// Rule-based replies: greeting, question and fallback templates.
class StubLlm final : public LlmAdapter {
public:
    static constexpr std::size_t kDefaultInputCap = 2000;

    explicit StubLlm(std::size_t input_cap = kDefaultInputCap) : input_cap_(input_cap) {}

    std::string_view id() const noexcept override { return "stub"; }
    LlmReply respond(std::span<const ChatTurn> history, std::string_view user_text) const override;

private:
    std::size_t input_cap_;
};

struct RemoteLlmConfig {
    /// Full URL of a chat-completions endpoint, e.g. http://127.0.0.1:8000/v1/chat/completions.
    std::string endpoint;
    std::string model = "gpt-4o-mini";
    /// Environment variable holding the bearer token; empty sends no credential.
    std::string api_key_env;
    int timeout_ms = 10000;
    bool fallback_to_stub = true;
    std::string system_prompt =
        "You are a friendly talking avatar. Reply in one or two short spoken sentences.";
};

/// Client for an OpenAI-style chat-completions service: one retry on
/// transport failure or 5xx, optional fallback to the stub.
class RemoteLlm final : public LlmAdapter {
public:
    explicit RemoteLlm(RemoteLlmConfig config);

    std::string_view id() const noexcept override { return "remote"; }
    LlmReply respond(std::span<const ChatTurn> history, std::string_view user_text) const override;

    const RemoteLlmConfig& config() const noexcept { return config_; }

private:
    std::string request_once(std::span<const ChatTurn> history, std::string_view user_text) const;

    RemoteLlmConfig config_;
    StubLlm fallback_;
};

class TtsAdapter {
public:
    virtual ~TtsAdapter() = default;
    virtual std::string_view id() const noexcept = 0;
    virtual FeatureFrameStream synthesize(std::string_view reply_text, const EmbedderConfig& cfg) const = 0;
};

/// Text straight to viseme parameters, skipping audio.
class StubTts final : public TtsAdapter {
public:
    std::string_view id() const noexcept override { return "stub"; }
    FeatureFrameStream synthesize(std::string_view reply_text, const EmbedderConfig& cfg) const override {
        return embed_text_stub(reply_text, cfg);
    }
};

} // namespace rita
