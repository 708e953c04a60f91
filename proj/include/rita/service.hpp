// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rita/llm.hpp"
#include "rita/pipeline.hpp"

namespace rita {

struct ServiceConfig {
    std::filesystem::path library_path;
    std::string library_id = "default";
    IndexMode index_mode = IndexMode::exact;
    std::size_t candidate_k = 32;
    double target_fps = 0.0;
    InterpMode interp = InterpMode::param_space;
    /// Shell command for the external interpolation backend (used when interp = external).
    std::string interpolator_command;
    std::string llm = "stub"; // stub | remote
    RemoteLlmConfig remote;
    std::string bind_address = "127.0.0.1";
    std::uint16_t port = 8080;
    std::filesystem::path static_dir;
    int workers = 2;
    int io_threads = 2;
    bool pace_frames = true;
    double max_buffer_seconds = 5.0;
    std::size_t frame_store_capacity = 4096;

    /// `key = value` lines; '#' starts a comment. Unknown keys are rejected.
    static ServiceConfig parse(std::string_view text);
    /// As parse(); relative paths resolve against the file's directory.
    static ServiceConfig load(const std::filesystem::path& path);
};

enum class EventType { utterance_start, frame, utterance_end, error, warning };

struct ServiceEvent {
    EventType type = EventType::error;
    std::string utterance_id;
    std::size_t seq = 0;
    std::int64_t timestamp_ms = 0;
    std::string frame_url;
    LatencyReport latency;
    std::string code;
    std::string message;
};

/// One JSON text message per event, as sent over the WebSocket.
std::string to_json(const ServiceEvent& event);

using EventSink = std::function<void(ServiceEvent)>;

struct StoredFrame {
    std::vector<std::uint8_t> bytes;
    std::string mime;
};

/// Bounded FIFO of encoded synthesized frames addressable by key.
class FrameStore {
public:
    explicit FrameStore(std::size_t capacity) : capacity_(capacity) {}

    void put(std::string key, StoredFrame frame);
    std::optional<StoredFrame> get(std::string_view key) const;
    std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::size_t capacity_;
    std::deque<std::string> order_;
    std::unordered_map<std::string, StoredFrame> frames_;
};

/// Chat-driven front end over a shared Pipeline. Sessions run independently;
/// events of one session are emitted in order on the sink passed with the request.
class ChatService {
public:
    ChatService(std::shared_ptr<const Pipeline> pipeline, std::shared_ptr<const LlmAdapter> llm,
                std::shared_ptr<const TtsAdapter> tts, std::string library_id = "default",
                std::size_t frame_store_capacity = 4096);

    static std::shared_ptr<ChatService> from_config(const ServiceConfig& config);

    void handle_chat(const std::string& session_id, std::string_view text, const EventSink& sink);
    void handle_audio(const std::string& session_id, std::span<const std::uint8_t> wav, const EventSink& sink);
    /// Parses one client message (`chat` or `audio`) and dispatches it.
    void handle_message(std::string_view json_text, const EventSink& sink);

    std::optional<StoredFrame> frame(std::string_view library_id, std::string_view key) const;
    std::vector<ChatTurn> history(const std::string& session_id) const;
    std::size_t session_count() const;

    const Pipeline& pipeline() const noexcept { return *pipeline_; }
    const MetricsRegistry& metrics() const noexcept { return metrics_; }
    const std::string& library_id() const noexcept { return library_id_; }

private:
    struct Session {
        std::mutex run_mutex; // one utterance at a time per session
        std::vector<ChatTurn> history;
        std::size_t utterances = 0;
    };

    std::shared_ptr<Session> session(const std::string& id);
    void stream_utterance(const std::string& session_id, Session& s, const FeatureFrameStream& stream,
                          double embed_ms, const EventSink& sink);
    std::string library_frame_key(FrameId id) const;

    std::shared_ptr<const Pipeline> pipeline_;
    std::shared_ptr<const LlmAdapter> llm_;
    std::shared_ptr<const TtsAdapter> tts_;
    std::string library_id_;
    FrameStore store_;
    MetricsRegistry metrics_;
    mutable std::mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<Session>, std::less<>> sessions_;
};

/// HTTP + WebSocket front door: `/ws`, `/frames/{library}/{key}`, `/health`, `/metrics`, `/`.
class Server {
public:
    Server(ServiceConfig config, std::shared_ptr<ChatService> service);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds and starts serving; throws Error(io) when the address is unavailable.
    void start();
    std::uint16_t port() const noexcept;
    void stop();
    /// Blocks until stop() is called.
    void wait();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace rita
