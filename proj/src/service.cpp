// SPDX-License-Identifier: Apache-2.0
#include "rita/service.hpp"

#include <boost/beast/core/detail/base64.hpp>
#include <charconv>
#include <chrono>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "rita/error.hpp"
#include "rita/io.hpp"

namespace rita {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view value, std::string_view key) {
    T out{};
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        fail(Errc::config, "config key '" + std::string(key) + "': bad number '" + std::string(value) + "'");
    }
    return out;
}

bool parse_bool(std::string_view value, std::string_view key) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    fail(Errc::config, "config key '" + std::string(key) + "': expected true/false");
}

} // namespace

ServiceConfig ServiceConfig::parse(std::string_view text) {
    ServiceConfig c;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos <= text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) {
            if (eol == text.size()) break;
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            fail(Errc::config, "config line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string_view key = trim(line.substr(0, eq));
        const std::string_view value = trim(line.substr(eq + 1));
        try {
            if (key == "library_path") c.library_path = std::string(value);
            else if (key == "library_id") c.library_id = std::string(value);
            else if (key == "index_mode") c.index_mode = parse_index_mode(value);
            else if (key == "candidate_k") c.candidate_k = parse_number<std::size_t>(value, key);
            else if (key == "target_fps") c.target_fps = parse_number<double>(value, key);
            else if (key == "interp") c.interp = parse_interp_mode(value);
            else if (key == "interpolator_command") c.interpolator_command = std::string(value);
            else if (key == "llm") c.llm = std::string(value);
            else if (key == "llm_endpoint") c.remote.endpoint = std::string(value);
            else if (key == "llm_model") c.remote.model = std::string(value);
            else if (key == "llm_api_key_env") c.remote.api_key_env = std::string(value);
            else if (key == "llm_timeout_ms") c.remote.timeout_ms = parse_number<int>(value, key);
            else if (key == "llm_fallback") c.remote.fallback_to_stub = parse_bool(value, key);
            else if (key == "bind_address") c.bind_address = std::string(value);
            else if (key == "port") c.port = parse_number<std::uint16_t>(value, key);
            else if (key == "static_dir") c.static_dir = std::string(value);
            else if (key == "workers") c.workers = parse_number<int>(value, key);
            else if (key == "io_threads") c.io_threads = parse_number<int>(value, key);
            else if (key == "pace_frames") c.pace_frames = parse_bool(value, key);
            else if (key == "max_buffer_seconds") c.max_buffer_seconds = parse_number<double>(value, key);
            else if (key == "frame_store_capacity") c.frame_store_capacity = parse_number<std::size_t>(value, key);
            else fail(Errc::config, "unknown config key '" + std::string(key) + "'");
        } catch (const Error& e) {
            if (e.code() == Errc::config) throw;
            fail(Errc::config, "config line " + std::to_string(line_no) + ": " + e.what());
        }
        if (eol == text.size()) break;
    }
    if (c.llm != "stub" && c.llm != "remote") fail(Errc::config, "llm must be 'stub' or 'remote'");
    if (c.workers < 1 || c.io_threads < 1) fail(Errc::config, "workers and io_threads must be >= 1");
    return c;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
    ServiceConfig c = parse(read_file_text(path));
    // Relative paths are taken from the config file's directory.
    const auto base = path.parent_path();
    if (!c.library_path.empty() && c.library_path.is_relative()) c.library_path = base / c.library_path;
    if (!c.static_dir.empty() && c.static_dir.is_relative()) c.static_dir = base / c.static_dir;
    return c;
}

// ---------------------------------------------------------------------------
// Events

std::string to_json(const ServiceEvent& e) {
    json j;
    switch (e.type) {
    case EventType::utterance_start:
        j = {{"type", "utterance_start"}, {"utterance_id", e.utterance_id}};
        break;
    case EventType::frame:
        j = {{"type", "frame"},
             {"utterance_id", e.utterance_id},
             {"seq", e.seq},
             {"timestamp_ms", e.timestamp_ms},
             {"frame_url", e.frame_url}};
        break;
    case EventType::utterance_end:
        j = {{"type", "utterance_end"},
             {"utterance_id", e.utterance_id},
             {"latency",
              {{"embed_ms", e.latency.embed_ms},
               {"match_ms", e.latency.match_ms},
               {"reduce_ms", e.latency.reduce_ms},
               {"interpolate_ms", e.latency.interpolate_ms},
               {"total_ms", e.latency.total_ms},
               {"real_time_factor", e.latency.real_time_factor}}}};
        break;
    case EventType::error:
        j = {{"type", "error"}, {"code", e.code}, {"message", e.message}};
        break;
    case EventType::warning:
        j = {{"type", "warning"}, {"message", e.message}};
        break;
    }
    return j.dump();
}

// ---------------------------------------------------------------------------
// FrameStore

void FrameStore::put(std::string key, StoredFrame frame) {
    std::lock_guard lock(mutex_);
    if (frames_.insert_or_assign(key, std::move(frame)).second) order_.push_back(std::move(key));
    while (order_.size() > capacity_) {
        frames_.erase(order_.front());
        order_.pop_front();
    }
}

std::optional<StoredFrame> FrameStore::get(std::string_view key) const {
    std::lock_guard lock(mutex_);
    const auto it = frames_.find(std::string(key));
    if (it == frames_.end()) return std::nullopt;
    return it->second;
}

std::size_t FrameStore::size() const {
    std::lock_guard lock(mutex_);
    return frames_.size();
}

// ---------------------------------------------------------------------------
// ChatService

namespace {

ServiceEvent error_event(std::string code, std::string message) {
    ServiceEvent e;
    e.type = EventType::error;
    e.code = std::move(code);
    e.message = std::move(message);
    return e;
}

ServiceEvent warning_event(std::string message) {
    ServiceEvent e;
    e.type = EventType::warning;
    e.message = std::move(message);
    return e;
}

bool blank(std::string_view s) { return s.find_first_not_of(" \t\r\n\f\v") == std::string_view::npos; }

} // namespace

ChatService::ChatService(std::shared_ptr<const Pipeline> pipeline, std::shared_ptr<const LlmAdapter> llm,
                         std::shared_ptr<const TtsAdapter> tts, std::string library_id,
                         std::size_t frame_store_capacity)
    : pipeline_(std::move(pipeline)),
      llm_(std::move(llm)),
      tts_(std::move(tts)),
      library_id_(std::move(library_id)),
      store_(frame_store_capacity) {
    if (!pipeline_ || !llm_ || !tts_) fail(Errc::invalid_argument, "chat service needs pipeline and adapters");
}

std::shared_ptr<ChatService> ChatService::from_config(const ServiceConfig& config) {
    if (config.library_path.empty()) fail(Errc::config, "library_path is not configured");
    const auto registry = RendererRegistry::with_builtins();
    auto lib = std::make_shared<const FrameLibrary>(load_library(config.library_path, registry));
    IndexParams iparams;
    iparams.candidate_k = config.candidate_k;
    auto index = std::make_shared<const Index>(Index::build(*lib, config.index_mode, iparams));
    RenderSpec spec;
    spec.width = lib->manifest().width;
    spec.height = lib->manifest().height;
    spec.renderer_id = lib->manifest().renderer_id;
    std::shared_ptr<const Renderer> renderer = registry.create(spec);

    std::shared_ptr<InterpolatorRegistry> interpolators;
    if (!config.interpolator_command.empty()) {
        interpolators = std::make_shared<InterpolatorRegistry>();
        interpolators->add(std::make_shared<CommandInterpolator>("command", config.interpolator_command));
    }
    PipelineConfig pcfg;
    pcfg.target_fps = config.target_fps;
    pcfg.interp = config.interp;
    auto pipeline = std::make_shared<const Pipeline>(lib, index, renderer, pcfg, interpolators);

    std::shared_ptr<const LlmAdapter> llm;
    if (config.llm == "remote") llm = std::make_shared<RemoteLlm>(config.remote);
    else llm = std::make_shared<StubLlm>();
    return std::make_shared<ChatService>(pipeline, llm, std::make_shared<StubTts>(), config.library_id,
                                         config.frame_store_capacity);
}

std::shared_ptr<ChatService::Session> ChatService::session(const std::string& id) {
    std::lock_guard lock(sessions_mutex_);
    auto& slot = sessions_[id];
    if (!slot) slot = std::make_shared<Session>();
    return slot;
}

std::vector<ChatTurn> ChatService::history(const std::string& session_id) const {
    std::shared_ptr<Session> s;
    {
        std::lock_guard lock(sessions_mutex_);
        const auto it = sessions_.find(session_id);
        if (it == sessions_.end()) return {};
        s = it->second;
    }
    std::lock_guard lock(s->run_mutex);
    return s->history;
}

std::size_t ChatService::session_count() const {
    std::lock_guard lock(sessions_mutex_);
    return sessions_.size();
}

std::string ChatService::library_frame_key(FrameId id) const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06u%s", static_cast<unsigned>(id),
                  file_extension(pipeline_->library().manifest().image_format));
    return buf;
}

void ChatService::stream_utterance(const std::string& session_id, Session& s, const FeatureFrameStream& stream,
                                   double embed_ms, const EventSink& sink) {
    const std::string utterance_id = session_id + "-" + std::to_string(++s.utterances);
    ServiceEvent start;
    start.type = EventType::utterance_start;
    start.utterance_id = utterance_id;
    sink(start);

    const ImageFormat format = pipeline_->library().manifest().image_format;
    try {
        const LatencyReport report = pipeline_->run(stream, embed_ms, [&](const OutputFrame& frame) {
            ServiceEvent ev;
            ev.type = EventType::frame;
            ev.utterance_id = utterance_id;
            ev.seq = frame.seq;
            ev.timestamp_ms = frame.timestamp_ms;
            std::string key;
            if (const auto* src = std::get_if<LibrarySource>(&frame.entry.source)) {
                key = library_frame_key(src->frame_id);
            } else {
                char buf[64];
                std::snprintf(buf, sizeof buf, "-%05zu%s", frame.seq, file_extension(format));
                key = utterance_id + buf;
                store_.put(key, {encode_image(*frame.image, format), mime_type(format)});
            }
            ev.frame_url = "/frames/" + library_id_ + "/" + key;
            sink(std::move(ev));
        });
        metrics_.record(report);
        ServiceEvent end;
        end.type = EventType::utterance_end;
        end.utterance_id = utterance_id;
        end.latency = report;
        sink(end);
    } catch (const Error& e) {
        sink(error_event(std::string(to_string(e.code())), e.what()));
    }
}

void ChatService::handle_chat(const std::string& session_id, std::string_view text, const EventSink& sink) {
    if (session_id.empty()) {
        sink(error_event("protocol", "session_id must not be empty"));
        return;
    }
    if (blank(text)) {
        sink(error_event("protocol", "chat text must not be empty"));
        return;
    }
    auto s = session(session_id);
    std::lock_guard lock(s->run_mutex);

    LlmReply reply;
    FeatureFrameStream stream;
    double embed_ms = 0.0;
    try {
        reply = llm_->respond(s->history, text);
    } catch (const Error& e) {
        sink(error_event(std::string(to_string(e.code())), "llm adapter '" + std::string(llm_->id()) + "': " + e.what()));
        return;
    }
    for (const auto& w : reply.warnings) sink(warning_event(w));
    s->history.push_back({"user", std::string(text)});
    s->history.push_back({"assistant", reply.text});
    try {
        const auto t = std::chrono::steady_clock::now();
        stream = tts_->synthesize(reply.text, pipeline_->embedder_config());
        embed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t).count();
    } catch (const Error& e) {
        sink(error_event(std::string(to_string(e.code())), "tts adapter '" + std::string(tts_->id()) + "': " + e.what()));
        return;
    }
    stream_utterance(session_id, *s, stream, embed_ms, sink);
}

void ChatService::handle_audio(const std::string& session_id, std::span<const std::uint8_t> wav,
                               const EventSink& sink) {
    if (session_id.empty()) {
        sink(error_event("protocol", "session_id must not be empty"));
        return;
    }
    FeatureFrameStream stream;
    double embed_ms = 0.0;
    try {
        const auto t = std::chrono::steady_clock::now();
        stream = embed_wav(parse_wav(wav), pipeline_->embedder_config());
        embed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t).count();
    } catch (const Error& e) {
        sink(error_event(std::string(to_string(e.code())), e.what()));
        return;
    }
    auto s = session(session_id);
    std::lock_guard lock(s->run_mutex);
    s->history.push_back({"user", "[audio " + std::to_string(std::llround(stream.duration_ms())) + " ms]"});
    stream_utterance(session_id, *s, stream, embed_ms, sink);
}

void ChatService::handle_message(std::string_view json_text, const EventSink& sink) {
    json msg;
    try {
        msg = json::parse(json_text);
    } catch (const json::exception&) {
        sink(error_event("protocol", "message is not valid JSON"));
        return;
    }
    if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
        sink(error_event("protocol", "message needs a string 'type'"));
        return;
    }
    const std::string type = msg["type"].get<std::string>();
    const auto session_it = msg.find("session_id");
    if (session_it == msg.end() || !session_it->is_string()) {
        sink(error_event("protocol", "message needs a string 'session_id'"));
        return;
    }
    const std::string session_id = session_it->get<std::string>();
    if (type == "chat") {
        const auto text = msg.find("text");
        if (text == msg.end() || !text->is_string()) {
            sink(error_event("protocol", "chat message needs a string 'text'"));
            return;
        }
        handle_chat(session_id, text->get_ref<const std::string&>(), sink);
    } else if (type == "audio") {
        const auto b64 = msg.find("wav_b64");
        if (b64 == msg.end() || !b64->is_string()) {
            sink(error_event("protocol", "audio message needs a string 'wav_b64'"));
            return;
        }
        const auto& encoded = b64->get_ref<const std::string&>();
        namespace base64 = boost::beast::detail::base64;
        std::vector<std::uint8_t> bytes(base64::decoded_size(encoded.size()));
        const auto [written, read] = base64::decode(bytes.data(), encoded.data(), encoded.size());
        if (read != encoded.size()) {
            sink(error_event("protocol", "wav_b64 is not valid base64"));
            return;
        }
        bytes.resize(written);
        handle_audio(session_id, bytes, sink);
    } else {
        sink(error_event("protocol", "unknown message type '" + type + "'"));
    }
}

std::optional<StoredFrame> ChatService::frame(std::string_view library_id, std::string_view key) const {
    if (library_id != library_id_) return std::nullopt;
    const FrameLibrary& lib = pipeline_->library();
    const std::string_view ext = file_extension(lib.manifest().image_format);
    if (key.size() == 6 + ext.size() && key.substr(6) == ext) {
        unsigned id = 0;
        const auto [ptr, ec] = std::from_chars(key.data(), key.data() + 6, id);
        if (ec == std::errc() && ptr == key.data() + 6 && id < lib.size()) {
            return StoredFrame{lib.image_bytes(id), mime_type(lib.manifest().image_format)};
        }
        return std::nullopt;
    }
    return store_.get(key);
}

} // namespace rita
