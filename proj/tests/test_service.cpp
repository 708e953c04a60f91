// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/core/detail/base64.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "rita/error.hpp"
#include "rita/service.hpp"
#include "rita/wav.hpp"
#include "rita/io.hpp"
#include "support.hpp"

using namespace rita;
using nlohmann::json;
namespace beast = boost::beast;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

std::shared_ptr<const Pipeline> small_pipeline() {
    static const auto pipeline = [] {
        auto renderer = std::shared_ptr<const Renderer>(
            RendererRegistry::with_builtins().create({48, 48, "parametric-face-v1"}));
        std::vector<HyperparamVector> rows;
        for (const auto& f : coverage_grid(CoverageGrid{}, 8).frames) rows.push_back(f.vector);
        auto lib = std::make_shared<const FrameLibrary>(FrameLibrary::in_memory(rows, 25, renderer));
        auto index = std::make_shared<const Index>(Index::build(*lib, IndexMode::exact));
        return std::make_shared<const Pipeline>(lib, index, renderer);
    }();
    return pipeline;
}

std::shared_ptr<ChatService> stub_service(std::shared_ptr<const LlmAdapter> llm = std::make_shared<StubLlm>()) {
    return std::make_shared<ChatService>(small_pipeline(), std::move(llm), std::make_shared<StubTts>(), "lib1");
}

std::vector<ServiceEvent> chat(ChatService& svc, const std::string& session, std::string_view text) {
    std::vector<ServiceEvent> events;
    svc.handle_chat(session, text, [&](ServiceEvent e) { events.push_back(std::move(e)); });
    return events;
}

std::size_t count(const std::vector<ServiceEvent>& evs, EventType t) {
    return std::count_if(evs.begin(), evs.end(), [t](const ServiceEvent& e) { return e.type == t; });
}

/// Mock chat-completions endpoint on an ephemeral port.
class MockLlm {
public:
    explicit MockLlm(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Post("/v1/chat/completions", [this, handler](const httplib::Request& req, httplib::Response& res) {
            ++hits;
            last_body = req.body;
            last_auth = req.get_header_value("Authorization");
            handler(req, res);
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockLlm() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

    std::atomic<int> hits{0};
    std::string last_body, last_auth;

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

void reply_with(httplib::Response& res, const std::string& content) {
    res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump(),
                    "application/json");
}

} // namespace

// --- configuration --------------------------------------------------------

TEST(ServiceConfig, ParsesKeysAndComments) {
    const auto c = ServiceConfig::parse(
        "# demo\nlibrary_path = /tmp/lib\nport = 9001\nindex_mode = approx\ninterp = crossfade\n"
        "llm = remote\nllm_endpoint = http://127.0.0.1:1/v1/chat/completions\npace_frames = false\n");
    EXPECT_EQ(c.library_path, "/tmp/lib");
    EXPECT_EQ(c.port, 9001);
    EXPECT_EQ(c.index_mode, IndexMode::approximate);
    EXPECT_EQ(c.interp, InterpMode::crossfade);
    EXPECT_EQ(c.llm, "remote");
    EXPECT_FALSE(c.pace_frames);
}

TEST(ServiceConfig, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(ServiceConfig::parse("colour = blue\n"), Error);
    EXPECT_THROW(ServiceConfig::parse("port = many\n"), Error);
    EXPECT_THROW(ServiceConfig::parse("llm = oracle\n"), Error);
    EXPECT_THROW(ServiceConfig::parse("just some words\n"), Error);
}

TEST(ServiceConfig, LoadResolvesRelativePaths) {
    test::TempDir dir;
    write_file_text(dir / "svc.conf", "library_path = lib\nstatic_dir = /srv/www\n");
    const auto c = ServiceConfig::load(dir / "svc.conf");
    EXPECT_EQ(c.library_path, dir.path() / "lib");
    EXPECT_EQ(c.static_dir, "/srv/www");
}

TEST(ServiceConfig, ExampleConfigParses) {
    const auto c = ServiceConfig::load(test::data_dir() / ".." / ".." / "config" / "serve.example.conf");
    EXPECT_EQ(c.port, 8080);
    EXPECT_EQ(c.llm, "stub");
    EXPECT_TRUE(c.pace_frames);
}

// --- events ------------------------------------------------------------------

TEST(ServiceEvents, JsonShapes) {
    ServiceEvent f;
    f.type = EventType::frame;
    f.utterance_id = "s-1";
    f.seq = 3;
    f.timestamp_ms = 120;
    f.frame_url = "/frames/lib1/000001.jpg";
    const auto j = json::parse(to_json(f));
    EXPECT_EQ(j["type"], "frame");
    EXPECT_EQ(j["seq"], 3);
    EXPECT_EQ(j["timestamp_ms"], 120);
    EXPECT_EQ(j["frame_url"], "/frames/lib1/000001.jpg");

    ServiceEvent end;
    end.type = EventType::utterance_end;
    end.latency.total_ms = 5;
    const auto je = json::parse(to_json(end));
    for (const char* k : {"embed_ms", "match_ms", "reduce_ms", "interpolate_ms", "total_ms", "real_time_factor"}) {
        EXPECT_TRUE(je["latency"].contains(k)) << k;
    }
    ServiceEvent err;
    err.code = "protocol";
    err.message = "bad";
    EXPECT_EQ(json::parse(to_json(err)), (json{{"type", "error"}, {"code", "protocol"}, {"message", "bad"}}));
}

// --- chat service ------------------------------------------------------------

TEST(ChatService, ChatTurnStreamsAFullUtterance) {
    auto svc = stub_service();
    const auto events = chat(*svc, "alice", "ok");
    ASSERT_GE(events.size(), 3u);
    EXPECT_EQ(events.front().type, EventType::utterance_start);
    EXPECT_EQ(events.front().utterance_id, "alice-1");
    EXPECT_EQ(events.back().type, EventType::utterance_end);
    // "You said: ok" is 12 characters -> 24 frames.
    EXPECT_EQ(count(events, EventType::frame), 24u);
    std::size_t expect_seq = 0;
    for (const auto& e : events) {
        if (e.type != EventType::frame) continue;
        EXPECT_EQ(e.seq, expect_seq++);
        EXPECT_EQ(e.frame_url.rfind("/frames/lib1/", 0), 0u) << e.frame_url;
        const auto key = e.frame_url.substr(std::string("/frames/lib1/").size());
        const auto stored = svc->frame("lib1", key);
        ASSERT_TRUE(stored) << key;
        EXPECT_EQ(stored->mime, "image/png");
        EXPECT_FALSE(stored->bytes.empty());
    }
    EXPECT_GT(events.back().latency.total_ms, 0.0);
    EXPECT_EQ(svc->metrics().count(), 1u);
}

TEST(ChatService, HistoryAndUtteranceNumbering) {
    auto svc = stub_service();
    chat(*svc, "bob", "hello");
    const auto second = chat(*svc, "bob", "hi");
    EXPECT_EQ(second.front().utterance_id, "bob-2");
    const auto h = svc->history("bob");
    ASSERT_EQ(h.size(), 4u);
    EXPECT_EQ(h[0], (ChatTurn{"user", "hello"}));
    EXPECT_EQ(h[1].role, "assistant");
    EXPECT_EQ(h[3].text.rfind("Hello again", 0), 0u) << h[3].text;
    EXPECT_EQ(svc->session_count(), 1u);
    EXPECT_TRUE(svc->history("nobody").empty());
}

TEST(ChatService, EmptyInputIsAProtocolErrorWithoutStateChange) {
    auto svc = stub_service();
    auto events = chat(*svc, "carol", "   ");
    ASSERT_EQ(events.size(), 1u);
    EXPECT_EQ(events[0].type, EventType::error);
    EXPECT_EQ(events[0].code, "protocol");
    EXPECT_EQ(svc->session_count(), 0u);
    events = chat(*svc, "", "hello");
    ASSERT_EQ(events.size(), 1u);
    EXPECT_EQ(events[0].code, "protocol");
}

TEST(ChatService, MessageParsing) {
    auto svc = stub_service();
    std::vector<ServiceEvent> events;
    const EventSink sink = [&](ServiceEvent e) { events.push_back(std::move(e)); };
    svc->handle_message("{not json", sink);
    svc->handle_message(R"({"type":"dance","session_id":"x"})", sink);
    svc->handle_message(R"({"type":"chat","text":"hi"})", sink);
    ASSERT_EQ(events.size(), 3u);
    for (const auto& e : events) EXPECT_EQ(e.type, EventType::error);
    events.clear();
    svc->handle_message(R"({"type":"chat","session_id":"x","text":"ok"})", sink);
    EXPECT_EQ(events.back().type, EventType::utterance_end);
}

TEST(ChatService, AudioMessageRunsTheWavPath) {
    auto svc = stub_service();
    const auto wav = read_file_bytes(test::data_dir() / "speech_2s.wav");
    std::string b64(beast::detail::base64::encoded_size(wav.size()), '\0');
    b64.resize(beast::detail::base64::encode(b64.data(), wav.data(), wav.size()));
    std::vector<ServiceEvent> events;
    svc->handle_message(json{{"type", "audio"}, {"session_id", "dave"}, {"wav_b64", b64}}.dump(),
                        [&](ServiceEvent e) { events.push_back(std::move(e)); });
    EXPECT_EQ(count(events, EventType::frame), 50u);
    EXPECT_EQ(events.back().type, EventType::utterance_end);
    ASSERT_EQ(svc->history("dave").size(), 1u);

    events.clear();
    svc->handle_message(R"({"type":"audio","session_id":"dave","wav_b64":"AAAA"})",
                        [&](ServiceEvent e) { events.push_back(std::move(e)); });
    ASSERT_EQ(events.size(), 1u);
    EXPECT_EQ(events[0].type, EventType::error);
}

TEST(ChatService, SessionsRunConcurrently) {
    auto svc = stub_service();
    std::vector<std::thread> threads;
    std::vector<std::vector<ServiceEvent>> results(4);
    for (int i = 0; i < 4; ++i) {
        threads.emplace_back([&, i] { results[i] = chat(*svc, "user" + std::to_string(i), "hello there"); });
    }
    for (auto& t : threads) t.join();
    for (const auto& r : results) {
        EXPECT_EQ(r.front().type, EventType::utterance_start);
        EXPECT_EQ(r.back().type, EventType::utterance_end);
    }
    EXPECT_EQ(svc->session_count(), 4u);
    EXPECT_EQ(svc->metrics().count(), 4u);
}

TEST(ChatService, UnknownFramesAreAbsent) {
    auto svc = stub_service();
    EXPECT_FALSE(svc->frame("other", "000001.png"));
    EXPECT_FALSE(svc->frame("lib1", "999999.png"));
    EXPECT_FALSE(svc->frame("lib1", "nope"));
    EXPECT_TRUE(svc->frame("lib1", "000001.png"));
}

TEST(FrameStore, EvictsOldest) {
    FrameStore store(2);
    store.put("a", {{1}, "x"});
    store.put("b", {{2}, "x"});
    store.put("c", {{3}, "x"});
    EXPECT_FALSE(store.get("a"));
    EXPECT_TRUE(store.get("c"));
    EXPECT_EQ(store.size(), 2u);
}

// --- stub and remote LLM -----------------------------------------------------

TEST(StubLlm, CannedReplies) {
    StubLlm llm;
    EXPECT_EQ(llm.respond({}, "  the sky is blue ").text, "You said: the sky is blue");
    EXPECT_EQ(llm.respond({}, "Hello").text.rfind("Hello!", 0), 0u);
    EXPECT_EQ(llm.respond({}, "why?").text, "That is a good question. Let me think about it for a moment.");
    const auto long_reply = llm.respond({}, std::string(5000, 'x'));
    EXPECT_EQ(long_reply.warnings.size(), 1u);
    EXPECT_LT(long_reply.text.size(), 2100u);
}

TEST(RemoteLlm, SendsHistoryAndParsesReply) {
    MockLlm mock([](const httplib::Request&, httplib::Response& res) { reply_with(res, "Nice to see you."); });
    ::setenv("RITA_TEST_KEY", "sekrit", 1);
    RemoteLlmConfig cfg;
    cfg.endpoint = mock.url();
    cfg.api_key_env = "RITA_TEST_KEY";
    RemoteLlm llm(cfg);
    const std::vector<ChatTurn> history = {{"user", "hi"}, {"assistant", "hello"}};
    const auto reply = llm.respond(history, "how are you");
    EXPECT_EQ(reply.text, "Nice to see you.");
    EXPECT_TRUE(reply.warnings.empty());
    EXPECT_EQ(mock.last_auth, "Bearer sekrit");
    const auto body = json::parse(mock.last_body);
    ASSERT_EQ(body["messages"].size(), 4u);
    EXPECT_EQ(body["messages"][3]["content"], "how are you");
}

TEST(RemoteLlm, UnauthorizedNeverFallsBack) {
    MockLlm mock([](const httplib::Request&, httplib::Response& res) { res.status = 401; });
    RemoteLlmConfig cfg;
    cfg.endpoint = mock.url();
    RemoteLlm llm(cfg);
    try {
        llm.respond({}, "hello");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::auth);
    }
    EXPECT_EQ(mock.hits.load(), 1);

    auto svc = stub_service(std::make_shared<RemoteLlm>(cfg));
    const auto events = chat(*svc, "erin", "hello");
    ASSERT_EQ(events.size(), 1u);
    EXPECT_EQ(events[0].type, EventType::error);
    EXPECT_EQ(events[0].code, "auth");
    // The session survives and can try again.
    EXPECT_EQ(chat(*svc, "erin", "hello").size(), 1u);
}

TEST(RemoteLlm, ServerErrorRetriesOnceThenFallsBack) {
    MockLlm mock([](const httplib::Request&, httplib::Response& res) { res.status = 503; });
    RemoteLlmConfig cfg;
    cfg.endpoint = mock.url();
    RemoteLlm llm(cfg);
    const auto reply = llm.respond({}, "the weather");
    EXPECT_EQ(mock.hits.load(), 2);
    EXPECT_EQ(reply.text, "You said: the weather");
    ASSERT_EQ(reply.warnings.size(), 1u);

    cfg.fallback_to_stub = false;
    EXPECT_THROW(RemoteLlm(cfg).respond({}, "x"), Error);
}

TEST(RemoteLlm, UnreachableEndpointFallsBackWithWarningEvent) {
    // Grab a free port, then close it so nothing is listening there.
    net::io_context ioc;
    tcp::acceptor probe(ioc, {net::ip::make_address("127.0.0.1"), 0});
    const auto port = probe.local_endpoint().port();
    probe.close();
    RemoteLlmConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    cfg.timeout_ms = 500;
    auto svc = stub_service(std::make_shared<RemoteLlm>(cfg));
    const auto events = chat(*svc, "frank", "ok");
    ASSERT_FALSE(events.empty());
    EXPECT_EQ(events[0].type, EventType::warning);
    EXPECT_EQ(events.back().type, EventType::utterance_end);

    cfg.endpoint = "not a url";
    EXPECT_THROW(RemoteLlm(cfg).respond({}, "x"), Error);
}

TEST(RemoteLlm, MalformedReplyFallsBack) {
    MockLlm mock([](const httplib::Request&, httplib::Response& res) { res.set_content("{}", "application/json"); });
    RemoteLlmConfig cfg;
    cfg.endpoint = mock.url();
    const auto reply = RemoteLlm(cfg).respond({}, "ok");
    EXPECT_EQ(reply.text, "You said: ok");
    EXPECT_EQ(reply.warnings.size(), 1u);
}

// --- HTTP + WebSocket server -------------------------------------------------

namespace {

struct LiveServer {
    std::shared_ptr<ChatService> service = stub_service();
    std::unique_ptr<Server> server;

    explicit LiveServer(bool pace = false) {
        ServiceConfig cfg;
        cfg.port = 0;
        cfg.library_id = "lib1";
        cfg.pace_frames = pace;
        server = std::make_unique<Server>(cfg, service);
        server->start();
    }
};

std::pair<int, std::string> http_get(std::uint16_t port, const std::string& target, std::string* mime = nullptr) {
    net::io_context ioc;
    beast::tcp_stream stream(ioc);
    stream.connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), port));
    beast::http::request<beast::http::empty_body> req{beast::http::verb::get, target, 11};
    req.set(beast::http::field::host, "127.0.0.1");
    beast::http::write(stream, req);
    beast::flat_buffer buf;
    beast::http::response<beast::http::string_body> res;
    beast::http::read(stream, buf, res);
    if (mime) *mime = std::string(res[beast::http::field::content_type]);
    beast::error_code ec;
    stream.socket().shutdown(tcp::socket::shutdown_both, ec);
    return {res.result_int(), res.body()};
}

/// Headless WebSocket client: sends one chat turn and collects events until utterance_end or error.
std::vector<json> ws_chat(std::uint16_t port, const std::string& session, const std::string& text,
                          std::vector<double>* arrival_ms = nullptr) {
    net::io_context ioc;
    beast::websocket::stream<tcp::socket> ws(ioc);
    ws.next_layer().connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), port));
    ws.handshake("127.0.0.1", "/ws");
    ws.text(true);
    ws.write(net::buffer(json{{"type", "chat"}, {"session_id", session}, {"text", text}}.dump()));
    const auto start = std::chrono::steady_clock::now();
    std::vector<json> events;
    for (;;) {
        beast::flat_buffer buf;
        ws.read(buf);
        events.push_back(json::parse(beast::buffers_to_string(buf.data())));
        if (arrival_ms) {
            arrival_ms->push_back(
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
        }
        const auto& type = events.back()["type"];
        if (type == "utterance_end" || type == "error") break;
    }
    ws.close(beast::websocket::close_code::normal);
    return events;
}

} // namespace

TEST(Server, HealthMetricsAndIndex) {
    LiveServer live;
    const auto port = live.server->port();
    ASSERT_NE(port, 0);
    EXPECT_EQ(http_get(port, "/health"), (std::pair<int, std::string>{200, "ok\n"}));
    const auto [code, body] = http_get(port, "/metrics");
    EXPECT_EQ(code, 200);
    EXPECT_NE(body.find("utterances=0"), std::string::npos);
    EXPECT_NE(body.find("sessions=0"), std::string::npos);
    std::string mime;
    const auto index = http_get(port, "/", &mime);
    EXPECT_EQ(index.first, 200);
    EXPECT_NE(mime.find("text/html"), std::string::npos);
    EXPECT_EQ(http_get(port, "/nowhere").first, 404);
    EXPECT_EQ(http_get(port, "/frames/lib1/999999.png").first, 404);
}

TEST(Server, WebSocketChatStreamsFramesThatCanBeFetched) {
    LiveServer live;
    const auto port = live.server->port();
    const auto events = ws_chat(port, "ws-user", "ok");
    ASSERT_GE(events.size(), 3u);
    EXPECT_EQ(events.front()["type"], "utterance_start");
    EXPECT_EQ(events.back()["type"], "utterance_end");
    EXPECT_TRUE(events.back()["latency"].contains("total_ms"));
    std::int64_t last_seq = -1;
    std::size_t frames = 0;
    for (const auto& e : events) {
        if (e["type"] != "frame") continue;
        ++frames;
        EXPECT_GT(e["seq"].get<std::int64_t>(), last_seq);
        last_seq = e["seq"];
        std::string mime;
        const auto [code, body] = http_get(port, e["frame_url"].get<std::string>(), &mime);
        ASSERT_EQ(code, 200) << e["frame_url"];
        EXPECT_EQ(mime, "image/png");
        EXPECT_EQ(decode_image(std::vector<std::uint8_t>(body.begin(), body.end())).width, 48);
    }
    EXPECT_EQ(frames, 24u);
    const auto metrics = http_get(port, "/metrics").second;
    EXPECT_NE(metrics.find("utterances=1"), std::string::npos) << metrics;
}

TEST(Server, BadMessagesGetErrorEvents) {
    LiveServer live;
    net::io_context ioc;
    beast::websocket::stream<tcp::socket> ws(ioc);
    ws.next_layer().connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), live.server->port()));
    ws.handshake("127.0.0.1", "/ws");
    ws.write(net::buffer(std::string("hello?")));
    beast::flat_buffer buf;
    ws.read(buf);
    const auto e = json::parse(beast::buffers_to_string(buf.data()));
    EXPECT_EQ(e["type"], "error");
    EXPECT_EQ(e["code"], "protocol");
    ws.close(beast::websocket::close_code::normal);
}

TEST(Server, PacedFramesFollowTheOutputClock) {
    LiveServer live(true);
    std::vector<double> arrivals;
    const auto events = ws_chat(live.server->port(), "paced", "ok", &arrivals);
    ASSERT_EQ(events.size(), 26u);
    // 24 frames at 25 fps: the last one is due 23 * 40 ms after the first.
    const double span = arrivals[24] - arrivals[1];
    EXPECT_GT(span, 23 * 40 * 0.8);
    EXPECT_LT(span, 23 * 40 * 2.0);
}

TEST(Server, ConcurrentClientsAreIndependent) {
    LiveServer live;
    const auto port = live.server->port();
    std::vector<std::thread> threads;
    std::vector<std::vector<json>> results(3);
    for (int i = 0; i < 3; ++i) {
        threads.emplace_back([&, i] { results[i] = ws_chat(port, "c" + std::to_string(i), "ok"); });
    }
    for (auto& t : threads) t.join();
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(results[i].front()["utterance_id"], "c" + std::to_string(i) + "-1");
        EXPECT_EQ(results[i].back()["type"], "utterance_end");
    }
}

TEST(Server, OccupiedPortIsAnIoError) {
    LiveServer live;
    ServiceConfig cfg;
    cfg.port = live.server->port();
    Server second(cfg, live.service);
    try {
        second.start();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::io);
    }
}
