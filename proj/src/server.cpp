// SPDX-License-Identifier: Apache-2.0
#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <thread>

#include "rita/error.hpp"
#include "rita/io.hpp"
#include "rita/service.hpp"

namespace rita {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using Clock = std::chrono::steady_clock;

namespace {

constexpr std::string_view kDefaultIndex = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>rita avatar service</title></head>
<body><h1>rita avatar service</h1>
<p>Connect a client to <code>/ws</code>. Health: <a href="/health">/health</a>, metrics: <a href="/metrics">/metrics</a>.</p>
</body></html>
)";

std::string guess_mime(const std::filesystem::path& p) {
    const std::string ext = p.extension().string();
    if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
    if (ext == ".js" || ext == ".mjs") return "text/javascript";
    if (ext == ".css") return "text/css";
    if (ext == ".json") return "application/json";
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".svg") return "image/svg+xml";
    return "application/octet-stream";
}

struct Shared {
    ServiceConfig config;
    std::shared_ptr<ChatService> service;
    net::thread_pool workers;

    Shared(ServiceConfig c, std::shared_ptr<ChatService> s)
        : config(std::move(c)), service(std::move(s)), workers(static_cast<std::size_t>(config.workers)) {}
};

// ---------------------------------------------------------------------------
// WebSocket session: reads client messages, runs them on the worker pool and
// writes events back paced at the output frame rate.

class WsSession : public std::enable_shared_from_this<WsSession> {
public:
    WsSession(tcp::socket&& socket, std::shared_ptr<Shared> shared)
        : ws_(std::move(socket)), timer_(ws_.get_executor()), shared_(std::move(shared)) {
        const double fps = shared_->service->pipeline().target_fps();
        frame_interval_ = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / fps));
        max_lag_ = std::chrono::duration_cast<Clock::duration>(
            std::chrono::duration<double>(shared_->config.max_buffer_seconds));
    }

    void run(http::request<http::string_body> req) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.text(true);
        ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
    }

    /// Callable from any thread.
    void enqueue(ServiceEvent event) {
        net::post(ws_.get_executor(), [self = shared_from_this(), ev = std::move(event)]() mutable {
            self->schedule(std::move(ev));
        });
    }

private:
    struct Outgoing {
        std::string text;
        Clock::time_point due;
        bool droppable = false;
    };

    void on_accept(beast::error_code ec) {
        if (ec) return;
        do_read();
    }

    void do_read() {
        ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
    }

    void on_read(beast::error_code ec, std::size_t) {
        if (ec) {
            closed_ = true;
            timer_.cancel();
            return;
        }
        std::string text = beast::buffers_to_string(buffer_.data());
        buffer_.consume(buffer_.size());
        auto self = shared_from_this();
        net::post(shared_->workers, [self, text = std::move(text)] {
            self->shared_->service->handle_message(text, [self](ServiceEvent ev) { self->enqueue(std::move(ev)); });
        });
        do_read();
    }

    // Runs on the session strand.
    void schedule(ServiceEvent ev) {
        const auto now = Clock::now();
        Outgoing out;
        out.text = to_json(ev);
        out.due = now;
        if (shared_->config.pace_frames) {
            switch (ev.type) {
            case EventType::utterance_start:
                anchor_ = now;
                break;
            case EventType::frame:
                out.due = anchor_ + frame_interval_ * static_cast<long>(ev.seq);
                out.droppable = true;
                break;
            case EventType::utterance_end:
                if (!queue_.empty()) out.due = std::max(now, queue_.back().due);
                break;
            default:
                break;
            }
        }
        queue_.push_back(std::move(out));
        pump();
    }

    void pump() {
        if (writing_ || closed_) return;
        while (!queue_.empty()) {
            const auto now = Clock::now();
            Outgoing& front = queue_.front();
            // Frames that fell more than the buffer window behind their slot are stale.
            if (front.droppable && now - front.due > max_lag_) {
                ++dropped_;
                queue_.pop_front();
                continue;
            }
            if (front.due > now) {
                timer_.expires_at(front.due);
                timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
                    if (!ec) self->pump();
                });
                return;
            }
            writing_ = true;
            current_ = std::move(front.text);
            queue_.pop_front();
            ws_.async_write(net::buffer(current_), beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
            return;
        }
    }

    void on_write(beast::error_code ec, std::size_t) {
        writing_ = false;
        if (ec) {
            closed_ = true;
            return;
        }
        pump();
    }

    websocket::stream<beast::tcp_stream> ws_;
    net::steady_timer timer_;
    std::shared_ptr<Shared> shared_;
    beast::flat_buffer buffer_;
    std::deque<Outgoing> queue_;
    std::string current_;
    Clock::time_point anchor_ = Clock::now();
    Clock::duration frame_interval_{};
    Clock::duration max_lag_{};
    bool writing_ = false;
    bool closed_ = false;
    std::size_t dropped_ = 0;
};

// ---------------------------------------------------------------------------
// Plain HTTP, upgrading to WebSocket on /ws.

class HttpSession : public std::enable_shared_from_this<HttpSession> {
public:
    HttpSession(tcp::socket&& socket, std::shared_ptr<Shared> shared)
        : stream_(std::move(socket)), shared_(std::move(shared)) {}

    void run() {
        net::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpSession::do_read, shared_from_this()));
    }

private:
    void do_read() {
        req_ = {};
        stream_.expires_after(std::chrono::seconds(30));
        http::async_read(stream_, buffer_, req_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
    }

    void on_read(beast::error_code ec, std::size_t) {
        if (ec == http::error::end_of_stream) {
            stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
            return;
        }
        if (ec) return;
        if (websocket::is_upgrade(req_)) {
            if (req_.target() == "/ws") {
                stream_.expires_never();
                std::make_shared<WsSession>(stream_.release_socket(), shared_)->run(std::move(req_));
                return;
            }
        }
        send(route());
    }

    http::response<http::string_body> make(http::status status, std::string body, std::string mime) const {
        http::response<http::string_body> res{status, req_.version()};
        res.set(http::field::server, "rita");
        res.set(http::field::content_type, mime);
        res.keep_alive(req_.keep_alive());
        res.body() = std::move(body);
        res.prepare_payload();
        return res;
    }

    http::response<http::string_body> route() {
        if (req_.method() != http::verb::get && req_.method() != http::verb::head) {
            return make(http::status::method_not_allowed, "method not allowed\n", "text/plain");
        }
        std::string target(req_.target());
        if (const auto q = target.find('?'); q != std::string::npos) target.resize(q);
        auto& service = *shared_->service;

        if (target == "/health") return make(http::status::ok, "ok\n", "text/plain");
        if (target == "/metrics") {
            std::string body = service.metrics().format();
            body += "sessions=" + std::to_string(service.session_count()) + "\n";
            body += "library_frames=" + std::to_string(service.pipeline().library().size()) + "\n";
            return make(http::status::ok, std::move(body), "text/plain");
        }
        constexpr std::string_view frames_prefix = "/frames/";
        if (target.rfind(frames_prefix, 0) == 0) {
            const std::string rest = target.substr(frames_prefix.size());
            const auto slash = rest.find('/');
            if (slash != std::string::npos) {
                try {
                    if (auto frame = service.frame(rest.substr(0, slash), rest.substr(slash + 1))) {
                        return make(http::status::ok, std::string(frame->bytes.begin(), frame->bytes.end()), frame->mime);
                    }
                } catch (const Error& e) {
                    return make(http::status::internal_server_error, std::string(e.what()) + "\n", "text/plain");
                }
            }
            return make(http::status::not_found, "no such frame\n", "text/plain");
        }
        if (target == "/" || target == "/index.html") {
            const auto& dir = shared_->config.static_dir;
            if (!dir.empty() && std::filesystem::exists(dir / "index.html")) {
                return make(http::status::ok, read_file_text(dir / "index.html"), "text/html; charset=utf-8");
            }
            return make(http::status::ok, std::string(kDefaultIndex), "text/html; charset=utf-8");
        }
        const auto& dir = shared_->config.static_dir;
        if (!dir.empty() && target.find("..") == std::string::npos) {
            const auto path = dir / target.substr(1);
            if (std::filesystem::is_regular_file(path)) {
                return make(http::status::ok, read_file_text(path), guess_mime(path));
            }
        }
        return make(http::status::not_found, "not found\n", "text/plain");
    }

    void send(http::response<http::string_body>&& res) {
        auto sp = std::make_shared<http::response<http::string_body>>(std::move(res));
        res_ = sp;
        http::async_write(stream_, *sp,
                          beast::bind_front_handler(&HttpSession::on_write, shared_from_this(), sp->need_eof()));
    }

    void on_write(bool close, beast::error_code ec, std::size_t) {
        if (ec) return;
        if (close) {
            stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
            return;
        }
        res_.reset();
        do_read();
    }

    beast::tcp_stream stream_;
    beast::flat_buffer buffer_;
    http::request<http::string_body> req_;
    std::shared_ptr<void> res_;
    std::shared_ptr<Shared> shared_;
};

} // namespace

// ---------------------------------------------------------------------------

struct Server::Impl {
    std::shared_ptr<Shared> shared;
    net::io_context ioc;
    tcp::acceptor acceptor{ioc};
    std::vector<std::thread> threads;
    std::mutex mutex;
    std::condition_variable stopped_cv;
    bool running = false;
    bool stopped = false;

    void do_accept() {
        acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
            if (ec) return;
            std::make_shared<HttpSession>(std::move(socket), shared)->run();
            do_accept();
        });
    }
};

Server::Server(ServiceConfig config, std::shared_ptr<ChatService> service) : impl_(std::make_unique<Impl>()) {
    if (!service) fail(Errc::invalid_argument, "server needs a chat service");
    impl_->shared = std::make_shared<Shared>(std::move(config), std::move(service));
}

Server::~Server() { stop(); }

void Server::start() {
    const auto& cfg = impl_->shared->config;
    beast::error_code ec;
    const auto address = net::ip::make_address(cfg.bind_address, ec);
    if (ec) fail(Errc::config, "bad bind address '" + cfg.bind_address + "'");
    const tcp::endpoint endpoint{address, cfg.port};
    auto& acc = impl_->acceptor;
    acc.open(endpoint.protocol(), ec);
    if (!ec) acc.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acc.bind(endpoint, ec);
    if (!ec) acc.listen(net::socket_base::max_listen_connections, ec);
    if (ec) {
        fail(Errc::io, "cannot listen on " + cfg.bind_address + ":" + std::to_string(cfg.port) + ": " + ec.message());
    }
    impl_->do_accept();
    impl_->running = true;
    for (int i = 0; i < cfg.io_threads; ++i) impl_->threads.emplace_back([this] { impl_->ioc.run(); });
}

std::uint16_t Server::port() const noexcept {
    beast::error_code ec;
    const auto ep = impl_->acceptor.local_endpoint(ec);
    return ec ? 0 : ep.port();
}

void Server::stop() {
    if (!impl_) return;
    {
        std::lock_guard lock(impl_->mutex);
        if (impl_->stopped) return;
        impl_->stopped = true;
    }
    impl_->ioc.stop();
    for (auto& t : impl_->threads) {
        if (t.joinable()) t.join();
    }
    impl_->shared->workers.join();
    impl_->stopped_cv.notify_all();
}

void Server::wait() {
    std::unique_lock lock(impl_->mutex);
    impl_->stopped_cv.wait(lock, [this] { return impl_->stopped; });
}

} // namespace rita
