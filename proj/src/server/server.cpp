#include "cgseg/server/server.hpp"

#include "cgseg/error.hpp"

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <charconv>
#include <csignal>
#include <condition_variable>
#include <mutex>
#include <thread>

namespace cgseg::server {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

Endpoint parse_bind(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos) fail(ErrorCode::Precondition, fmt::format("bind address '{}' is not host:port", text));
    Endpoint ep;
    ep.host = colon == 0 ? "127.0.0.1" : text.substr(0, colon);
    const std::string port = text.substr(colon + 1);
    unsigned value = 0;
    const auto [end, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
    if (ec != std::errc() || end != port.data() + port.size() || port.empty() || value > 65535) {
        fail(ErrorCode::Precondition, fmt::format("bad port in bind address '{}'", text));
    }
    ep.port = static_cast<std::uint16_t>(value);
    return ep;
}

namespace {

// What connections need from the server; outlives every connection.
struct Core {
    std::shared_ptr<const SharedScene> shared;
    std::atomic<std::size_t> sessions{0};
    std::atomic<std::uint64_t> next_id{1};

    std::string health() const {
        return nlohmann::json{{"status", "ok"},
                              {"version", CGSEG_VERSION},
                              {"protocol", kProtocolVersion},
                              {"gaussians", shared->scene.size()},
                              {"coarse_clusters", shared->checkpoint.clusters.coarse.size()},
                              {"fine_clusters", shared->checkpoint.clusters.fine.size()},
                              {"sessions", sessions.load()}}
            .dump();
    }
};

// One WebSocket connection: read, handle, write, repeat. Messages of one
// connection are therefore processed strictly in arrival order.
class WsConnection : public std::enable_shared_from_this<WsConnection> {
public:
    WsConnection(tcp::socket&& socket, Core& server)
        : ws_(std::move(socket)), server_(server),
          session_(server.shared, fmt::format("s{}", server.next_id.fetch_add(1))) {
        ++server_.sessions;
    }
    ~WsConnection() { --server_.sessions; }

    void run(http::request<http::string_body> request) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(request, beast::bind_front_handler(&WsConnection::on_accept, shared_from_this()));
    }

private:
    void on_accept(beast::error_code ec) {
        if (ec) return;
        read();
    }

    void read() { ws_.async_read(buffer_, beast::bind_front_handler(&WsConnection::on_read, shared_from_this())); }

    void on_read(beast::error_code ec, std::size_t) {
        if (ec) return; // closed or failed
        const std::string text = beast::buffers_to_string(buffer_.data());
        buffer_.consume(buffer_.size());
        reply_ = session_.handle_text(text).dump();
        ws_.text(true);
        ws_.async_write(asio::buffer(reply_), beast::bind_front_handler(&WsConnection::on_write, shared_from_this()));
    }

    void on_write(beast::error_code ec, std::size_t) {
        if (ec) return;
        read();
    }

    websocket::stream<beast::tcp_stream> ws_;
    Core& server_;
    Session session_;
    beast::flat_buffer buffer_;
    std::string reply_;
};

// Reads the first HTTP request, then either upgrades or answers it.
class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
public:
    HttpConnection(tcp::socket&& socket, Core& server) : stream_(std::move(socket)), server_(server) {}

    void run() {
        stream_.expires_after(std::chrono::seconds(30));
        http::async_read(stream_, buffer_, request_, beast::bind_front_handler(&HttpConnection::on_read, shared_from_this()));
    }

private:
    void on_read(beast::error_code ec, std::size_t) {
        if (ec) return;
        if (websocket::is_upgrade(request_)) {
            stream_.expires_never();
            std::make_shared<WsConnection>(stream_.release_socket(), server_)->run(std::move(request_));
            return;
        }
        response_.version(request_.version());
        response_.keep_alive(false);
        if (request_.method() == http::verb::get && request_.target() == "/health") {
            response_.result(http::status::ok);
            response_.set(http::field::content_type, "application/json");
            response_.body() = server_.health();
        } else {
            response_.result(http::status::not_found);
            response_.set(http::field::content_type, "text/plain");
            response_.body() = "not found\n";
        }
        response_.prepare_payload();
        http::async_write(stream_, response_, beast::bind_front_handler(&HttpConnection::on_write, shared_from_this()));
    }

    void on_write(beast::error_code, std::size_t) {
        beast::error_code ignored;
        stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
    }

    beast::tcp_stream stream_;
    Core& server_;
    beast::flat_buffer buffer_;
    http::request<http::string_body> request_;
    http::response<http::string_body> response_;
};

} // namespace

struct Server::Impl : Core {
    Endpoint bind;
    int threads;
    // Destroyed on stop so that pending handlers, and with them every open
    // connection, are released.
    std::unique_ptr<asio::io_context> ioc = std::make_unique<asio::io_context>();
    std::unique_ptr<tcp::acceptor> acceptor = std::make_unique<tcp::acceptor>(*ioc);
    std::unique_ptr<asio::signal_set> signals = std::make_unique<asio::signal_set>(*ioc);
    std::vector<std::thread> workers;
    std::mutex mutex;
    std::condition_variable cv;
    bool stop_requested = false;
    bool stopped = false;

    Impl(std::shared_ptr<const SharedScene> s, Endpoint b, int t) : bind(std::move(b)), threads(t) { shared = std::move(s); }

    void request_stop() {
        std::lock_guard lock(mutex);
        stop_requested = true;
        cv.notify_all();
    }

    void accept();
};

void Server::Impl::accept() {
    acceptor->async_accept(asio::make_strand(*ioc), [this](beast::error_code ec, tcp::socket socket) {
        if (ec) {
            if (ec != asio::error::operation_aborted) spdlog::warn("accept failed: {}", ec.message());
            if (!acceptor->is_open()) return;
        } else {
            std::make_shared<HttpConnection>(std::move(socket), *this)->run();
        }
        accept();
    });
}

Server::Server(std::shared_ptr<const SharedScene> shared, Endpoint bind, int threads)
    : impl_(std::make_unique<Impl>(std::move(shared), std::move(bind), std::max(1, threads))) {}

Server::~Server() { stop(); }

void Server::start(bool handle_signals) {
    beast::error_code ec;
    const auto address = asio::ip::make_address(impl_->bind.host, ec);
    if (ec) fail(ErrorCode::Precondition, fmt::format("bad bind host '{}': {}", impl_->bind.host, ec.message()));
    const tcp::endpoint ep(address, impl_->bind.port);
    auto& acc = *impl_->acceptor;
    acc.open(ep.protocol(), ec);
    if (!ec) acc.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) acc.bind(ep, ec);
    if (!ec) acc.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) fail(ErrorCode::Io, fmt::format("cannot listen on {}:{}: {}", impl_->bind.host, impl_->bind.port, ec.message()));
    impl_->accept();
    if (handle_signals) {
        impl_->signals->add(SIGINT);
        impl_->signals->add(SIGTERM);
        impl_->signals->async_wait([this](beast::error_code ec, int) {
            if (!ec) impl_->request_stop();
        });
    }
    for (int t = 0; t < impl_->threads; ++t) impl_->workers.emplace_back([this] { impl_->ioc->run(); });
    spdlog::info("serving {} Gaussians on {}:{}", impl_->shared->scene.size(), impl_->bind.host, port());
}

void Server::wait() {
    std::unique_lock lock(impl_->mutex);
    impl_->cv.wait(lock, [this] { return impl_->stop_requested; });
}

void Server::request_stop() { impl_->request_stop(); }

void Server::stop() {
    {
        std::lock_guard lock(impl_->mutex);
        if (impl_->stopped) return;
        impl_->stopped = true;
    }
    impl_->ioc->stop();
    for (auto& w : impl_->workers) {
        if (w.joinable()) w.join();
    }
    impl_->signals.reset();
    impl_->acceptor.reset();
    impl_->ioc.reset();
    impl_->request_stop();
}

std::uint16_t Server::port() const {
    beast::error_code ec;
    if (!impl_->acceptor) return impl_->bind.port;
    const auto ep = impl_->acceptor->local_endpoint(ec);
    return ec ? impl_->bind.port : ep.port();
}

std::size_t Server::session_count() const { return impl_->sessions.load(); }

} // namespace cgseg::server
