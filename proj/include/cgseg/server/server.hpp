#pragma once

#include "cgseg/server/session.hpp"

#include <cstdint>
#include <memory>
#include <string>

namespace cgseg::server {

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = 8765;
};

/// "host:port" or ":port"; throws Precondition when malformed.
Endpoint parse_bind(const std::string& text);

/// WebSocket endpoint for the session protocol (one Session per connection,
/// one JSON message per WebSocket message) plus HTTP GET /health on the same
/// port. Port 0 picks a free port.
class Server {
public:
    Server(std::shared_ptr<const SharedScene> shared, Endpoint bind, int threads = 2);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds and starts the worker threads; returns immediately. With
    /// `handle_signals`, SIGINT and SIGTERM request a stop.
    void start(bool handle_signals = false);
    /// Blocks until a stop is requested.
    void wait();
    void request_stop();
    /// Closes every connection and joins the workers.
    void stop();

    std::uint16_t port() const;
    std::size_t session_count() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace cgseg::server
