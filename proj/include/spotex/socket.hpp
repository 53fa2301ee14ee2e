#pragma once

#include <chrono>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace spotex::net {

class SocketError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Owning TCP socket descriptor.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) noexcept : fd_(fd) {}
    ~Socket();

    Socket(Socket&& other) noexcept : fd_(other.release()) {}
    Socket& operator=(Socket&& other) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;

    int fd() const noexcept { return fd_; }
    bool valid() const noexcept { return fd_ >= 0; }
    int release() noexcept;
    void close() noexcept;

    /// Throws SocketError on failure.
    void send_all(std::string_view data) const;
    /// Appends up to max bytes; returns 0 on orderly EOF. Throws on error or
    /// timeout.
    std::size_t recv_some(std::string& out, std::size_t max = 16384) const;
    void set_timeout(std::chrono::milliseconds timeout) const;
    void shutdown_write() const noexcept;

private:
    int fd_ = -1;
};

/// Listening socket bound to host:port (port 0 picks a free port).
Socket listen_tcp(const std::string& host, int port, int backlog = 64);

int local_port(const Socket& socket);

Socket connect_tcp(const std::string& host, int port, std::chrono::milliseconds timeout);

/// Waits up to timeout for a pending connection; empty on timeout.
std::optional<Socket> accept_for(const Socket& listener, std::chrono::milliseconds timeout);

}  // namespace spotex::net
