#include "spotex/socket.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <memory>

namespace spotex::net {

namespace {

std::string errno_text(const std::string& what) { return what + ": " + std::strerror(errno); }

struct AddrInfoDeleter {
    void operator()(addrinfo* ai) const noexcept { freeaddrinfo(ai); }
};

std::unique_ptr<addrinfo, AddrInfoDeleter> resolve(const std::string& host, int port, bool passive) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    if (passive) hints.ai_flags = AI_PASSIVE;
    addrinfo* result = nullptr;
    const std::string service = std::to_string(port);
    const int rc = getaddrinfo(host.empty() ? nullptr : host.c_str(), service.c_str(), &hints, &result);
    if (rc != 0) throw SocketError("cannot resolve " + host + ": " + gai_strerror(rc));
    return std::unique_ptr<addrinfo, AddrInfoDeleter>(result);
}

}  // namespace

Socket::~Socket() { close(); }

Socket& Socket::operator=(Socket&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.release();
    }
    return *this;
}

int Socket::release() noexcept {
    const int fd = fd_;
    fd_ = -1;
    return fd;
}

void Socket::close() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
}

void Socket::send_all(std::string_view data) const {
    while (!data.empty()) {
        const ssize_t n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw SocketError(errno_text("send"));
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
}

std::size_t Socket::recv_some(std::string& out, std::size_t max) const {
    const std::size_t old = out.size();
    out.resize(old + max);
    ssize_t n;
    do {
        n = ::recv(fd_, out.data() + old, max, 0);
    } while (n < 0 && errno == EINTR);
    if (n < 0) {
        out.resize(old);
        throw SocketError(errno_text("recv"));
    }
    out.resize(old + static_cast<std::size_t>(n));
    return static_cast<std::size_t>(n);
}

void Socket::set_timeout(std::chrono::milliseconds timeout) const {
    timeval tv{};
    tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
    tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
    setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

void Socket::shutdown_write() const noexcept {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_WR);
}

Socket listen_tcp(const std::string& host, int port, int backlog) {
    auto addrs = resolve(host, port, true);
    std::string last_error = "no address";
    for (addrinfo* ai = addrs.get(); ai; ai = ai->ai_next) {
        Socket s(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
        if (!s.valid()) continue;
        const int yes = 1;
        setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
        if (::bind(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(s.fd(), backlog) == 0) return s;
        last_error = errno_text("bind/listen");
    }
    throw SocketError("cannot listen on " + host + ":" + std::to_string(port) + " (" + last_error + ")");
}

int local_port(const Socket& socket) {
    sockaddr_storage addr{};
    socklen_t len = sizeof addr;
    if (getsockname(socket.fd(), reinterpret_cast<sockaddr*>(&addr), &len) != 0)
        throw SocketError(errno_text("getsockname"));
    if (addr.ss_family == AF_INET6) return ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port);
    return ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
}

Socket connect_tcp(const std::string& host, int port, std::chrono::milliseconds timeout) {
    auto addrs = resolve(host, port, false);
    std::string last_error = "no address";
    for (addrinfo* ai = addrs.get(); ai; ai = ai->ai_next) {
        Socket s(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
        if (!s.valid()) continue;
        const int flags = fcntl(s.fd(), F_GETFL, 0);
        fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
        int rc = ::connect(s.fd(), ai->ai_addr, ai->ai_addrlen);
        if (rc != 0 && errno == EINPROGRESS) {
            pollfd pfd{s.fd(), POLLOUT, 0};
            rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
            if (rc == 1) {
                int err = 0;
                socklen_t len = sizeof err;
                getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
                errno = err;
                rc = err == 0 ? 0 : -1;
            } else {
                errno = rc == 0 ? ETIMEDOUT : errno;
                rc = -1;
            }
        }
        if (rc == 0) {
            fcntl(s.fd(), F_SETFL, flags);
            const int yes = 1;
            setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &yes, sizeof yes);
            s.set_timeout(timeout);
            return s;
        }
        last_error = errno_text("connect");
    }
    throw SocketError(host + ":" + std::to_string(port) + ": " + last_error);
}

std::optional<Socket> accept_for(const Socket& listener, std::chrono::milliseconds timeout) {
    pollfd pfd{listener.fd(), POLLIN, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (rc <= 0) return std::nullopt;
    Socket client(::accept4(listener.fd(), nullptr, nullptr, SOCK_CLOEXEC));
    if (!client.valid()) return std::nullopt;
    return client;
}

}  // namespace spotex::net
