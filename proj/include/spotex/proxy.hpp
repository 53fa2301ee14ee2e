#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "spotex/fingerprint.hpp"
#include "spotex/socket.hpp"

namespace spotex::proxy {

inline constexpr std::string_view kFingerprintHeader = "X-Network-Fingerprint";
inline constexpr std::string_view kSessionHeader = "X-Spotex-Session";
inline constexpr std::size_t kMaxFingerprintHeaderBytes = 8192;

/// Base64 (standard alphabet, padded) of the canonical fingerprint JSON.
/// Oversized fingerprints keep the strongest observations that fit in
/// kMaxFingerprintHeaderBytes.
std::string encode_fingerprint_header(const Fingerprint& fp);

/// Inverse of encode_fingerprint_header. Throws FingerprintFormatError.
Fingerprint decode_fingerprint_header(std::string_view value);

std::string base64_encode(std::string_view data);
std::optional<std::string> base64_decode(std::string_view text);

class BadRequest : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct HeaderField {
    std::string name;
    std::string value;     // trimmed
    std::string raw_line;  // exactly as received, without CRLF
};

struct RequestHead {
    std::string method;
    std::string target;
    std::string version;
    std::vector<HeaderField> headers;

    /// First header with this name (case-insensitive).
    const HeaderField* find(std::string_view name) const;
};

/// Parses a request line and header block (terminating blank line
/// optional). Throws BadRequest.
RequestHead parse_request_head(std::string_view head);

struct Upstream {
    std::string host;
    int port = 80;
    std::string target;  // origin-form path and query
};

/// Absolute-form http:// targets name the upstream directly; origin-form
/// targets fall back to the Host header. Throws BadRequest.
Upstream resolve_upstream(const RequestHead& head);

/// Hop-by-hop headers are dropped (plus any named by Connection); all other
/// header lines pass through verbatim and in order. A non-empty
/// fingerprint_header replaces any client-sent X-Network-Fingerprint.
std::string build_forward_head(const RequestHead& head, const Upstream& upstream,
                               const std::optional<std::string>& fingerprint_header);

bool is_hop_by_hop(std::string_view name);

struct ProxyConfig {
    std::string listen_host = "127.0.0.1";
    int listen_port = 8081;
    std::string dpi_url = "http://127.0.0.1:8080";
    Timestamp cache_ttl_ms = 0;  // 0 disables the session fingerprint cache
    int dpi_timeout_ms = 500;
    int upstream_timeout_ms = 10'000;
};

/// Reads session fingerprints from the DPI server's getNetworks endpoint,
/// optionally through a short-lived cache. Any failure yields nullopt.
class FingerprintSource {
public:
    FingerprintSource(std::string dpi_url, Timestamp cache_ttl_ms, int timeout_ms);

    std::optional<Fingerprint> fetch(const std::string& session_id);

private:
    struct Entry {
        std::chrono::steady_clock::time_point fetched_at;
        Fingerprint fingerprint;
    };

    std::string dpi_url_;
    std::chrono::milliseconds cache_ttl_;
    int timeout_ms_;
    std::mutex mutex_;
    std::map<std::string, Entry> cache_;
};

/// Plain HTTP/1.1 forward proxy, one request per client connection.
class ProxyServer {
public:
    explicit ProxyServer(ProxyConfig config);
    ~ProxyServer();

    ProxyServer(const ProxyServer&) = delete;
    ProxyServer& operator=(const ProxyServer&) = delete;

    /// Binds and starts accepting on a background thread; returns the port.
    int start();
    void stop();

private:
    void accept_loop();
    void handle(net::Socket client);

    ProxyConfig config_;
    FingerprintSource source_;
    net::Socket listener_;
    std::thread acceptor_;
    std::atomic<bool> stopping_{false};

    std::mutex active_mutex_;
    std::condition_variable active_cv_;
    int active_ = 0;
};

}  // namespace spotex::proxy
