#include "spotex/proxy.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>

#include <httplib.h>
#include <openssl/evp.h>

#include "spotex/dpi_server.hpp"

namespace spotex::proxy {

namespace {

constexpr std::size_t kMaxHeadBytes = 64 * 1024;
constexpr std::size_t kMaxBodyBytes = 64 * 1024 * 1024;

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
           });
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::vector<std::string> comma_tokens(std::string_view value) {
    std::vector<std::string> out;
    while (!value.empty()) {
        const auto comma = value.find(',');
        auto token = trim(value.substr(0, comma));
        if (!token.empty()) out.push_back(lower(token));
        if (comma == std::string_view::npos) break;
        value.remove_prefix(comma + 1);
    }
    return out;
}

int parse_port(std::string_view text) {
    int port = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), port);
    if (ec != std::errc{} || ptr != text.data() + text.size() || port <= 0 || port > 65535)
        throw BadRequest("invalid port '" + std::string(text) + "'");
    return port;
}

void split_authority(std::string_view authority, Upstream& up) {
    if (const auto at = authority.rfind('@'); at != std::string_view::npos) authority.remove_prefix(at + 1);
    if (authority.empty()) throw BadRequest("empty host");
    if (authority.front() == '[') {
        const auto close = authority.find(']');
        if (close == std::string_view::npos) throw BadRequest("unterminated IPv6 literal");
        up.host = std::string(authority.substr(1, close - 1));
        auto rest = authority.substr(close + 1);
        if (!rest.empty()) {
            if (rest.front() != ':') throw BadRequest("bad authority");
            up.port = parse_port(rest.substr(1));
        }
        return;
    }
    const auto colon = authority.rfind(':');
    if (colon == std::string_view::npos) {
        up.host = std::string(authority);
    } else {
        up.host = std::string(authority.substr(0, colon));
        up.port = parse_port(authority.substr(colon + 1));
    }
    if (up.host.empty()) throw BadRequest("empty host");
}

std::string status_response(int code, std::string_view reason, std::string_view body) {
    std::string out = "HTTP/1.1 " + std::to_string(code) + " " + std::string(reason) + "\r\n";
    out += "Content-Type: text/plain; charset=utf-8\r\n";
    out += "Content-Length: " + std::to_string(body.size()) + "\r\n";
    out += "Connection: close\r\n\r\n";
    out += body;
    return out;
}

/// Buffered reads from a client socket.
class Reader {
public:
    explicit Reader(const net::Socket& s) : socket_(s) {}

    std::string read_head() {
        std::size_t scanned = 0;
        while (true) {
            const auto end = buffer_.find("\r\n\r\n", scanned);
            if (end != std::string::npos) {
                std::string head = buffer_.substr(0, end + 4);
                buffer_.erase(0, end + 4);
                return head;
            }
            scanned = buffer_.size() >= 3 ? buffer_.size() - 3 : 0;
            if (buffer_.size() > kMaxHeadBytes) throw BadRequest("request head too large");
            if (socket_.recv_some(buffer_) == 0) throw BadRequest("connection closed before end of head");
        }
    }

    /// Returns exactly n bytes.
    std::string take(std::size_t n) {
        while (buffer_.size() < n) {
            if (socket_.recv_some(buffer_) == 0) throw BadRequest("connection closed mid-body");
        }
        std::string out = buffer_.substr(0, n);
        buffer_.erase(0, n);
        return out;
    }

    std::string take_line() {
        while (true) {
            const auto eol = buffer_.find("\r\n");
            if (eol != std::string::npos) return take(eol + 2);
            if (buffer_.size() > kMaxHeadBytes) throw BadRequest("line too long");
            if (socket_.recv_some(buffer_) == 0) throw BadRequest("connection closed mid-body");
        }
    }

    /// Raw chunked body, framing included, up to and including the trailer
    /// section's blank line.
    std::string take_chunked() {
        std::string raw;
        while (true) {
            std::string line = take_line();
            raw += line;
            std::string_view size_text(line);
            size_text.remove_suffix(2);
            size_text = trim(size_text.substr(0, size_text.find(';')));
            std::size_t size = 0;
            auto [ptr, ec] = std::from_chars(size_text.data(), size_text.data() + size_text.size(), size, 16);
            if (ec != std::errc{} || ptr != size_text.data() + size_text.size() || size_text.empty())
                throw BadRequest("bad chunk size");
            if (size == 0) break;
            if (raw.size() + size > kMaxBodyBytes) throw BadRequest("body too large");
            raw += take(size + 2);
        }
        while (true) {
            std::string line = take_line();
            raw += line;
            if (line == "\r\n") return raw;
        }
    }

private:
    const net::Socket& socket_;
    std::string buffer_;
};

}  // namespace

std::string base64_encode(std::string_view data) {
    std::string out(4 * ((data.size() + 2) / 3) + 1, '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(data.data()), static_cast<int>(data.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::optional<std::string> base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) return std::nullopt;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        const bool alphabet = std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '/';
        const bool padding = c == '=' && i + 2 >= text.size() && (i + 1 == text.size() || text[i + 1] == '=');
        if (!alphabet && !padding) return std::nullopt;
    }
    if (text.empty()) return std::string();
    std::string out(3 * text.size() / 4, '\0');
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
    if (n < 0) return std::nullopt;
    std::size_t padding = 0;
    if (text.ends_with("==")) padding = 2;
    else if (text.ends_with("=")) padding = 1;
    out.resize(static_cast<std::size_t>(n) - padding);
    return out;
}

std::string encode_fingerprint_header(const Fingerprint& fp) {
    std::string encoded = base64_encode(to_canonical_json(fp));
    if (encoded.size() <= kMaxFingerprintHeaderBytes) return encoded;

    auto strongest = fp.observations();
    std::stable_sort(strongest.begin(), strongest.end(),
                     [](const NetworkObservation& a, const NetworkObservation& b) { return a.rssi() > b.rssi(); });
    auto encode_top = [&](std::size_t k) {
        Fingerprint top;
        for (std::size_t i = 0; i < k; ++i) top = merge_observation(std::move(top), strongest[i]);
        return base64_encode(to_canonical_json(top));
    };
    // Encoded size grows with k, so the largest fitting prefix is found by
    // bisection. k = 0 ("W10=") always fits.
    std::size_t lo = 0, hi = strongest.size();
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo + 1) / 2;
        if (encode_top(mid).size() <= kMaxFingerprintHeaderBytes) lo = mid;
        else hi = mid - 1;
    }
    return encode_top(lo);
}

Fingerprint decode_fingerprint_header(std::string_view value) {
    auto json = base64_decode(value);
    if (!json) throw FingerprintFormatError("fingerprint header is not valid base64");
    return fingerprint_from_json(*json, 0);
}

const HeaderField* RequestHead::find(std::string_view name) const {
    for (const auto& h : headers) {
        if (iequals(h.name, name)) return &h;
    }
    return nullptr;
}

RequestHead parse_request_head(std::string_view head) {
    RequestHead out;
    auto next_line = [&head]() -> std::optional<std::string_view> {
        if (head.empty()) return std::nullopt;
        const auto eol = head.find("\r\n");
        std::string_view line = head.substr(0, eol);
        head.remove_prefix(eol == std::string_view::npos ? head.size() : eol + 2);
        return line;
    };

    auto request_line = next_line();
    if (!request_line || request_line->empty()) throw BadRequest("missing request line");
    const auto sp1 = request_line->find(' ');
    const auto sp2 = request_line->rfind(' ');
    if (sp1 == std::string_view::npos || sp1 == sp2) throw BadRequest("malformed request line");
    out.method = std::string(request_line->substr(0, sp1));
    out.target = std::string(request_line->substr(sp1 + 1, sp2 - sp1 - 1));
    out.version = std::string(request_line->substr(sp2 + 1));
    if (out.method.empty() || out.target.empty() || !out.version.starts_with("HTTP/1."))
        throw BadRequest("malformed request line");

    while (auto line = next_line()) {
        if (line->empty()) break;
        if (line->front() == ' ' || line->front() == '\t') throw BadRequest("obsolete header folding");
        const auto colon = line->find(':');
        if (colon == std::string_view::npos || colon == 0) throw BadRequest("malformed header line");
        const auto name = line->substr(0, colon);
        if (name.find_first_of(" \t") != std::string_view::npos) throw BadRequest("whitespace in header name");
        out.headers.push_back({std::string(name), std::string(trim(line->substr(colon + 1))), std::string(*line)});
    }
    return out;
}

Upstream resolve_upstream(const RequestHead& head) {
    Upstream up;
    std::string_view target = head.target;
    if (target.size() > 7 && iequals(target.substr(0, 7), "http://")) {
        target.remove_prefix(7);
        const auto path_start = target.find_first_of("/?");
        split_authority(target.substr(0, path_start), up);
        if (path_start == std::string_view::npos) up.target = "/";
        else if (target[path_start] == '?') up.target = "/" + std::string(target.substr(path_start));
        else up.target = std::string(target.substr(path_start));
        return up;
    }
    if (target.front() != '/') throw BadRequest("unsupported request target '" + head.target + "'");
    const HeaderField* host = head.find("Host");
    if (!host || host->value.empty()) throw BadRequest("origin-form request without Host header");
    split_authority(host->value, up);
    up.target = head.target;
    return up;
}

bool is_hop_by_hop(std::string_view name) {
    static const std::set<std::string> names = {"connection", "proxy-connection", "keep-alive",
                                                "proxy-authenticate", "proxy-authorization", "te",
                                                "trailer", "upgrade"};
    return names.contains(lower(name));
}

std::string build_forward_head(const RequestHead& head, const Upstream& upstream,
                               const std::optional<std::string>& fingerprint_header) {
    std::set<std::string> dropped;
    for (const auto& h : head.headers) {
        if (iequals(h.name, "Connection") || iequals(h.name, "Proxy-Connection")) {
            for (auto& token : comma_tokens(h.value)) dropped.insert(std::move(token));
        }
    }

    std::string out = head.method + " " + upstream.target + " " + head.version + "\r\n";
    bool has_host = false;
    for (const auto& h : head.headers) {
        if (is_hop_by_hop(h.name) || dropped.contains(lower(h.name))) continue;
        if (fingerprint_header && iequals(h.name, kFingerprintHeader)) continue;
        has_host = has_host || iequals(h.name, "Host");
        out += h.raw_line + "\r\n";
    }
    if (!has_host) {
        const bool ipv6 = upstream.host.find(':') != std::string::npos;
        out += "Host: " + (ipv6 ? "[" + upstream.host + "]" : upstream.host);
        if (upstream.port != 80) out += ":" + std::to_string(upstream.port);
        out += "\r\n";
    }
    if (fingerprint_header) out += std::string(kFingerprintHeader) + ": " + *fingerprint_header + "\r\n";
    out += "Connection: close\r\n\r\n";
    return out;
}

FingerprintSource::FingerprintSource(std::string dpi_url, Timestamp cache_ttl_ms, int timeout_ms)
    : dpi_url_(std::move(dpi_url)), cache_ttl_(cache_ttl_ms), timeout_ms_(timeout_ms) {}

std::optional<Fingerprint> FingerprintSource::fetch(const std::string& session_id) {
    if (!dpi::is_valid_session_id(session_id)) return std::nullopt;
    const auto now = std::chrono::steady_clock::now();
    if (cache_ttl_.count() > 0) {
        std::lock_guard lock(mutex_);
        auto it = cache_.find(session_id);
        if (it != cache_.end() && now - it->second.fetched_at <= cache_ttl_) return it->second.fingerprint;
    }

    try {
        httplib::Client client(dpi_url_);
        client.set_connection_timeout(0, timeout_ms_ * 1000);
        client.set_read_timeout(0, timeout_ms_ * 1000);
        client.set_write_timeout(0, timeout_ms_ * 1000);
        auto res = client.Get("/getNetworks", httplib::Params{{"session", session_id}}, httplib::Headers{});
        if (!res || res->status != 200) return std::nullopt;
        Fingerprint fp = fingerprint_from_json(res->body, 0);
        if (cache_ttl_.count() > 0) {
            std::lock_guard lock(mutex_);
            std::erase_if(cache_, [&](const auto& e) { return now - e.second.fetched_at > cache_ttl_; });
            cache_.insert_or_assign(session_id, Entry{now, fp});
        }
        return fp;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

ProxyServer::ProxyServer(ProxyConfig config)
    : config_(std::move(config)), source_(config_.dpi_url, config_.cache_ttl_ms, config_.dpi_timeout_ms) {}

ProxyServer::~ProxyServer() { stop(); }

int ProxyServer::start() {
    listener_ = net::listen_tcp(config_.listen_host, config_.listen_port);
    const int port = net::local_port(listener_);
    stopping_ = false;
    acceptor_ = std::thread([this] { accept_loop(); });
    return port;
}

void ProxyServer::stop() {
    stopping_ = true;
    if (acceptor_.joinable()) acceptor_.join();
    std::unique_lock lock(active_mutex_);
    active_cv_.wait(lock, [this] { return active_ == 0; });
    listener_.close();
}

void ProxyServer::accept_loop() {
    while (!stopping_) {
        auto client = net::accept_for(listener_, std::chrono::milliseconds(100));
        if (!client) continue;
        {
            std::lock_guard lock(active_mutex_);
            ++active_;
        }
        std::thread([this, c = std::move(*client)]() mutable {
            handle(std::move(c));
            std::lock_guard lock(active_mutex_);
            --active_;
            active_cv_.notify_all();
        }).detach();
    }
}

void ProxyServer::handle(net::Socket client) {
    const auto timeout = std::chrono::milliseconds(config_.upstream_timeout_ms);
    client.set_timeout(timeout);
    try {
        Reader reader(client);
        RequestHead head;
        std::string body;
        try {
            head = parse_request_head(reader.read_head());
            if (iequals(head.method, "CONNECT") ||
                (head.target.size() > 8 && iequals(std::string_view(head.target).substr(0, 8), "https://"))) {
                client.send_all(status_response(501, "Not Implemented", "HTTPS tunnelling is not supported\n"));
                return;
            }
            const HeaderField* te = head.find("Transfer-Encoding");
            const HeaderField* cl = head.find("Content-Length");
            if (te && lower(te->value).find("chunked") != std::string::npos) {
                body = reader.take_chunked();
            } else if (cl) {
                std::size_t length = 0;
                auto [ptr, ec] = std::from_chars(cl->value.data(), cl->value.data() + cl->value.size(), length);
                if (ec != std::errc{} || ptr != cl->value.data() + cl->value.size())
                    throw BadRequest("bad Content-Length");
                if (length > kMaxBodyBytes) throw BadRequest("body too large");
                body = reader.take(length);
            }
        } catch (const BadRequest& e) {
            client.send_all(status_response(400, "Bad Request", std::string(e.what()) + "\n"));
            return;
        }

        Upstream upstream;
        try {
            upstream = resolve_upstream(head);
        } catch (const BadRequest& e) {
            client.send_all(status_response(400, "Bad Request", std::string(e.what()) + "\n"));
            return;
        }

        std::optional<std::string> enrichment;
        if (const HeaderField* session = head.find(kSessionHeader)) {
            if (auto fp = source_.fetch(session->value); fp && !fp->empty())
                enrichment = encode_fingerprint_header(*fp);
        }

        net::Socket up;
        try {
            up = net::connect_tcp(upstream.host, upstream.port, timeout);
            up.send_all(build_forward_head(head, upstream, enrichment));
            up.send_all(body);
        } catch (const net::SocketError& e) {
            client.send_all(status_response(502, "Bad Gateway",
                                            "upstream unreachable: " + upstream.host + ":" +
                                                std::to_string(upstream.port) + ": " + e.what() + "\n"));
            return;
        }

        std::string chunk;
        std::size_t relayed = 0;
        try {
            while (true) {
                chunk.clear();
                if (up.recv_some(chunk) == 0) break;
                client.send_all(chunk);
                relayed += chunk.size();
            }
        } catch (const net::SocketError& e) {
            if (relayed == 0) {
                client.send_all(status_response(502, "Bad Gateway",
                                                std::string("upstream failed before responding: ") + e.what() + "\n"));
                return;
            }
        }
        if (relayed == 0)
            client.send_all(status_response(502, "Bad Gateway", "upstream closed without a response\n"));
    } catch (const net::SocketError&) {
        // Client went away; nothing left to report to.
    }
}

}  // namespace spotex::proxy
