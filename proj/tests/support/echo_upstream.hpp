#pragma once

// Minimal origin server for proxy tests: records the exact bytes of each
// request and answers 200 with those bytes as the body.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "spotex/socket.hpp"

namespace spotex::testing {

class EchoUpstream {
public:
    EchoUpstream() : listener_(net::listen_tcp("127.0.0.1", 0)), port_(net::local_port(listener_)) {
        thread_ = std::thread([this] { run(); });
    }

    ~EchoUpstream() {
        stop_ = true;
        thread_.join();
    }

    int port() const { return port_; }

    std::vector<std::string> requests() const {
        std::lock_guard lock(mutex_);
        return requests_;
    }

    std::string last_request() const {
        std::lock_guard lock(mutex_);
        return requests_.empty() ? std::string() : requests_.back();
    }

private:
    static std::size_t find_ci(const std::string& haystack, const std::string& needle) {
        auto lower = [](std::string s) {
            for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            return s;
        };
        return lower(haystack).find(lower(needle));
    }

    // Head plus body (Content-Length, or chunked up to the final empty chunk).
    static bool complete(const std::string& data) {
        const auto head_end = data.find("\r\n\r\n");
        if (head_end == std::string::npos) return false;
        const std::string head = data.substr(0, head_end + 4);
        const std::string body = data.substr(head_end + 4);
        if (find_ci(head, "\r\ntransfer-encoding: chunked") != std::string::npos)
            return body.find("0\r\n\r\n") != std::string::npos;
        const auto cl = find_ci(head, "\r\ncontent-length:");
        if (cl == std::string::npos) return true;
        const auto value_start = cl + std::string("\r\ncontent-length:").size();
        const std::size_t length = std::stoul(head.substr(value_start, head.find("\r\n", value_start) - value_start));
        return body.size() >= length;
    }

    void run() {
        while (!stop_) {
            auto client = net::accept_for(listener_, std::chrono::milliseconds(50));
            if (!client) continue;
            client->set_timeout(std::chrono::milliseconds(5000));
            std::string data;
            try {
                while (!complete(data)) {
                    if (client->recv_some(data) == 0) break;
                }
                {
                    std::lock_guard lock(mutex_);
                    requests_.push_back(data);
                }
                client->send_all("HTTP/1.1 200 OK\r\nContent-Type: application/octet-stream\r\nContent-Length: " +
                                 std::to_string(data.size()) + "\r\nConnection: close\r\n\r\n" + data);
            } catch (const net::SocketError&) {
            }
        }
    }

    net::Socket listener_;
    int port_;
    std::atomic<bool> stop_{false};
    std::thread thread_;
    mutable std::mutex mutex_;
    std::vector<std::string> requests_;
};

/// Sends raw bytes to host:port and returns everything read until EOF.
inline std::string raw_exchange(int port, const std::string& request) {
    auto s = net::connect_tcp("127.0.0.1", port, std::chrono::milliseconds(5000));
    s.send_all(request);
    std::string out;
    while (s.recv_some(out) > 0) {
    }
    return out;
}

/// Body of a raw HTTP response (everything after the blank line).
inline std::string response_body(const std::string& response) {
    const auto pos = response.find("\r\n\r\n");
    return pos == std::string::npos ? std::string() : response.substr(pos + 4);
}

inline int response_status(const std::string& response) {
    if (response.size() < 12) return -1;
    return std::stoi(response.substr(9, 3));
}

/// Removes header lines whose names are hop-by-hop or listed in Connection.
inline std::string strip_hop_by_hop(const std::string& request) {
    const auto head_end = request.find("\r\n\r\n");
    const std::string head = request.substr(0, head_end + 2);
    const std::string rest = request.substr(head_end + 2);
    std::vector<std::string> lines;
    for (std::size_t pos = 0; pos < head.size();) {
        const auto eol = head.find("\r\n", pos);
        lines.push_back(head.substr(pos, eol - pos));
        pos = eol + 2;
    }
    auto lower = [](std::string s) {
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
        return s;
    };
    std::vector<std::string> listed = {"connection", "proxy-connection", "keep-alive", "proxy-authenticate",
                                       "proxy-authorization", "te", "trailer", "upgrade"};
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto name = lower(lines[i].substr(0, lines[i].find(':')));
        if (name == "connection") {
            std::string v = lower(lines[i].substr(lines[i].find(':') + 1));
            for (std::size_t p = 0; p <= v.size();) {
                auto comma = v.find(',', p);
                if (comma == std::string::npos) comma = v.size();
                std::string tok = v.substr(p, comma - p);
                tok.erase(0, tok.find_first_not_of(" \t"));
                tok.erase(tok.find_last_not_of(" \t") + 1);
                listed.push_back(tok);
                p = comma + 1;
            }
        }
    }
    std::string out = lines[0] + "\r\n";
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto name = lower(lines[i].substr(0, lines[i].find(':')));
        if (std::find(listed.begin(), listed.end(), name) == listed.end()) out += lines[i] + "\r\n";
    }
    return out + rest;
}

/// First value of a header in a raw request head.
inline std::optional<std::string> header_value(const std::string& request, const std::string& name) {
    const auto pos = request.find("\r\n" + name + ": ");
    if (pos == std::string::npos || pos > request.find("\r\n\r\n")) return std::nullopt;
    const auto start = pos + 2 + name.size() + 2;
    return request.substr(start, request.find("\r\n", start) - start);
}

}  // namespace spotex::testing
