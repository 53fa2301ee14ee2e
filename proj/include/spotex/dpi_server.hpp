#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>

#include "spotex/fingerprint.hpp"
#include "spotex/render.hpp"
#include "spotex/rules.hpp"
#include "spotex/venue.hpp"

namespace httplib {
class Server;
}

namespace spotex::dpi {

enum class Mode { Sim, Push };

struct ServerConfig {
    int port = 8080;
    Mode mode = Mode::Push;
    std::string rules_path;                 // empty: PUT /rules is not persisted
    std::optional<std::string> venue_path;  // required in SIM mode
    Timestamp session_ttl_ms = kDefaultSessionTtlMs;
    int timezone_offset_minutes = 0;
    std::uint64_t seed = 0;
    std::optional<std::string> shim_path;   // served as /spotex-shim.js
};

using Clock = std::function<Timestamp()>;

Timestamp system_clock_ms();

/// Minutes past local midnight for an epoch timestamp.
rules::MinuteOfDay minute_of_day(Timestamp now, int timezone_offset_minutes);

/// At least 16 characters of [A-Za-z0-9_-], at most 128.
bool is_valid_session_id(std::string_view id) noexcept;

/// JSONP callbacks must be plain JavaScript identifiers.
bool is_valid_callback(std::string_view name) noexcept;

/// {"fired":[...],"snippets":[{"id","title","html"}]}
std::string evaluation_json(const rules::FiredResult& result);

struct HttpResult {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

struct Session {
    std::string id;
    Fingerprint fingerprint;
    std::optional<sim::DevicePoint> sim_position;
    Timestamp last_seen = 0;
};

/// Per-session state behind one lock per session; the table lock is held
/// only for lookup and insertion.
class SessionStore {
public:
    /// Runs fn on the session under its own lock, creating it if needed.
    template <class Fn>
    auto update(const std::string& id, Fn&& fn) {
        auto slot = get_or_create(id);
        std::lock_guard lock(slot->mutex);
        return fn(slot->session);
    }

    /// Runs fn on the session if it exists; returns false otherwise.
    template <class Fn>
    bool with_existing(const std::string& id, Fn&& fn) {
        auto slot = find(id);
        if (!slot) return false;
        std::lock_guard lock(slot->mutex);
        fn(slot->session);
        return true;
    }

    /// Drops sessions not seen for longer than idle_ms.
    std::size_t evict_idle(Timestamp now, Timestamp idle_ms);
    std::size_t size() const;

private:
    struct Slot {
        std::mutex mutex;
        Session session;
    };

    std::shared_ptr<Slot> find(const std::string& id) const;
    std::shared_ptr<Slot> get_or_create(const std::string& id);

    mutable std::mutex table_mutex_;
    std::unordered_map<std::string, std::shared_ptr<Slot>> slots_;
};

/// The request handlers, independent of any socket layer.
class DpiService {
public:
    /// Throws rules::ParseError / rules::ValidationError for bad rules text,
    /// std::invalid_argument when SIM mode has no venue.
    DpiService(ServerConfig config, std::string rules_text, std::optional<sim::Venue> venue,
               Clock clock = system_clock_ms);

    /// Reads rules_path and venue_path from disk.
    static std::unique_ptr<DpiService> from_config(const ServerConfig& config, Clock clock = system_clock_ms);

    HttpResult get_networks(std::string_view session_id, const std::optional<std::string>& callback);
    HttpResult post_fingerprint(std::string_view session_id, std::string_view body);
    HttpResult sim_move(std::string_view session_id, std::string_view body);
    HttpResult evaluate(std::string_view session_id, const std::optional<std::string>& now_override);
    HttpResult page(rules::RenderMode mode, std::string_view session_id);
    HttpResult rules_get() const;
    HttpResult rules_put(std::string_view body);
    HttpResult venue_get() const;
    HttpResult shim_get() const;

    const ServerConfig& config() const noexcept { return config_; }

    /// Current session fingerprint after TTL pruning (and, in SIM mode, a
    /// fresh scan at the session's position). Empty for unknown sessions.
    Fingerprint current_fingerprint(std::string_view session_id);

private:
    struct LiveRules {
        std::string text;
        rules::RuleSet set;
    };

    std::shared_ptr<const LiveRules> rules_snapshot() const;
    void maybe_evict(Timestamp now);

    ServerConfig config_;
    std::optional<sim::Venue> venue_;
    Clock clock_;
    SessionStore sessions_;

    mutable std::mutex rules_mutex_;
    std::shared_ptr<const LiveRules> rules_;
    std::mutex put_mutex_;  // serializes persist-then-swap

    std::mutex evict_mutex_;
    Timestamp last_eviction_ = 0;
};

/// HTTP binding of DpiService on cpp-httplib.
class DpiServer {
public:
    explicit DpiServer(DpiService& service);
    ~DpiServer();

    DpiServer(const DpiServer&) = delete;
    DpiServer& operator=(const DpiServer&) = delete;

    /// Binds (port 0 picks a free one) and starts serving on a background
    /// thread. Returns the bound port.
    int start(const std::string& host, int port);
    void stop();

private:
    DpiService& service_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

}  // namespace spotex::dpi
