#include "spotex/dpi_server.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace spotex::dpi {

namespace {

using nlohmann::ordered_json;

constexpr Timestamp kEvictionIntervalMs = 60'000;
constexpr Timestamp kMinIdleSessionMs = 3'600'000;

HttpResult json_result(int status, const ordered_json& body) {
    return {status, "application/json", body.dump()};
}

HttpResult error_result(int status, const std::string& message) {
    return json_result(status, ordered_json{{"error", message}});
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomically(const std::string& path, std::string_view content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("cannot write " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::optional<sim::DevicePoint> parse_point(std::string_view body, std::string& error) {
    nlohmann::json doc = nlohmann::json::parse(body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        error = "body must be a JSON object {x, y, floor}";
        return std::nullopt;
    }
    auto x = doc.find("x"), y = doc.find("y"), floor = doc.find("floor");
    if (x == doc.end() || !x->is_number() || y == doc.end() || !y->is_number()) {
        error = "x and y must be numbers";
        return std::nullopt;
    }
    if (floor == doc.end() || !floor->is_number_integer()) {
        error = "floor must be an integer";
        return std::nullopt;
    }
    sim::DevicePoint p{x->get<double>(), y->get<double>(), 0};
    const auto f = floor->get<std::int64_t>();
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || f < 0 || f > sim::kMaxFloor) {
        error = "point out of range";
        return std::nullopt;
    }
    p.floor = static_cast<int>(f);
    return p;
}

std::string page_document(const std::string& content, rules::RenderMode mode, std::string_view session_id) {
    std::string doc =
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>SpotEx</title>\n</head>\n<body>\n"
        "<main id=\"spotex-content\">\n";
    doc += content;
    doc += "</main>\n";
    if (mode == rules::RenderMode::Annotated) {
        doc += "<script src=\"/spotex-shim.js\" data-session=\"" +
               rules::escape_html_attribute(session_id) + "\"></script>\n";
    }
    doc += "</body>\n</html>\n";
    return doc;
}

}  // namespace

Timestamp system_clock_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

rules::MinuteOfDay minute_of_day(Timestamp now, int timezone_offset_minutes) {
    const std::int64_t minutes = now / 60'000 - (now % 60'000 < 0 ? 1 : 0) + timezone_offset_minutes;
    const std::int64_t m = minutes % rules::kMinutesPerDay;
    return static_cast<rules::MinuteOfDay>(m < 0 ? m + rules::kMinutesPerDay : m);
}

std::string evaluation_json(const rules::FiredResult& result) {
    ordered_json body;
    body["fired"] = result.fired_rule_ids;
    body["snippets"] = ordered_json::array();
    for (const auto& s : result.snippets)
        body["snippets"].push_back({{"id", s.id}, {"title", s.title}, {"html", s.html}});
    return body.dump();
}

bool is_valid_session_id(std::string_view id) noexcept {
    if (id.size() < 16 || id.size() > 128) return false;
    for (char c : id) {
        const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
                        c == '_' || c == '-';
        if (!ok) return false;
    }
    return true;
}

bool is_valid_callback(std::string_view name) noexcept {
    if (name.empty()) return false;
    auto head = [](char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_' || c == '$'; };
    if (!head(name.front())) return false;
    for (char c : name.substr(1)) {
        if (!head(c) && !(c >= '0' && c <= '9')) return false;
    }
    return true;
}

std::shared_ptr<SessionStore::Slot> SessionStore::find(const std::string& id) const {
    std::lock_guard lock(table_mutex_);
    auto it = slots_.find(id);
    return it == slots_.end() ? nullptr : it->second;
}

std::shared_ptr<SessionStore::Slot> SessionStore::get_or_create(const std::string& id) {
    std::lock_guard lock(table_mutex_);
    auto& slot = slots_[id];
    if (!slot) {
        slot = std::make_shared<Slot>();
        slot->session.id = id;
    }
    return slot;
}

std::size_t SessionStore::evict_idle(Timestamp now, Timestamp idle_ms) {
    std::lock_guard lock(table_mutex_);
    return std::erase_if(slots_, [&](const auto& entry) {
        std::lock_guard session_lock(entry.second->mutex);
        return now - entry.second->session.last_seen > idle_ms;
    });
}

std::size_t SessionStore::size() const {
    std::lock_guard lock(table_mutex_);
    return slots_.size();
}

DpiService::DpiService(ServerConfig config, std::string rules_text, std::optional<sim::Venue> venue, Clock clock)
    : config_(std::move(config)), venue_(std::move(venue)), clock_(std::move(clock)) {
    if (config_.mode == Mode::Sim && !venue_) throw std::invalid_argument("SIM mode requires a venue");
    if (config_.session_ttl_ms <= 0) throw std::invalid_argument("session TTL must be positive");
    auto set = rules::parse_ruleset(rules_text);
    rules_ = std::make_shared<const LiveRules>(LiveRules{std::move(rules_text), std::move(set)});
}

std::unique_ptr<DpiService> DpiService::from_config(const ServerConfig& config, Clock clock) {
    std::string rules_text;
    if (!config.rules_path.empty() && std::filesystem::exists(config.rules_path))
        rules_text = read_file(config.rules_path);
    std::optional<sim::Venue> venue;
    if (config.venue_path) venue = sim::load_venue(read_file(*config.venue_path));
    return std::make_unique<DpiService>(config, std::move(rules_text), std::move(venue), std::move(clock));
}

std::shared_ptr<const DpiService::LiveRules> DpiService::rules_snapshot() const {
    std::lock_guard lock(rules_mutex_);
    return rules_;
}

void DpiService::maybe_evict(Timestamp now) {
    {
        std::lock_guard lock(evict_mutex_);
        if (now - last_eviction_ < kEvictionIntervalMs) return;
        last_eviction_ = now;
    }
    sessions_.evict_idle(now, std::max(config_.session_ttl_ms, kMinIdleSessionMs));
}

Fingerprint DpiService::current_fingerprint(std::string_view session_id) {
    if (!is_valid_session_id(session_id)) return {};
    const Timestamp now = clock_();
    maybe_evict(now);
    Fingerprint out;
    sessions_.with_existing(std::string(session_id), [&](Session& s) {
        if (config_.mode == Mode::Sim && s.sim_position) {
            for (const auto& [key, obs] : sim::scan(*venue_, *s.sim_position, now, config_.seed))
                s.fingerprint = merge_observation(std::move(s.fingerprint), obs);
        }
        s.fingerprint = prune_stale(s.fingerprint, now, config_.session_ttl_ms);
        s.last_seen = now;
        out = s.fingerprint;
    });
    return out;
}

HttpResult DpiService::get_networks(std::string_view session_id, const std::optional<std::string>& callback) {
    if (callback && !is_valid_callback(*callback))
        return {400, "text/plain", "invalid callback name"};
    const std::string json = to_canonical_json(current_fingerprint(session_id));
    if (!callback) return {200, "application/json", json};
    return {200, "application/javascript", *callback + "(" + json + ");"};
}

HttpResult DpiService::post_fingerprint(std::string_view session_id, std::string_view body) {
    if (config_.mode == Mode::Sim) return error_result(409, "fingerprints are simulated in SIM mode");
    if (!is_valid_session_id(session_id)) return error_result(400, "missing or invalid session id");

    const Timestamp now = clock_();
    std::vector<NetworkObservation> observations;
    try {
        observations = observations_from_json(body, now);
    } catch (const std::invalid_argument& e) {
        return error_result(400, e.what());
    }
    sessions_.update(std::string(session_id), [&](Session& s) {
        for (const auto& obs : observations) s.fingerprint = merge_observation(std::move(s.fingerprint), obs);
        s.fingerprint = prune_stale(s.fingerprint, now, config_.session_ttl_ms);
        s.last_seen = now;
    });
    return json_result(200, ordered_json{{"merged", observations.size()}});
}

HttpResult DpiService::sim_move(std::string_view session_id, std::string_view body) {
    if (config_.mode == Mode::Push) return error_result(409, "device moves need SIM mode");
    if (!is_valid_session_id(session_id)) return error_result(400, "missing or invalid session id");

    std::string error;
    auto point = parse_point(body, error);
    if (!point) return error_result(400, error);

    const Timestamp now = clock_();
    Fingerprint fp = sim::scan(*venue_, *point, now, config_.seed);
    sessions_.update(std::string(session_id), [&](Session& s) {
        s.sim_position = *point;
        s.fingerprint = fp;
        s.last_seen = now;
    });
    return {200, "application/json", to_canonical_json(fp)};
}

HttpResult DpiService::evaluate(std::string_view session_id, const std::optional<std::string>& now_override) {
    std::optional<rules::MinuteOfDay> minute;
    if (now_override) {
        minute = rules::parse_clock(*now_override);
        if (!minute) return error_result(400, "now must be HH:MM");
    }
    const Fingerprint fp = current_fingerprint(session_id);
    if (!minute) minute = minute_of_day(clock_(), config_.timezone_offset_minutes);

    const auto live = rules_snapshot();
    return {200, "application/json", evaluation_json(rules::fire_rules(live->set, fp, *minute))};
}

HttpResult DpiService::page(rules::RenderMode mode, std::string_view session_id) {
    const Fingerprint fp = current_fingerprint(session_id);
    const auto minute = minute_of_day(clock_(), config_.timezone_offset_minutes);
    const auto live = rules_snapshot();
    const auto result = rules::fire_rules(live->set, fp, minute);
    return {200, "text/html; charset=utf-8",
            page_document(rules::render_page(live->set, result, mode), mode, session_id)};
}

HttpResult DpiService::rules_get() const {
    return {200, "text/plain; charset=utf-8", rules_snapshot()->text};
}

HttpResult DpiService::rules_put(std::string_view body) {
    rules::RuleSet set;
    try {
        set = rules::parse_ruleset(body);
    } catch (const rules::ParseError& e) {
        return json_result(422, ordered_json{{"error", "parse"},
                                             {"line", e.line()},
                                             {"column", e.column()},
                                             {"message", e.detail()}});
    } catch (const rules::ValidationError& e) {
        return json_result(422, ordered_json{{"error", "validation"}, {"message", e.what()}});
    }

    const std::size_t rule_count = set.rules.size();
    const std::size_t snippet_count = set.snippets.size();
    auto next = std::make_shared<const LiveRules>(LiveRules{std::string(body), std::move(set)});

    std::lock_guard put_lock(put_mutex_);
    if (!config_.rules_path.empty()) {
        try {
            write_file_atomically(config_.rules_path, body);
        } catch (const std::exception& e) {
            return error_result(500, std::string("rules not persisted: ") + e.what());
        }
    }
    {
        std::lock_guard lock(rules_mutex_);
        rules_ = std::move(next);
    }
    return json_result(200, ordered_json{{"rules", rule_count}, {"snippets", snippet_count}});
}

HttpResult DpiService::venue_get() const {
    if (!venue_) return error_result(404, "no venue loaded");
    return {200, "application/json", sim::venue_to_json(*venue_)};
}

HttpResult DpiService::shim_get() const {
    if (!config_.shim_path) return {404, "text/plain", "shim not configured"};
    try {
        return {200, "application/javascript", read_file(*config_.shim_path)};
    } catch (const std::exception& e) {
        return {404, "text/plain", e.what()};
    }
}

namespace {

std::string session_of(const httplib::Request& req) {
    if (req.has_param("session")) return req.get_param_value("session");
    return req.get_header_value("X-Spotex-Session");
}

std::optional<std::string> optional_param(const httplib::Request& req, const char* name) {
    if (!req.has_param(name)) return std::nullopt;
    return req.get_param_value(name);
}

void reply(httplib::Response& res, const HttpResult& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
}

}  // namespace

DpiServer::DpiServer(DpiService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
    auto& svr = *server_;
    svr.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    svr.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type, X-Spotex-Session");
        res.status = 204;
    });
    svr.Get("/getNetworks", [this](const httplib::Request& req, httplib::Response& res) {
        reply(res, service_.get_networks(session_of(req), optional_param(req, "callback")));
    });
    svr.Post("/fingerprint", [this](const httplib::Request& req, httplib::Response& res) {
        reply(res, service_.post_fingerprint(session_of(req), req.body));
    });
    svr.Post("/sim/move", [this](const httplib::Request& req, httplib::Response& res) {
        reply(res, service_.sim_move(session_of(req), req.body));
    });
    svr.Get("/evaluate", [this](const httplib::Request& req, httplib::Response& res) {
        reply(res, service_.evaluate(session_of(req), optional_param(req, "now")));
    });
    svr.Get("/page", [this](const httplib::Request& req, httplib::Response& res) {
        const auto mode = req.get_param_value("mode");
        if (!mode.empty() && mode != "filtered" && mode != "annotated") {
            reply(res, error_result(400, "mode must be filtered or annotated"));
            return;
        }
        reply(res, service_.page(mode == "annotated" ? rules::RenderMode::Annotated : rules::RenderMode::Filtered,
                                 session_of(req)));
    });
    svr.Get("/rules", [this](const httplib::Request&, httplib::Response& res) { reply(res, service_.rules_get()); });
    svr.Put("/rules", [this](const httplib::Request& req, httplib::Response& res) {
        reply(res, service_.rules_put(req.body));
    });
    svr.Get("/venue", [this](const httplib::Request&, httplib::Response& res) { reply(res, service_.venue_get()); });
    svr.Get("/spotex-shim.js",
            [this](const httplib::Request&, httplib::Response& res) { reply(res, service_.shim_get()); });
}

DpiServer::~DpiServer() { stop(); }

int DpiServer::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = server_->bind_to_any_port(host);
        if (bound < 0) throw std::runtime_error("cannot bind " + host);
    } else if (!server_->bind_to_port(host, port)) {
        throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    }
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

void DpiServer::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace spotex::dpi
