// spotex: DPI server, proxy, and offline rule tooling.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "spotex/dpi_server.hpp"
#include "spotex/lint.hpp"
#include "spotex/proxy.hpp"
#include "spotex/rules.hpp"
#include "spotex/venue.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int default_port() {
    if (const char* env = std::getenv("SPOTEX_PORT")) {
        try {
            return std::stoi(env);
        } catch (const std::exception&) {
            std::cerr << "warning: ignoring non-numeric SPOTEX_PORT\n";
        }
    }
    return 8080;
}

// Blocks SIGINT/SIGTERM in every thread, then waits for one of them.
sigset_t block_termination_signals() {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    return set;
}

void wait_for_termination(const sigset_t& set) {
    int sig = 0;
    sigwait(&set, &sig);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Network-proximity content server and tools"};
    app.require_subcommand(1);

    // serve
    auto* serve = app.add_subcommand("serve", "Run the DPI web server");
    std::string rules_path, venue_path, mode_text, host = "127.0.0.1", shim_path;
    int port = default_port();
    std::uint64_t seed = 0;
    spotex::Timestamp ttl_ms = spotex::kDefaultSessionTtlMs;
    int tz_offset = 0;
    serve->add_option("--rules", rules_path, "Rule file (.spotex); created on first PUT /rules")->required();
    serve->add_option("--venue", venue_path, "Venue JSON (required for --mode sim)");
    serve->add_option("--port", port, "Listen port (default $SPOTEX_PORT or 8080)");
    serve->add_option("--host", host, "Listen address")->capture_default_str();
    serve->add_option("--mode", mode_text, "sim or push (default: sim when --venue is given)")
        ->check(CLI::IsMember({"sim", "push"}));
    serve->add_option("--seed", seed, "Simulator noise seed")->capture_default_str();
    serve->add_option("--session-ttl-ms", ttl_ms, "Observation lifetime")->capture_default_str();
    serve->add_option("--tz-offset", tz_offset, "Minutes east of UTC for time-of-day rules")->capture_default_str();
    serve->add_option("--shim", shim_path, "Browser shim script served as /spotex-shim.js");

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate rules against a fingerprint file");
    std::string fingerprint_path, now_text;
    eval->add_option("--rules", rules_path)->required();
    eval->add_option("--fingerprint", fingerprint_path, "Fingerprint JSON array")->required();
    eval->add_option("--now", now_text, "Time of day HH:MM (default: current time)");
    eval->add_option("--tz-offset", tz_offset, "Minutes east of UTC")->capture_default_str();

    // lint
    auto* lint = app.add_subcommand("lint", "Report unreachable rules, orphan snippets, unknown selectors");
    lint->add_option("--rules", rules_path)->required();
    lint->add_option("--venue", venue_path);

    // walk
    auto* walk = app.add_subcommand("walk", "Replay a device path through the simulator");
    std::string path_file;
    walk->add_option("--rules", rules_path)->required();
    walk->add_option("--venue", venue_path)->required();
    walk->add_option("--path", path_file, "JSON array of {x, y, floor, t}")->required();
    walk->add_option("--seed", seed)->capture_default_str();
    walk->add_option("--tz-offset", tz_offset, "Minutes east of UTC")->capture_default_str();

    // proxy
    auto* proxy = app.add_subcommand("proxy", "Run the fingerprint-enriching HTTP proxy");
    spotex::proxy::ProxyConfig proxy_config;
    proxy->add_option("--listen", proxy_config.listen_port, "Listen port")->capture_default_str();
    proxy->add_option("--host", proxy_config.listen_host, "Listen address")->capture_default_str();
    proxy->add_option("--dpi", proxy_config.dpi_url, "DPI server base URL")->capture_default_str();
    proxy->add_option("--cache-ttl-ms", proxy_config.cache_ttl_ms, "Session fingerprint cache lifetime (0 = off)")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*serve) {
            spotex::dpi::ServerConfig config;
            config.port = port;
            config.rules_path = rules_path;
            if (!venue_path.empty()) config.venue_path = venue_path;
            if (!shim_path.empty()) config.shim_path = shim_path;
            if (mode_text.empty()) mode_text = venue_path.empty() ? "push" : "sim";
            config.mode = mode_text == "sim" ? spotex::dpi::Mode::Sim : spotex::dpi::Mode::Push;
            config.seed = seed;
            config.session_ttl_ms = ttl_ms;
            config.timezone_offset_minutes = tz_offset;

            const auto signals = block_termination_signals();
            auto service = spotex::dpi::DpiService::from_config(config);
            spotex::dpi::DpiServer server(*service);
            const int bound = server.start(host, port);
            std::cerr << "spotex: serving on http://" << host << ":" << bound << " (" << mode_text << " mode)\n";
            wait_for_termination(signals);
            server.stop();
            return 0;
        }

        if (*eval) {
            const auto rs = spotex::rules::parse_ruleset(read_file(rules_path));
            const auto now = spotex::dpi::system_clock_ms();
            const auto fp = spotex::fingerprint_from_json(read_file(fingerprint_path), now);
            spotex::rules::MinuteOfDay minute = spotex::dpi::minute_of_day(now, tz_offset);
            if (!now_text.empty()) {
                auto parsed = spotex::rules::parse_clock(now_text);
                if (!parsed) throw std::invalid_argument("--now must be HH:MM");
                minute = *parsed;
            }
            std::cout << spotex::dpi::evaluation_json(spotex::rules::fire_rules(rs, fp, minute)) << "\n";
            return 0;
        }

        if (*lint) {
            const auto rs = spotex::rules::parse_ruleset(read_file(rules_path));
            std::optional<spotex::sim::Venue> venue;
            if (!venue_path.empty()) venue = spotex::sim::load_venue(read_file(venue_path));
            for (const auto& d : spotex::rules::lint_ruleset(rs, venue ? &*venue : nullptr))
                std::cout << spotex::rules::to_json_line(d) << "\n";
            return 0;
        }

        if (*walk) {
            const auto rs = spotex::rules::parse_ruleset(read_file(rules_path));
            const auto venue = spotex::sim::load_venue(read_file(venue_path));
            const auto path = spotex::sim::load_path(read_file(path_file));
            const auto fingerprints = spotex::sim::walk(venue, path, seed);
            for (std::size_t i = 0; i < path.size(); ++i) {
                const auto minute = spotex::dpi::minute_of_day(path[i].t, tz_offset);
                const auto fired = spotex::rules::fire_rules(rs, fingerprints[i], minute);
                nlohmann::ordered_json line;
                line["step"] = i;
                line["t"] = path[i].t;
                line["fired"] = fired.fired_rule_ids;
                std::cout << line.dump() << "\n";
            }
            return 0;
        }

        if (*proxy) {
            const auto signals = block_termination_signals();
            spotex::proxy::ProxyServer server(proxy_config);
            const int bound = server.start();
            std::cerr << "spotex: proxy on " << proxy_config.listen_host << ":" << bound << " -> "
                      << proxy_config.dpi_url << "\n";
            wait_for_termination(signals);
            server.stop();
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
