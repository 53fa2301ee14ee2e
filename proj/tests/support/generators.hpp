#pragma once

// Seeded random generators for property tests.

#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "spotex/fingerprint.hpp"
#include "spotex/rules.hpp"

namespace spotex::testing {

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    bool coin() { return uniform(0, 1) == 1; }
    std::mt19937_64& engine() { return rng_; }

    /// Text mixing ASCII, quoting characters and multi-byte UTF-8, capped
    /// at max_bytes.
    std::string text(std::size_t max_bytes, bool allow_control = false) {
        static const std::vector<std::string> pieces = {
            "a", "Z", "0", "9", " ", "\"", "\\", "#", "(", ")", ":", "-", "_", "<", ">", "Café", "é", "☕", "AP"};
        std::string out;
        const int n = uniform(0, 10);
        for (int i = 0; i < n; ++i) {
            std::string piece = pieces[static_cast<std::size_t>(uniform(0, static_cast<int>(pieces.size()) - 1))];
            if (allow_control && uniform(0, 9) == 0) piece = coin() ? "\n" : "\t";
            if (out.size() + piece.size() > max_bytes) break;
            out += piece;
        }
        return out;
    }

    std::string mac() {
        char buf[18];
        std::snprintf(buf, sizeof buf, "%02X:%02X:%02X:%02X:%02X:%02X", uniform(0, 255), uniform(0, 255),
                      uniform(0, 255), uniform(0, 255), uniform(0, 255), uniform(0, 255));
        return buf;
    }

    NetworkSelector selector() {
        if (uniform(0, 3) == 0) return NetworkSelector::mac(mac());
        return NetworkSelector::ssid(text(kMaxSsidBytes));
    }

    rules::PredicatePtr predicate(int depth) {
        const int choice = depth <= 1 ? uniform(0, 2) : uniform(0, 5);
        switch (choice) {
            case 0: return rules::visible(selector());
            case 1:
                return rules::rssi_compare(selector(), static_cast<rules::CmpOp>(uniform(0, 3)), uniform(-120, 0));
            case 2: return rules::time_in(uniform(0, 1439), uniform(0, 1439));
            case 3: return rules::negate(predicate(depth - 1));
            case 4: return rules::all_of(predicate(depth - 1), predicate(depth - 1));
            default: return rules::any_of(predicate(depth - 1), predicate(depth - 1));
        }
    }

    /// HTML that never contains the heredoc terminator.
    std::string html() {
        static const std::vector<std::string> pieces = {"<b>", "</b>", "text", " ", "\n", "#", "\"", "<<",
                                                        ">",   "Café", "&amp;", "<a href=\"x\">", "</a>"};
        std::string out;
        const int n = uniform(0, 8);
        for (int i = 0; i < n; ++i) {
            std::string candidate = out + pieces[static_cast<std::size_t>(uniform(0, static_cast<int>(pieces.size()) - 1))];
            if (candidate.find(">>>") == std::string::npos) out = std::move(candidate);
        }
        return out;
    }

    rules::RuleSet ruleset() {
        rules::RuleSet rs;
        const int snippet_count = uniform(0, 4);
        std::vector<std::string> ids;
        for (int i = 0; i < snippet_count; ++i) {
            rules::Snippet s{"snip_" + std::to_string(i) + (coin() ? "x" : ""), text(40, true), html()};
            if (rs.snippets.emplace(s.id, s).second) ids.push_back(s.id);
        }
        if (ids.empty()) return rs;
        const int rule_count = uniform(0, 6);
        for (int i = 0; i < rule_count; ++i) {
            rules::Rule r;
            r.id = (coin() ? "r" : "RULE_") + std::to_string(i);
            r.priority = uniform(-5, 10);
            r.condition = predicate(uniform(1, 6));
            r.snippet_id = ids[static_cast<std::size_t>(uniform(0, static_cast<int>(ids.size()) - 1))];
            rs.rules.push_back(std::move(r));
        }
        return rs;
    }

    NetworkObservation observation() {
        const auto kind = coin() ? NetworkKind::Wifi : NetworkKind::Bluetooth;
        const Timestamp ts = std::uniform_int_distribution<Timestamp>(0, Timestamp{1} << 45)(rng_);
        return NetworkObservation(NetworkId(text(kMaxSsidBytes), mac()), kind, uniform(-120, 0), ts);
    }

    Fingerprint fingerprint(int max_size) {
        Fingerprint fp;
        const int n = uniform(0, max_size);
        for (int i = 0; i < n; ++i) fp = merge_observation(std::move(fp), observation());
        return fp;
    }

private:
    std::mt19937_64 rng_;
};

}  // namespace spotex::testing
