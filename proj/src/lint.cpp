#include "spotex/lint.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include <nlohmann/json.hpp>

namespace spotex::rules {

namespace {

// Bound on fingerprints x minutes enumerated per rule.
constexpr std::uint64_t kMaxLintCases = std::uint64_t{1} << 22;

struct Atoms {
    std::vector<NetworkSelector> selectors;
    std::vector<std::set<int>> thresholds;  // RSSI breakpoints per selector
    std::set<MinuteOfDay> minutes{0};
};

std::size_t selector_index(Atoms& atoms, const NetworkSelector& sel) {
    auto it = std::find(atoms.selectors.begin(), atoms.selectors.end(), sel);
    if (it != atoms.selectors.end()) return static_cast<std::size_t>(it - atoms.selectors.begin());
    atoms.selectors.push_back(sel);
    atoms.thresholds.emplace_back();
    return atoms.selectors.size() - 1;
}

void collect(const Predicate& p, Atoms& atoms) {
    const auto& node = p.node();
    if (const auto* v = std::get_if<Visible>(&node)) {
        selector_index(atoms, v->selector);
    } else if (const auto* r = std::get_if<RssiCompare>(&node)) {
        auto& points = atoms.thresholds[selector_index(atoms, r->selector)];
        // Each comparison flips at t or t+1; both ends of every flip are
        // representative values.
        for (int v : {r->threshold_dbm, r->threshold_dbm + 1}) {
            if (v >= kMinRssiDbm && v <= kMaxRssiDbm) points.insert(v);
        }
    } else if (const auto* t = std::get_if<TimeIn>(&node)) {
        atoms.minutes.insert(t->start);
        atoms.minutes.insert(t->end);
    } else if (const auto* n = std::get_if<Not>(&node)) {
        collect(*n->operand, atoms);
    } else if (const auto* a = std::get_if<And>(&node)) {
        collect(*a->lhs, atoms);
        collect(*a->rhs, atoms);
    } else if (const auto* o = std::get_if<Or>(&node)) {
        collect(*o->lhs, atoms);
        collect(*o->rhs, atoms);
    }
}

std::string selector_text(const NetworkSelector& sel) {
    return (sel.by() == NetworkSelector::By::Mac ? "mac:\"" : "ssid:\"") + sel.value() + "\"";
}

std::string filler_mac(std::size_t index, const std::set<std::string>& taken) {
    for (std::size_t n = index;; n += 4096) {
        char buf[18];
        std::snprintf(buf, sizeof buf, "02:00:5E:%02X:%02X:%02X", static_cast<unsigned>((n >> 16) & 0xFF),
                      static_cast<unsigned>((n >> 8) & 0xFF), static_cast<unsigned>(n & 0xFF));
        if (!taken.contains(buf)) return buf;
    }
}

enum class Reach { Reachable, Unreachable, Overflow };

// Every assignment of per-selector states (absent, or visible at one of the
// representative RSSI values) is realizable by a fingerprint holding one
// distinct observation per selector, so trying them all is exact.
Reach check_reachable(const Predicate& condition, std::size_t& selector_count) {
    Atoms atoms;
    collect(condition, atoms);
    selector_count = atoms.selectors.size();
    if (atoms.selectors.size() > kMaxLintSelectors) return Reach::Overflow;

    std::set<std::string> taken;
    for (const auto& sel : atoms.selectors)
        if (sel.by() == NetworkSelector::By::Mac) taken.insert(sel.value());

    // states[i][0] is "absent"; others are RSSI values.
    std::vector<std::vector<int>> states;
    std::uint64_t cases = atoms.minutes.size();
    for (std::size_t i = 0; i < atoms.selectors.size(); ++i) {
        std::vector<int> s{1};
        const auto& sel = atoms.selectors[i];
        const bool never_matches = sel.by() == NetworkSelector::By::Ssid && sel.value().empty();
        if (!never_matches) {
            if (atoms.thresholds[i].empty()) {
                s.push_back(-60);
            } else {
                s.push_back(kMinRssiDbm);
                s.insert(s.end(), atoms.thresholds[i].begin(), atoms.thresholds[i].end());
            }
        }
        cases *= s.size();
        if (cases > kMaxLintCases) return Reach::Overflow;
        states.push_back(std::move(s));
    }

    std::vector<std::size_t> digit(states.size(), 0);
    while (true) {
        Fingerprint fp;
        for (std::size_t i = 0; i < states.size(); ++i) {
            if (digit[i] == 0) continue;
            const auto& sel = atoms.selectors[i];
            const bool by_mac = sel.by() == NetworkSelector::By::Mac;
            NetworkId id(by_mac ? std::string() : sel.value(), by_mac ? sel.value() : filler_mac(i, taken));
            fp = merge_observation(std::move(fp), NetworkObservation(id, NetworkKind::Wifi, states[i][digit[i]], 0));
        }
        for (MinuteOfDay m : atoms.minutes) {
            if (eval_predicate(condition, fp, m)) return Reach::Reachable;
        }
        std::size_t k = 0;
        while (k < digit.size() && ++digit[k] == states[k].size()) digit[k++] = 0;
        if (k == digit.size()) return Reach::Unreachable;
    }
}

void collect_selectors(const Predicate& p, std::vector<NetworkSelector>& out) {
    Atoms atoms;
    collect(p, atoms);
    out = std::move(atoms.selectors);
}

bool venue_has(const sim::Venue& venue, const NetworkSelector& sel) {
    return std::any_of(venue.aps.begin(), venue.aps.end(), [&](const sim::AccessPointPlacement& ap) {
        return sel.matches(NetworkObservation(ap.id, ap.kind, kMinRssiDbm, 0));
    });
}

}  // namespace

std::vector<Diagnostic> lint_ruleset(const RuleSet& rs, const sim::Venue* venue) {
    std::vector<Diagnostic> out;
    std::set<std::string_view> referenced;
    for (const auto& rule : rs.rules) {
        referenced.insert(rule.snippet_id);

        std::size_t selector_count = 0;
        switch (check_reachable(*rule.condition, selector_count)) {
            case Reach::Unreachable:
                out.push_back({Severity::Warning, rule.id, "unreachable rule: condition can never be true"});
                break;
            case Reach::Overflow:
                out.push_back({Severity::Info, rule.id,
                               "lint overflow: " + std::to_string(selector_count) +
                                   " selectors, reachability not checked"});
                break;
            case Reach::Reachable: break;
        }

        if (venue) {
            std::vector<NetworkSelector> selectors;
            collect_selectors(*rule.condition, selectors);
            for (const auto& sel : selectors) {
                if (!venue_has(*venue, sel))
                    out.push_back({Severity::Warning, rule.id,
                                   "selector " + selector_text(sel) + " matches no venue AP"});
            }
        }
    }
    for (const auto& [id, snippet] : rs.snippets) {
        if (!referenced.contains(id))
            out.push_back({Severity::Warning, "", "orphan snippet '" + id + "' is never shown"});
    }
    return out;
}

std::string to_json_line(const Diagnostic& d) {
    nlohmann::ordered_json j;
    j["severity"] = d.severity == Severity::Warning ? "warning" : "info";
    j["rule_id"] = d.rule_id.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(d.rule_id);
    j["message"] = d.message;
    return j.dump();
}

}  // namespace spotex::rules
