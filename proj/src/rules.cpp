#include "spotex/rules.hpp"

#include <algorithm>
#include <set>

namespace spotex::rules {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool same_tree(const PredicatePtr& a, const PredicatePtr& b) {
    if (a == b) return true;
    if (!a || !b) return false;
    return *a == *b;
}

bool compare(int observed, CmpOp op, int threshold) noexcept {
    switch (op) {
        case CmpOp::Ge: return observed >= threshold;
        case CmpOp::Gt: return observed > threshold;
        case CmpOp::Le: return observed <= threshold;
        case CmpOp::Lt: return observed < threshold;
    }
    return false;
}

void validate_predicate(const Predicate& p, const std::string& rule_id) {
    std::visit(overloaded{
                   [&](const Visible& v) {
                       if (v.selector.by() == NetworkSelector::By::Ssid &&
                           v.selector.value().size() > kMaxSsidBytes)
                           throw ValidationError("rule '" + rule_id + "': SSID longer than 32 bytes");
                   },
                   [&](const RssiCompare& r) {
                       if (r.threshold_dbm < kMinRssiDbm || r.threshold_dbm > kMaxRssiDbm)
                           throw ValidationError("rule '" + rule_id + "': RSSI threshold " +
                                                 std::to_string(r.threshold_dbm) +
                                                 " outside [-120, 0]");
                       if (r.selector.by() == NetworkSelector::By::Ssid &&
                           r.selector.value().size() > kMaxSsidBytes)
                           throw ValidationError("rule '" + rule_id + "': SSID longer than 32 bytes");
                   },
                   [&](const TimeIn& t) {
                       if (t.start < 0 || t.start >= kMinutesPerDay || t.end < 0 ||
                           t.end >= kMinutesPerDay)
                           throw ValidationError("rule '" + rule_id + "': time outside 00:00..23:59");
                   },
                   [&](const Not& n) { validate_predicate(*n.operand, rule_id); },
                   [&](const And& a) {
                       validate_predicate(*a.lhs, rule_id);
                       validate_predicate(*a.rhs, rule_id);
                   },
                   [&](const Or& o) {
                       validate_predicate(*o.lhs, rule_id);
                       validate_predicate(*o.rhs, rule_id);
                   },
               },
               p.node());
}

}  // namespace

std::string_view to_string(CmpOp op) noexcept {
    switch (op) {
        case CmpOp::Ge: return ">=";
        case CmpOp::Gt: return ">";
        case CmpOp::Le: return "<=";
        case CmpOp::Lt: return "<";
    }
    return "?";
}

int Predicate::depth() const {
    return std::visit(overloaded{
                          [](const Not& n) { return 1 + n.operand->depth(); },
                          [](const And& a) { return 1 + std::max(a.lhs->depth(), a.rhs->depth()); },
                          [](const Or& o) { return 1 + std::max(o.lhs->depth(), o.rhs->depth()); },
                          [](const auto&) { return 1; },
                      },
                      node_);
}

bool operator==(const Predicate& a, const Predicate& b) {
    if (a.node_.index() != b.node_.index()) return false;
    return std::visit(
        overloaded{
            [&](const Visible& x) { return x.selector == std::get<Visible>(b.node_).selector; },
            [&](const RssiCompare& x) {
                const auto& y = std::get<RssiCompare>(b.node_);
                return x.selector == y.selector && x.op == y.op && x.threshold_dbm == y.threshold_dbm;
            },
            [&](const TimeIn& x) {
                const auto& y = std::get<TimeIn>(b.node_);
                return x.start == y.start && x.end == y.end;
            },
            [&](const Not& x) { return same_tree(x.operand, std::get<Not>(b.node_).operand); },
            [&](const And& x) {
                const auto& y = std::get<And>(b.node_);
                return same_tree(x.lhs, y.lhs) && same_tree(x.rhs, y.rhs);
            },
            [&](const Or& x) {
                const auto& y = std::get<Or>(b.node_);
                return same_tree(x.lhs, y.lhs) && same_tree(x.rhs, y.rhs);
            },
        },
        a.node_);
}

bool operator==(const Rule& a, const Rule& b) {
    return a.id == b.id && a.priority == b.priority && a.snippet_id == b.snippet_id &&
           same_tree(a.condition, b.condition);
}

PredicatePtr visible(NetworkSelector sel) {
    return std::make_shared<const Predicate>(Visible{std::move(sel)});
}

PredicatePtr rssi_compare(NetworkSelector sel, CmpOp op, int threshold_dbm) {
    return std::make_shared<const Predicate>(RssiCompare{std::move(sel), op, threshold_dbm});
}

PredicatePtr time_in(MinuteOfDay start, MinuteOfDay end) {
    return std::make_shared<const Predicate>(TimeIn{start, end});
}

PredicatePtr negate(PredicatePtr p) {
    return std::make_shared<const Predicate>(Not{std::move(p)});
}

PredicatePtr all_of(PredicatePtr lhs, PredicatePtr rhs) {
    return std::make_shared<const Predicate>(And{std::move(lhs), std::move(rhs)});
}

PredicatePtr any_of(PredicatePtr lhs, PredicatePtr rhs) {
    return std::make_shared<const Predicate>(Or{std::move(lhs), std::move(rhs)});
}

ParseError::ParseError(int line, int column, const std::string& message)
    : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " + message),
      line_(line),
      column_(column),
      detail_(message) {}

bool is_identifier(std::string_view text) noexcept {
    if (text.empty()) return false;
    auto alpha = [](char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; };
    if (!alpha(text.front())) return false;
    return std::all_of(text.begin() + 1, text.end(),
                       [&](char c) { return alpha(c) || (c >= '0' && c <= '9'); });
}

void validate(const RuleSet& rs) {
    for (const auto& [key, snippet] : rs.snippets) {
        if (key != snippet.id) throw ValidationError("snippet key mismatch for '" + snippet.id + "'");
        if (!is_identifier(snippet.id)) throw ValidationError("invalid snippet id '" + snippet.id + "'");
        if (snippet.html.find(">>>") != std::string::npos)
            throw ValidationError("snippet '" + snippet.id + "': HTML must not contain '>>>'");
    }
    std::set<std::string_view> rule_ids;
    for (const auto& rule : rs.rules) {
        if (!is_identifier(rule.id)) throw ValidationError("invalid rule id '" + rule.id + "'");
        if (!rule_ids.insert(rule.id).second) throw ValidationError("duplicate rule id '" + rule.id + "'");
        if (!rs.snippets.contains(rule.snippet_id))
            throw ValidationError("rule '" + rule.id + "' shows unknown snippet '" + rule.snippet_id + "'");
        if (!rule.condition) throw ValidationError("rule '" + rule.id + "' has no condition");
        if (rule.condition->depth() > kMaxPredicateDepth)
            throw ValidationError("rule '" + rule.id + "': condition deeper than " +
                                  std::to_string(kMaxPredicateDepth));
        validate_predicate(*rule.condition, rule.id);
    }
}

bool eval_predicate(const Predicate& p, const Fingerprint& fp, MinuteOfDay now) {
    return std::visit(overloaded{
                          [&](const Visible& v) { return is_visible(fp, v.selector); },
                          [&](const RssiCompare& r) {
                              auto rssi = observed_rssi(fp, r.selector);
                              return rssi.has_value() && compare(*rssi, r.op, r.threshold_dbm);
                          },
                          [&](const TimeIn& t) {
                              if (t.start < t.end) return now >= t.start && now < t.end;
                              if (t.start > t.end) return now >= t.start || now < t.end;
                              return false;
                          },
                          [&](const Not& n) { return !eval_predicate(*n.operand, fp, now); },
                          [&](const And& a) {
                              return eval_predicate(*a.lhs, fp, now) && eval_predicate(*a.rhs, fp, now);
                          },
                          [&](const Or& o) {
                              return eval_predicate(*o.lhs, fp, now) || eval_predicate(*o.rhs, fp, now);
                          },
                      },
                      p.node());
}

FiredResult fire_rules(const RuleSet& rs, const Fingerprint& fp, MinuteOfDay now) {
    std::vector<const Rule*> fired;
    for (const auto& rule : rs.rules) {
        if (eval_predicate(*rule.condition, fp, now)) fired.push_back(&rule);
    }
    std::stable_sort(fired.begin(), fired.end(),
                     [](const Rule* a, const Rule* b) { return a->priority > b->priority; });

    FiredResult result;
    std::set<std::string_view> shown;
    for (const Rule* rule : fired) {
        result.fired_rule_ids.push_back(rule->id);
        if (shown.insert(rule->snippet_id).second) result.snippets.push_back(rs.snippets.at(rule->snippet_id));
    }
    return result;
}

std::optional<MinuteOfDay> parse_clock(std::string_view text) noexcept {
    if (text.size() != 5 || text[2] != ':') return std::nullopt;
    auto digit = [&](std::size_t i) -> int {
        return (text[i] >= '0' && text[i] <= '9') ? text[i] - '0' : -1;
    };
    const int h1 = digit(0), h2 = digit(1), m1 = digit(3), m2 = digit(4);
    if (h1 < 0 || h2 < 0 || m1 < 0 || m2 < 0) return std::nullopt;
    const int hours = h1 * 10 + h2;
    const int minutes = m1 * 10 + m2;
    if (hours > 23 || minutes > 59) return std::nullopt;
    return hours * 60 + minutes;
}

std::string format_clock(MinuteOfDay minute) {
    std::string out(5, '0');
    const int h = minute / 60, m = minute % 60;
    out[0] = static_cast<char>('0' + h / 10);
    out[1] = static_cast<char>('0' + h % 10);
    out[2] = ':';
    out[3] = static_cast<char>('0' + m / 10);
    out[4] = static_cast<char>('0' + m % 10);
    return out;
}

}  // namespace spotex::rules
