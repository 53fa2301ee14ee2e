#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "spotex/fingerprint.hpp"

namespace spotex::rules {

inline constexpr int kMinutesPerDay = 1440;
inline constexpr int kMaxPredicateDepth = 32;

/// Minutes since local midnight, in [0, 1440).
using MinuteOfDay = int;

enum class CmpOp : std::uint8_t { Ge, Gt, Le, Lt };

std::string_view to_string(CmpOp op) noexcept;

class Predicate;

struct Visible {
    NetworkSelector selector;
};

struct RssiCompare {
    NetworkSelector selector;
    CmpOp op;
    int threshold_dbm;
};

/// Half-open [start, end); wraps past midnight when end < start; empty when
/// start == end.
struct TimeIn {
    MinuteOfDay start;
    MinuteOfDay end;
};

struct Not {
    std::shared_ptr<const Predicate> operand;
};

struct And {
    std::shared_ptr<const Predicate> lhs;
    std::shared_ptr<const Predicate> rhs;
};

struct Or {
    std::shared_ptr<const Predicate> lhs;
    std::shared_ptr<const Predicate> rhs;
};

/// Immutable boolean condition tree. Copies share structure.
class Predicate {
public:
    using Node = std::variant<Visible, RssiCompare, TimeIn, Not, And, Or>;

    explicit Predicate(Node node) : node_(std::move(node)) {}

    const Node& node() const noexcept { return node_; }

    /// Leaves have depth 1.
    int depth() const;

    friend bool operator==(const Predicate& a, const Predicate& b);

private:
    Node node_;
};

using PredicatePtr = std::shared_ptr<const Predicate>;

PredicatePtr visible(NetworkSelector sel);
PredicatePtr rssi_compare(NetworkSelector sel, CmpOp op, int threshold_dbm);
PredicatePtr time_in(MinuteOfDay start, MinuteOfDay end);
PredicatePtr negate(PredicatePtr p);
PredicatePtr all_of(PredicatePtr lhs, PredicatePtr rhs);
PredicatePtr any_of(PredicatePtr lhs, PredicatePtr rhs);

struct Snippet {
    std::string id;
    std::string title;
    std::string html;

    friend bool operator==(const Snippet&, const Snippet&) = default;
};

struct Rule {
    std::string id;
    int priority = 0;
    PredicatePtr condition;
    std::string snippet_id;

    friend bool operator==(const Rule& a, const Rule& b);
};

struct RuleSet {
    std::map<std::string, Snippet> snippets;
    std::vector<Rule> rules;

    friend bool operator==(const RuleSet&, const RuleSet&) = default;
};

struct FiredResult {
    std::vector<std::string> fired_rule_ids;
    std::vector<Snippet> snippets;

    friend bool operator==(const FiredResult&, const FiredResult&) = default;
};

class ParseError : public std::runtime_error {
public:
    ParseError(int line, int column, const std::string& message);

    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    int line_;
    int column_;
    std::string detail_;
};

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

bool is_identifier(std::string_view text) noexcept;

/// Checks id syntax and uniqueness, snippet references, thresholds, time
/// bounds, predicate depth and heredoc-safe HTML. Throws ValidationError.
void validate(const RuleSet& rs);

RuleSet parse_ruleset(std::string_view source);
std::string serialize_ruleset(const RuleSet& rs);

bool eval_predicate(const Predicate& p, const Fingerprint& fp, MinuteOfDay now);

/// Fired rules in descending priority (ties by declaration order), with
/// snippets deduplicated so the first firing rule wins.
FiredResult fire_rules(const RuleSet& rs, const Fingerprint& fp, MinuteOfDay now);

/// Parses "HH:MM" (00:00 .. 23:59).
std::optional<MinuteOfDay> parse_clock(std::string_view text) noexcept;
std::string format_clock(MinuteOfDay minute);

}  // namespace spotex::rules
