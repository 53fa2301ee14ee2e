#pragma once

#include <string>
#include <vector>

#include "spotex/rules.hpp"
#include "spotex/venue.hpp"

namespace spotex::rules {

/// Reachability is decided exhaustively; rules referencing more selectors
/// than this get an info-level overflow note instead.
inline constexpr std::size_t kMaxLintSelectors = 16;

enum class Severity { Info, Warning };

struct Diagnostic {
    Severity severity;
    std::string rule_id;  // empty for set-level findings
    std::string message;

    friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

std::vector<Diagnostic> lint_ruleset(const RuleSet& rs, const sim::Venue* venue = nullptr);

/// {"severity","rule_id","message"} on one line; rule_id is null when empty.
std::string to_json_line(const Diagnostic& d);

}  // namespace spotex::rules
