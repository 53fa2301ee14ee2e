#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spotex/rules.hpp"

namespace spotex::rules {

enum class RenderMode { Filtered, Annotated };

/// Tokens for a `cond` attribute when the condition is a pure conjunction of
/// visible(...) atoms: SSIDs verbatim, MAC selectors as "mac:AA:BB:..".
/// Empty optional when the condition cannot be written that way (other
/// atoms, NOT/OR, or SSIDs with whitespace or a "mac:" prefix).
std::optional<std::vector<std::string>> cond_tokens(const Predicate& p);

/// Filtered: one <div id="rule"> per fired rule that contributed a snippet.
/// Annotated: a div per rule in priority order; fired-or-not visibility is
/// baked in as an inline display:none on the rules that did not fire, and
/// conjunctive conditions additionally carry cond="..." for the browser shim.
std::string render_page(const RuleSet& rs, const FiredResult& result, RenderMode mode);

std::string escape_html_attribute(std::string_view text);

}  // namespace spotex::rules
