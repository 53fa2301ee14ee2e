#include "spotex/render.hpp"

#include <algorithm>
#include <set>

namespace spotex::rules {

namespace {

bool collect_conjuncts(const Predicate& p, std::vector<std::string>& tokens) {
    if (const auto* a = std::get_if<And>(&p.node()))
        return collect_conjuncts(*a->lhs, tokens) && collect_conjuncts(*a->rhs, tokens);
    const auto* v = std::get_if<Visible>(&p.node());
    if (!v) return false;

    std::string token;
    if (v->selector.by() == NetworkSelector::By::Mac) {
        token = "mac:" + v->selector.value();
    } else {
        const auto& ssid = v->selector.value();
        if (ssid.empty() || ssid.starts_with("mac:")) return false;
        if (ssid.find_first_of(" \t\r\n\f\v") != std::string::npos) return false;
        token = ssid;
    }
    if (std::find(tokens.begin(), tokens.end(), token) == tokens.end()) tokens.push_back(std::move(token));
    return true;
}

std::vector<const Rule*> priority_order(const RuleSet& rs) {
    std::vector<const Rule*> order;
    for (const auto& r : rs.rules) order.push_back(&r);
    std::stable_sort(order.begin(), order.end(),
                     [](const Rule* a, const Rule* b) { return a->priority > b->priority; });
    return order;
}

}  // namespace

std::optional<std::vector<std::string>> cond_tokens(const Predicate& p) {
    std::vector<std::string> tokens;
    if (!collect_conjuncts(p, tokens)) return std::nullopt;
    return tokens;
}

std::string escape_html_attribute(std::string_view text) {
    std::string out;
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string render_page(const RuleSet& rs, const FiredResult& result, RenderMode mode) {
    std::string out;
    if (mode == RenderMode::Filtered) {
        std::set<std::string_view> shown;
        for (const auto& rule_id : result.fired_rule_ids) {
            auto rule = std::find_if(rs.rules.begin(), rs.rules.end(),
                                     [&](const Rule& r) { return r.id == rule_id; });
            if (rule == rs.rules.end() || !shown.insert(rule->snippet_id).second) continue;
            out += "<div id=\"" + rule->id + "\">" + rs.snippets.at(rule->snippet_id).html + "</div>\n";
        }
        return out;
    }

    const std::set<std::string_view> fired(result.fired_rule_ids.begin(), result.fired_rule_ids.end());
    for (const Rule* rule : priority_order(rs)) {
        out += "<div id=\"" + rule->id + "\"";
        if (auto tokens = cond_tokens(*rule->condition)) {
            std::string joined;
            for (const auto& t : *tokens) {
                if (!joined.empty()) joined.push_back(' ');
                joined += t;
            }
            out += " cond=\"" + escape_html_attribute(joined) + "\"";
        }
        if (!fired.contains(rule->id)) out += " style=\"display:none\"";
        out += ">" + rs.snippets.at(rule->snippet_id).html + "</div>\n";
    }
    return out;
}

}  // namespace spotex::rules
