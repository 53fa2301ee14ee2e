// Reader and writer for the .spotex rule language:
//
//   # comment
//   SNIPPET cafe TITLE "Café" HTML <<<<b>10% off</b>>>>
//     (the block closes at the last ">>>" of a '>' run, so the HTML above
//     keeps its trailing '>')
//   RULE cafe_rule PRIORITY 10 IF visible(ssid:"Café") AND rssi(ssid:"Café") >= -70
//       THEN SHOW cafe
//
// Expressions: NOT binds tighter than AND, AND tighter than OR, parentheses
// group. Atoms are visible(sel), rssi(sel) <op> <dBm> and time(HH:MM, HH:MM),
// with sel one of ssid:"..." or mac:"...". Keywords are matched by context,
// so any identifier is usable as a rule or snippet id.

#include <charconv>
#include <set>

#include "spotex/rules.hpp"

namespace spotex::rules {

namespace {

// Recursion guard for NOT chains and parenthesis nesting; any tree that
// trips it is far beyond kMaxPredicateDepth anyway.
constexpr int kMaxNesting = 256;

enum class Tok { Word, String, Heredoc, Int, Clock, LParen, RParen, Comma, Colon, Cmp, End };

struct Token {
    Tok kind;
    std::string text;
    int line;
    int column;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    Token next() {
        skip_blank();
        const int line = line_, column = column_;
        if (pos_ >= src_.size()) return {Tok::End, "", line, column};

        const char c = src_[pos_];
        if (is_word_start(c)) {
            std::size_t start = pos_;
            while (pos_ < src_.size() && is_word_char(src_[pos_])) advance();
            return {Tok::Word, std::string(src_.substr(start, pos_ - start)), line, column};
        }
        if (c == '"') return lex_string(line, column);
        if (src_.substr(pos_, 3) == "<<<") return lex_heredoc(line, column);
        if (is_digit(c) || (c == '-' && pos_ + 1 < src_.size() && is_digit(src_[pos_ + 1])))
            return lex_number(line, column);
        if (c == '>' || c == '<') {
            std::string op(1, c);
            advance();
            if (pos_ < src_.size() && src_[pos_] == '=') {
                op.push_back('=');
                advance();
            }
            return {Tok::Cmp, op, line, column};
        }
        advance();
        switch (c) {
            case '(': return {Tok::LParen, "(", line, column};
            case ')': return {Tok::RParen, ")", line, column};
            case ',': return {Tok::Comma, ",", line, column};
            case ':': return {Tok::Colon, ":", line, column};
            default: break;
        }
        throw ParseError(line, column, std::string("unexpected character '") + c + "'");
    }

private:
    static bool is_digit(char c) { return c >= '0' && c <= '9'; }
    static bool is_word_start(char c) {
        return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_';
    }
    static bool is_word_char(char c) { return is_word_start(c) || is_digit(c); }

    void advance() {
        if (src_[pos_] == '\n') {
            ++line_;
            column_ = 1;
        } else {
            ++column_;
        }
        ++pos_;
    }

    void skip_blank() {
        while (pos_ < src_.size()) {
            const char c = src_[pos_];
            if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                advance();
            } else if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n') advance();
            } else {
                break;
            }
        }
    }

    Token lex_string(int line, int column) {
        advance();
        std::string out;
        while (true) {
            if (pos_ >= src_.size() || src_[pos_] == '\n')
                throw ParseError(line, column, "unterminated string literal");
            const char c = src_[pos_];
            if (c == '"') {
                advance();
                return {Tok::String, out, line, column};
            }
            if (c == '\\') {
                advance();
                if (pos_ >= src_.size()) throw ParseError(line_, column_, "dangling escape");
                const char e = src_[pos_];
                switch (e) {
                    case '"': out.push_back('"'); break;
                    case '\\': out.push_back('\\'); break;
                    case 'n': out.push_back('\n'); break;
                    case 'r': out.push_back('\r'); break;
                    case 't': out.push_back('\t'); break;
                    default:
                        throw ParseError(line_, column_, std::string("unknown escape '\\") + e + "'");
                }
                advance();
                continue;
            }
            out.push_back(c);
            advance();
        }
    }

    Token lex_heredoc(int line, int column) {
        for (int i = 0; i < 3; ++i) advance();
        const std::size_t start = pos_;
        std::size_t close = src_.find(">>>", pos_);
        if (close == std::string_view::npos) throw ParseError(line, column, "unterminated <<< block");
        // The terminator is the last three of a '>' run, so HTML may end in '>'.
        while (close + 3 < src_.size() && src_[close + 3] == '>') ++close;
        while (pos_ < close) advance();
        std::string body(src_.substr(start, close - start));
        for (int i = 0; i < 3; ++i) advance();
        return {Tok::Heredoc, std::move(body), line, column};
    }

    Token lex_number(int line, int column) {
        const std::size_t start = pos_;
        if (src_[pos_] == '-') advance();
        while (pos_ < src_.size() && is_digit(src_[pos_])) advance();
        // HH:MM clock literal
        if (src_[start] != '-' && pos_ < src_.size() && src_[pos_] == ':' && pos_ + 1 < src_.size() &&
            is_digit(src_[pos_ + 1])) {
            advance();
            while (pos_ < src_.size() && is_digit(src_[pos_])) advance();
            return {Tok::Clock, std::string(src_.substr(start, pos_ - start)), line, column};
        }
        return {Tok::Int, std::string(src_.substr(start, pos_ - start)), line, column};
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int column_ = 1;
};

struct Parsed {
    PredicatePtr predicate;
    int depth;
};

class Parser {
public:
    explicit Parser(std::string_view src) : lexer_(src) { shift(); }

    RuleSet parse() {
        RuleSet rs;
        std::set<std::string> seen_rules;
        while (cur_.kind != Tok::End) {
            if (is_word("SNIPPET")) {
                Snippet s = parse_snippet();
                if (!rs.snippets.emplace(s.id, s).second)
                    throw ValidationError("duplicate snippet id '" + s.id + "'");
            } else if (is_word("RULE")) {
                Rule r = parse_rule();
                if (!seen_rules.insert(r.id).second) throw ValidationError("duplicate rule id '" + r.id + "'");
                rs.rules.push_back(std::move(r));
            } else {
                fail("expected SNIPPET or RULE");
            }
        }
        return rs;
    }

private:
    [[noreturn]] void fail(const std::string& message) const {
        const std::string seen = cur_.kind == Tok::End ? "end of input" : "'" + cur_.text + "'";
        throw ParseError(cur_.line, cur_.column, message + ", found " + seen);
    }

    void shift() { cur_ = lexer_.next(); }

    bool is_word(std::string_view w) const { return cur_.kind == Tok::Word && cur_.text == w; }

    void expect_word(std::string_view w) {
        if (!is_word(w)) fail("expected " + std::string(w));
        shift();
    }

    Token expect(Tok kind, const char* what) {
        if (cur_.kind != kind) fail(std::string("expected ") + what);
        Token t = cur_;
        shift();
        return t;
    }

    int parse_int(const Token& t) const {
        int value = 0;
        const char* first = t.text.data();
        const char* last = first + t.text.size();
        auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc{} || ptr != last) throw ParseError(t.line, t.column, "integer out of range");
        return value;
    }

    Snippet parse_snippet() {
        expect_word("SNIPPET");
        Snippet s;
        s.id = expect(Tok::Word, "snippet id").text;
        expect_word("TITLE");
        s.title = expect(Tok::String, "quoted title").text;
        expect_word("HTML");
        s.html = expect(Tok::Heredoc, "<<< HTML >>> block").text;
        return s;
    }

    Rule parse_rule() {
        expect_word("RULE");
        Rule r;
        r.id = expect(Tok::Word, "rule id").text;
        if (is_word("PRIORITY")) {
            shift();
            r.priority = parse_int(expect(Tok::Int, "integer priority"));
        }
        expect_word("IF");
        r.condition = parse_or(0).predicate;
        expect_word("THEN");
        expect_word("SHOW");
        r.snippet_id = expect(Tok::Word, "snippet id").text;
        return r;
    }

    static Parsed combine(bool is_and, Parsed lhs, Parsed rhs) {
        Parsed out{is_and ? all_of(lhs.predicate, rhs.predicate) : any_of(lhs.predicate, rhs.predicate),
                   1 + std::max(lhs.depth, rhs.depth)};
        check_depth(out.depth);
        return out;
    }

    static void check_depth(int depth) {
        if (depth > kMaxPredicateDepth)
            throw ValidationError("condition deeper than " + std::to_string(kMaxPredicateDepth));
    }

    void enter(int nesting) const {
        if (nesting > kMaxNesting)
            throw ValidationError("condition nested deeper than " + std::to_string(kMaxNesting));
    }

    Parsed parse_or(int nesting) {
        enter(nesting);
        Parsed lhs = parse_and(nesting);
        while (is_word("OR")) {
            shift();
            lhs = combine(false, lhs, parse_and(nesting));
        }
        return lhs;
    }

    Parsed parse_and(int nesting) {
        Parsed lhs = parse_not(nesting);
        while (is_word("AND")) {
            shift();
            lhs = combine(true, lhs, parse_not(nesting));
        }
        return lhs;
    }

    Parsed parse_not(int nesting) {
        enter(nesting);
        if (is_word("NOT")) {
            shift();
            Parsed inner = parse_not(nesting + 1);
            Parsed out{negate(inner.predicate), inner.depth + 1};
            check_depth(out.depth);
            return out;
        }
        return parse_primary(nesting);
    }

    NetworkSelector parse_selector() {
        if (cur_.kind != Tok::Word || (cur_.text != "ssid" && cur_.text != "mac"))
            fail("expected ssid:\"...\" or mac:\"...\"");
        const bool by_mac = cur_.text == "mac";
        shift();
        expect(Tok::Colon, "':'");
        Token value = expect(Tok::String, "quoted selector value");
        if (!by_mac) return NetworkSelector::ssid(value.text);
        try {
            return NetworkSelector::mac(value.text);
        } catch (const MalformedMac& e) {
            throw ValidationError(e.what());
        }
    }

    MinuteOfDay parse_time() {
        Token t = expect(Tok::Clock, "HH:MM time");
        auto colon = t.text.find(':');
        const std::string hh = t.text.substr(0, colon);
        const std::string mm = t.text.substr(colon + 1);
        if (hh.size() > 2 || mm.size() != 2)
            throw ParseError(t.line, t.column, "time must be written HH:MM");
        const int hours = std::stoi(hh), minutes = std::stoi(mm);
        if (hours > 23 || minutes > 59) throw ValidationError("time " + t.text + " outside 00:00..23:59");
        return hours * 60 + minutes;
    }

    Parsed parse_primary(int nesting) {
        if (cur_.kind == Tok::LParen) {
            shift();
            Parsed inner = parse_or(nesting + 1);
            expect(Tok::RParen, "')'");
            return inner;
        }
        if (is_word("visible")) {
            shift();
            expect(Tok::LParen, "'('");
            NetworkSelector sel = parse_selector();
            expect(Tok::RParen, "')'");
            return {visible(std::move(sel)), 1};
        }
        if (is_word("rssi")) {
            shift();
            expect(Tok::LParen, "'('");
            NetworkSelector sel = parse_selector();
            expect(Tok::RParen, "')'");
            Token op_tok = expect(Tok::Cmp, "comparison operator");
            CmpOp op = op_tok.text == ">=" ? CmpOp::Ge
                       : op_tok.text == ">" ? CmpOp::Gt
                       : op_tok.text == "<=" ? CmpOp::Le
                                             : CmpOp::Lt;
            Token th = expect(Tok::Int, "dBm threshold");
            const int threshold = parse_int(th);
            if (threshold < kMinRssiDbm || threshold > kMaxRssiDbm)
                throw ValidationError("RSSI threshold " + th.text + " outside [-120, 0]");
            return {rssi_compare(std::move(sel), op, threshold), 1};
        }
        if (is_word("time")) {
            shift();
            expect(Tok::LParen, "'('");
            MinuteOfDay start = parse_time();
            expect(Tok::Comma, "','");
            MinuteOfDay end = parse_time();
            expect(Tok::RParen, "')'");
            return {time_in(start, end), 1};
        }
        fail("expected condition");
    }

    Lexer lexer_;
    Token cur_{Tok::End, "", 1, 1};
};

std::string quote(std::string_view text) {
    std::string out = "\"";
    for (char c : text) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default: out.push_back(c);
        }
    }
    out.push_back('"');
    return out;
}

std::string selector_text(const NetworkSelector& sel) {
    return (sel.by() == NetworkSelector::By::Mac ? "mac:" : "ssid:") + quote(sel.value());
}

int precedence(const Predicate& p) {
    if (std::holds_alternative<Or>(p.node())) return 1;
    if (std::holds_alternative<And>(p.node())) return 2;
    if (std::holds_alternative<Not>(p.node())) return 3;
    return 4;
}

void write_predicate(const Predicate& p, std::string& out);

void write_child(const Predicate& child, bool parenthesize, std::string& out) {
    if (parenthesize) out.push_back('(');
    write_predicate(child, out);
    if (parenthesize) out.push_back(')');
}

void write_predicate(const Predicate& p, std::string& out) {
    const auto& node = p.node();
    if (const auto* v = std::get_if<Visible>(&node)) {
        out += "visible(" + selector_text(v->selector) + ")";
    } else if (const auto* r = std::get_if<RssiCompare>(&node)) {
        out += "rssi(" + selector_text(r->selector) + ") ";
        out += to_string(r->op);
        out += " " + std::to_string(r->threshold_dbm);
    } else if (const auto* t = std::get_if<TimeIn>(&node)) {
        out += "time(" + format_clock(t->start) + ", " + format_clock(t->end) + ")";
    } else if (const auto* n = std::get_if<Not>(&node)) {
        out += "NOT ";
        write_child(*n->operand, precedence(*n->operand) < 3, out);
    } else {
        const bool is_and = std::holds_alternative<And>(node);
        const auto& lhs = is_and ? *std::get<And>(node).lhs : *std::get<Or>(node).lhs;
        const auto& rhs = is_and ? *std::get<And>(node).rhs : *std::get<Or>(node).rhs;
        const int prec = precedence(p);
        // Chains are left-associative, so a same-level right operand needs
        // parentheses to keep its shape.
        write_child(lhs, precedence(lhs) < prec, out);
        out += is_and ? " AND " : " OR ";
        write_child(rhs, precedence(rhs) <= prec, out);
    }
}

}  // namespace

RuleSet parse_ruleset(std::string_view source) {
    RuleSet rs = Parser(source).parse();
    validate(rs);
    return rs;
}

std::string serialize_ruleset(const RuleSet& rs) {
    std::string out;
    for (const auto& [id, s] : rs.snippets) {
        out += "SNIPPET " + s.id + " TITLE " + quote(s.title) + " HTML <<<" + s.html + ">>>\n";
    }
    for (const auto& r : rs.rules) {
        out += "RULE " + r.id;
        if (r.priority != 0) out += " PRIORITY " + std::to_string(r.priority);
        out += " IF ";
        write_predicate(*r.condition, out);
        out += " THEN SHOW " + r.snippet_id + "\n";
    }
    return out;
}

}  // namespace spotex::rules
