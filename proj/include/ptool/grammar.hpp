#pragma once

// Reader and writer for the solution text format
//
//   {Platform:[func(name=value, ...), ...], Other:[...]}
//
// The full EBNF lives in docs/grammar.md.

#include "ptool/expected.hpp"
#include "ptool/model.hpp"
#include "ptool/value.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace ptool {

struct ParseError {
    std::size_t position = 0;
    std::string expected;
    std::string found;

    [[nodiscard]] std::string message() const {
        return "at offset " + std::to_string(position) + ": expected " + expected + ", found " + found;
    }

    friend bool operator==(const ParseError&, const ParseError&) = default;
};

inline bool is_identifier_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}

inline bool is_identifier_char(char c) {
    return is_identifier_start(c) || (c >= '0' && c <= '9') || c == '.' || c == '-';
}

inline bool is_identifier(std::string_view s) {
    if (s.empty() || !is_identifier_start(s.front())) return false;
    for (char c : s)
        if (!is_identifier_char(c)) return false;
    // keywords would read back as literals in key position of maps only, but
    // keep them out of identifiers everywhere for simplicity of the contract
    return s != "True" && s != "False" && s != "true" && s != "false" && s != "None" && s != "null";
}

namespace detail {

class SolutionParser {
public:
    explicit SolutionParser(std::string_view text) : text_(text) {}

    Expected<Solution, ParseError> run() {
        Solution out;
        skip_ws();
        if (!expect('{', "'{'")) return err_;
        do {
            skip_ws();
            std::string platform;
            if (!identifier(platform, "platform name")) return err_;
            skip_ws();
            if (!expect(':', "':'")) return err_;
            skip_ws();
            if (!expect('[', "'['")) return err_;
            do {
                skip_ws();
                ToolCall call;
                call.platform = platform;
                if (!parse_call(call)) return err_;
                out.calls.push_back(std::move(call));
                skip_ws();
            } while (accept(','));
            if (!expect(']', "',' or ']'")) return err_;
            skip_ws();
        } while (accept(','));
        if (!expect('}', "',' or '}'")) return err_;
        skip_ws();
        if (pos_ != text_.size()) {
            fail("end of input");
            return err_;
        }
        return out;
    }

private:
    static constexpr int kMaxDepth = 64;

    bool parse_call(ToolCall& call) {
        if (!identifier(call.function, "function name")) return false;
        skip_ws();
        if (!expect('(', "'('")) return false;
        skip_ws();
        if (accept(')')) return true;
        do {
            skip_ws();
            const std::size_t at = pos_;
            std::string name;
            if (!identifier(name, "parameter name")) return false;
            if (call.arg(name) != nullptr) {
                pos_ = at;
                fail("distinct parameter name (duplicate '" + name + "')");
                return false;
            }
            skip_ws();
            if (!expect('=', "'='")) return false;
            skip_ws();
            Value v;
            if (!literal(v, 0)) return false;
            call.args.emplace_back(std::move(name), std::move(v));
            skip_ws();
        } while (accept(','));
        return expect(')', "',' or ')'");
    }

    bool literal(Value& out, int depth) {
        if (depth > kMaxDepth) return fail("shallower nesting");
        if (pos_ >= text_.size()) return fail("literal");
        const char c = text_[pos_];
        if (c == '\'' || c == '"') {
            std::string s;
            if (!quoted(s)) return false;
            out = Value(std::move(s));
            return true;
        }
        if (c == '-' || (c >= '0' && c <= '9')) return number(out);
        if (c == '[') {
            ++pos_;
            Value::List items;
            skip_ws();
            if (!accept(']')) {
                do {
                    skip_ws();
                    Value item;
                    if (!literal(item, depth + 1)) return false;
                    items.push_back(std::move(item));
                    skip_ws();
                } while (accept(','));
                if (!expect(']', "',' or ']'")) return false;
            }
            out = Value(std::move(items));
            return true;
        }
        if (c == '{') {
            ++pos_;
            Value::Map entries;
            skip_ws();
            if (!accept('}')) {
                do {
                    skip_ws();
                    const std::size_t at = pos_;
                    std::string key;
                    if (pos_ < text_.size() && (text_[pos_] == '\'' || text_[pos_] == '"')) {
                        if (!quoted(key)) return false;
                    } else if (!identifier(key, "map key")) {
                        return false;
                    }
                    for (const auto& [k, _] : entries)
                        if (k == key) {
                            pos_ = at;
                            return fail("distinct map key (duplicate '" + key + "')");
                        }
                    skip_ws();
                    if (!expect(':', "':'")) return false;
                    skip_ws();
                    Value item;
                    if (!literal(item, depth + 1)) return false;
                    entries.emplace_back(std::move(key), std::move(item));
                    skip_ws();
                } while (accept(','));
                if (!expect('}', "',' or '}'")) return false;
            }
            out = Value::map(std::move(entries));
            return true;
        }
        if (is_identifier_start(c)) {
            const std::size_t at = pos_;
            std::string word;
            while (pos_ < text_.size() && is_identifier_char(text_[pos_])) word.push_back(text_[pos_++]);
            if (word == "True" || word == "true") {
                out = Value(true);
                return true;
            }
            if (word == "False" || word == "false") {
                out = Value(false);
                return true;
            }
            if (word == "None" || word == "null") {
                out = Value(nullptr);
                return true;
            }
            pos_ = at;
            return fail("literal");
        }
        return fail("literal");
    }

    bool number(Value& out) {
        const std::size_t start = pos_;
        if (text_[pos_] == '-') ++pos_;
        if (pos_ >= text_.size() || !is_digit(text_[pos_])) return fail("digit");
        while (pos_ < text_.size() && is_digit(text_[pos_])) ++pos_;
        bool real = false;
        if (pos_ < text_.size() && text_[pos_] == '.') {
            real = true;
            ++pos_;
            if (pos_ >= text_.size() || !is_digit(text_[pos_])) return fail("digit after '.'");
            while (pos_ < text_.size() && is_digit(text_[pos_])) ++pos_;
        }
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            real = true;
            ++pos_;
            if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
            if (pos_ >= text_.size() || !is_digit(text_[pos_])) return fail("exponent digits");
            while (pos_ < text_.size() && is_digit(text_[pos_])) ++pos_;
        }
        const char* first = text_.data() + start;
        const char* last = text_.data() + pos_;
        if (!real) {
            std::int64_t i = 0;
            auto [p, ec] = std::from_chars(first, last, i);
            if (ec == std::errc() && p == last) {
                out = Value(i);
                return true;
            }
        }
        double d = 0;
        auto [p, ec] = std::from_chars(first, last, d);
        if (ec != std::errc() || p != last || !std::isfinite(d)) {
            pos_ = start;
            return fail("finite number");
        }
        out = Value(d);
        return true;
    }

    bool quoted(std::string& out) {
        const char q = text_[pos_++];
        while (true) {
            if (pos_ >= text_.size()) return fail("closing quote");
            const char c = text_[pos_++];
            if (c == q) return true;
            if (c != '\\') {
                out.push_back(c);
                continue;
            }
            if (pos_ >= text_.size()) return fail("escape character");
            const char e = text_[pos_++];
            switch (e) {
            case '\\': out.push_back('\\'); break;
            case '\'': out.push_back('\''); break;
            case '"': out.push_back('"'); break;
            case '/': out.push_back('/'); break;
            case 'n': out.push_back('\n'); break;
            case 't': out.push_back('\t'); break;
            case 'r': out.push_back('\r'); break;
            case 'b': out.push_back('\b'); break;
            case 'f': out.push_back('\f'); break;
            case 'u': {
                if (pos_ + 4 > text_.size()) return fail("four hex digits");
                unsigned cp = 0;
                for (int i = 0; i < 4; ++i) {
                    const char h = text_[pos_];
                    cp <<= 4;
                    if (h >= '0' && h <= '9') cp |= static_cast<unsigned>(h - '0');
                    else if (h >= 'a' && h <= 'f') cp |= static_cast<unsigned>(h - 'a' + 10);
                    else if (h >= 'A' && h <= 'F') cp |= static_cast<unsigned>(h - 'A' + 10);
                    else return fail("hex digit");
                    ++pos_;
                }
                append_utf8(out, cp);
                break;
            }
            default:
                --pos_;
                return fail("valid escape");
            }
        }
    }

    static void append_utf8(std::string& out, unsigned cp) {
        if (cp < 0x80) {
            out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }

    bool identifier(std::string& out, const char* what) {
        if (pos_ >= text_.size() || !is_identifier_start(text_[pos_])) return fail(what);
        out.clear();
        while (pos_ < text_.size() && is_identifier_char(text_[pos_])) out.push_back(text_[pos_++]);
        return true;
    }

    static bool is_digit(char c) { return c >= '0' && c <= '9'; }

    void skip_ws() {
        while (pos_ < text_.size() &&
               (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' || text_[pos_] == '\r'))
            ++pos_;
    }

    bool accept(char c) {
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    bool expect(char c, const char* what) { return accept(c) || fail(what); }

    bool fail(std::string what) {
        err_.position = pos_;
        err_.expected = std::move(what);
        if (pos_ >= text_.size()) {
            err_.found = "end of input";
        } else {
            std::string snippet(text_.substr(pos_, 16));
            err_.found = "'" + snippet + "'";
        }
        return false;
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    ParseError err_;
};

inline void write_quoted(std::string& out, std::string_view s) {
    static constexpr char hex[] = "0123456789abcdef";
    out.push_back('\'');
    for (char c : s) {
        switch (c) {
        case '\\': out += "\\\\"; break;
        case '\'': out += "\\'"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        case '\r': out += "\\r"; break;
        case '\b': out += "\\b"; break;
        case '\f': out += "\\f"; break;
        default:
            if (static_cast<unsigned char>(c) < 0x20) {
                out += "\\u00";
                out.push_back(hex[(c >> 4) & 0xf]);
                out.push_back(hex[c & 0xf]);
            } else {
                out.push_back(c);
            }
        }
    }
    out.push_back('\'');
}

inline void write_value(std::string& out, const Value& v) {
    switch (v.kind()) {
    case Value::Kind::null: out += "None"; break;
    case Value::Kind::boolean: out += v.as_bool() ? "True" : "False"; break;
    case Value::Kind::integer: out += std::to_string(v.as_integer()); break;
    case Value::Kind::real: out += format_real(v.as_real()); break;
    case Value::Kind::text: write_quoted(out, v.as_text()); break;
    case Value::Kind::list: {
        out.push_back('[');
        bool first = true;
        for (const auto& e : v.as_list()) {
            if (!first) out += ", ";
            first = false;
            write_value(out, e);
        }
        out.push_back(']');
        break;
    }
    case Value::Kind::map: {
        out.push_back('{');
        bool first = true;
        for (const auto& [k, e] : v.as_map()) {
            if (!first) out += ", ";
            first = false;
            write_quoted(out, k);
            out += ": ";
            write_value(out, e);
        }
        out.push_back('}');
        break;
    }
    }
}

} // namespace detail

/// Strict parse: the whole input (modulo surrounding whitespace) must be one
/// solution expression. Calls keep their textual order.
inline Expected<Solution, ParseError> parse_solution(std::string_view text) {
    return detail::SolutionParser(text).run();
}

/// Canonical text form. Consecutive calls on the same platform share one entry.
inline std::string serialize_solution(const Solution& s) {
    std::string out = "{";
    std::size_t i = 0;
    while (i < s.calls.size()) {
        if (i > 0) out += ", ";
        const std::string& platform = s.calls[i].platform;
        out += platform;
        out += ":[";
        bool first = true;
        for (; i < s.calls.size() && s.calls[i].platform == platform; ++i) {
            if (!first) out += ", ";
            first = false;
            const ToolCall& c = s.calls[i];
            out += c.function;
            out.push_back('(');
            bool first_arg = true;
            for (const auto& [name, v] : c.args) {
                if (!first_arg) out += ", ";
                first_arg = false;
                out += name;
                out.push_back('=');
                detail::write_value(out, v);
            }
            out.push_back(')');
        }
        out.push_back(']');
    }
    out.push_back('}');
    return out;
}

} // namespace ptool
