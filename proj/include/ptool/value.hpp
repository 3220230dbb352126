#pragma once

#include "ptool/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace ptool {

/// Argument value of a tool call: null, boolean, integer, real number, text,
/// list or name-keyed map. Maps keep insertion order so a parsed call
/// serializes back in the order it was written.
class Value {
public:
    using List = std::vector<Value>;
    using Map = std::vector<std::pair<std::string, Value>>;

    enum class Kind { null, boolean, integer, real, text, list, map };

    Value() = default;
    Value(std::nullptr_t) {}
    Value(bool b) : data_(b) {}
    Value(int i) : data_(static_cast<std::int64_t>(i)) {}
    Value(std::int64_t i) : data_(i) {}
    Value(double d) : data_(d) {
        if (!std::isfinite(d)) throw Error(ErrorCode::precondition, "numbers must be finite");
    }
    Value(const char* s) : data_(std::string(s)) {}
    Value(std::string s) : data_(std::move(s)) {}
    Value(List l) : data_(std::move(l)) {}

    static Value map(Map entries) {
        for (std::size_t i = 0; i < entries.size(); ++i)
            for (std::size_t j = i + 1; j < entries.size(); ++j)
                if (entries[i].first == entries[j].first)
                    throw Error(ErrorCode::precondition, "duplicate map key '" + entries[i].first + "'");
        Value v;
        v.data_ = std::move(entries);
        return v;
    }

    [[nodiscard]] Kind kind() const { return static_cast<Kind>(data_.index()); }
    [[nodiscard]] bool is_null() const { return kind() == Kind::null; }
    [[nodiscard]] bool is_bool() const { return kind() == Kind::boolean; }
    [[nodiscard]] bool is_integer() const { return kind() == Kind::integer; }
    [[nodiscard]] bool is_real() const { return kind() == Kind::real; }
    [[nodiscard]] bool is_number() const { return is_integer() || is_real(); }
    [[nodiscard]] bool is_text() const { return kind() == Kind::text; }
    [[nodiscard]] bool is_list() const { return kind() == Kind::list; }
    [[nodiscard]] bool is_map() const { return kind() == Kind::map; }

    [[nodiscard]] bool as_bool() const { return std::get<bool>(data_); }
    [[nodiscard]] std::int64_t as_integer() const { return std::get<std::int64_t>(data_); }
    [[nodiscard]] double as_real() const { return std::get<double>(data_); }
    [[nodiscard]] double as_number() const {
        return is_integer() ? static_cast<double>(as_integer()) : as_real();
    }
    [[nodiscard]] const std::string& as_text() const { return std::get<std::string>(data_); }
    [[nodiscard]] const List& as_list() const { return std::get<List>(data_); }
    [[nodiscard]] const Map& as_map() const { return std::get<Map>(data_); }

    [[nodiscard]] const Value* find(std::string_view key) const {
        if (!is_map()) return nullptr;
        for (const auto& [k, v] : as_map())
            if (k == key) return &v;
        return nullptr;
    }

    friend bool operator==(const Value& a, const Value& b) { return a.data_ == b.data_; }
    friend bool operator!=(const Value& a, const Value& b) { return !(a == b); }

private:
    std::variant<std::nullptr_t, bool, std::int64_t, double, std::string, List, Map> data_{nullptr};
};

inline std::string_view kind_name(Value::Kind k) {
    switch (k) {
    case Value::Kind::null: return "null";
    case Value::Kind::boolean: return "boolean";
    case Value::Kind::integer: return "integer";
    case Value::Kind::real: return "number";
    case Value::Kind::text: return "text";
    case Value::Kind::list: return "list";
    case Value::Kind::map: return "map";
    }
    return "?";
}

inline std::string trim(std::string_view s) {
    constexpr std::string_view ws = " \t\r\n\f\v";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return std::string(s.substr(b, e - b + 1));
}

/// Shortest decimal form that parses back to the same double; always keeps a
/// '.' or exponent so the text still reads as a real number.
inline std::string format_real(double d) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, d);
    std::string s(buf, end);
    if (s.find_first_of(".eE") == std::string::npos) s += ".0";
    return s;
}

/// Trim text, identify integer-valued reals with integers, sort map keys;
/// applied recursively. Idempotent.
inline Value canonicalize_value(const Value& v) {
    switch (v.kind()) {
    case Value::Kind::text:
        return Value(trim(v.as_text()));
    case Value::Kind::real: {
        const double d = v.as_real();
        constexpr double lo = -9223372036854775808.0;  // -2^63
        constexpr double hi = 9223372036854775808.0;   //  2^63
        if (std::trunc(d) == d && d >= lo && d < hi) return Value(static_cast<std::int64_t>(d));
        return v;
    }
    case Value::Kind::list: {
        Value::List out;
        out.reserve(v.as_list().size());
        for (const auto& e : v.as_list()) out.push_back(canonicalize_value(e));
        return Value(std::move(out));
    }
    case Value::Kind::map: {
        Value::Map out;
        out.reserve(v.as_map().size());
        for (const auto& [k, e] : v.as_map()) out.emplace_back(k, canonicalize_value(e));
        std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        return Value::map(std::move(out));
    }
    default:
        return v;
    }
}

inline bool canonical_equal(const Value& a, const Value& b) {
    return canonicalize_value(a) == canonicalize_value(b);
}

/// Plain-text rendering used for substring provenance matching: text as-is,
/// numbers in canonical form, booleans lower-case, composites as JSON.
inline std::string value_text(const Value& v);

inline nlohmann::ordered_json to_json(const Value& v) {
    using J = nlohmann::ordered_json;
    switch (v.kind()) {
    case Value::Kind::null: return nullptr;
    case Value::Kind::boolean: return v.as_bool();
    case Value::Kind::integer: return v.as_integer();
    case Value::Kind::real: return v.as_real();
    case Value::Kind::text: return v.as_text();
    case Value::Kind::list: {
        J arr = J::array();
        for (const auto& e : v.as_list()) arr.push_back(to_json(e));
        return arr;
    }
    case Value::Kind::map: {
        J obj = J::object();
        for (const auto& [k, e] : v.as_map()) obj[k] = to_json(e);
        return obj;
    }
    }
    return nullptr;
}

template <typename Json>
Value value_from_json(const Json& j) {
    if (j.is_null()) return Value(nullptr);
    if (j.is_boolean()) return Value(j.template get<bool>());
    if (j.is_number_unsigned()) {
        const auto u = j.template get<std::uint64_t>();
        if (u > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
            return Value(static_cast<double>(u));
        return Value(static_cast<std::int64_t>(u));
    }
    if (j.is_number_integer()) return Value(j.template get<std::int64_t>());
    if (j.is_number_float()) return Value(j.template get<double>());
    if (j.is_string()) return Value(j.template get<std::string>());
    if (j.is_array()) {
        Value::List out;
        for (const auto& e : j) out.push_back(value_from_json(e));
        return Value(std::move(out));
    }
    Value::Map out;
    for (auto it = j.begin(); it != j.end(); ++it) out.emplace_back(it.key(), value_from_json(it.value()));
    return Value::map(std::move(out));
}

inline std::string value_text(const Value& v) {
    const Value c = canonicalize_value(v);
    switch (c.kind()) {
    case Value::Kind::null: return "null";
    case Value::Kind::boolean: return c.as_bool() ? "true" : "false";
    case Value::Kind::integer: return std::to_string(c.as_integer());
    case Value::Kind::real: return format_real(c.as_real());
    case Value::Kind::text: return c.as_text();
    default: return to_json(c).dump();
    }
}

} // namespace ptool
