#pragma once

#include <charconv>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <string_view>

namespace spinloop {

/// Shortest decimal string that round-trips the double exactly.
inline std::string dtos(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// Strict double parse: the whole token must be consumed.
inline double parse_double(std::string_view token) {
    std::string s(token);
    if (s.empty()) throw std::invalid_argument("empty number");
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size())
        throw std::invalid_argument("malformed number: '" + s + "'");
    return v;
}

inline std::uint64_t parse_u64(std::string_view token) {
    std::uint64_t v = 0;
    auto res = std::from_chars(token.data(), token.data() + token.size(), v);
    if (res.ec != std::errc{} || res.ptr != token.data() + token.size())
        throw std::invalid_argument("malformed unsigned integer: '" + std::string(token) + "'");
    return v;
}

}  // namespace spinloop
