#pragma once

#include <openssl/sha.h>

#include <array>
#include <cstdio>
#include <string>
#include <string_view>

namespace ptool {

inline std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, SHA256_DIGEST_LENGTH> digest{};
    SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest.data());
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(digest.size() * 2);
    for (unsigned char b : digest) {
        out.push_back(hex[b >> 4]);
        out.push_back(hex[b & 0xf]);
    }
    return out;
}

// Short content-derived id, e.g. stable_id("pl", "shopping/MegaMart") -> "pl-3f2a9c01b4e7".
inline std::string stable_id(std::string_view prefix, std::string_view content) {
    return std::string(prefix) + "-" + sha256_hex(content).substr(0, 12);
}

} // namespace ptool
