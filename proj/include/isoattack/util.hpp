#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

namespace isoattack {

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

inline std::string trim(std::string_view s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos) return "";
    auto end = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(begin, end - begin + 1));
}

// Trims and collapses internal whitespace runs to a single space.
inline std::string normalize_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_space = true;  // swallow leading whitespace
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!in_space) out.push_back(' ');
            in_space = true;
        } else {
            out.push_back(c);
            in_space = false;
        }
    }
    if (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

inline bool contains_ci(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return true;
    std::string h = to_lower(haystack);
    std::string n = to_lower(needle);
    return h.find(n) != std::string::npos;
}

inline std::size_t count_occurrences_ci(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return 0;
    std::string h = to_lower(haystack);
    std::string n = to_lower(needle);
    std::size_t count = 0;
    for (std::size_t pos = h.find(n); pos != std::string::npos; pos = h.find(n, pos + 1)) {
        ++count;
    }
    return count;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            parts.emplace_back(s.substr(start));
            break;
        }
        parts.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return parts;
}

// Finds the first whole-word, case-insensitive occurrence of any candidate
// token and returns its index in `tokens`, or -1. Word boundaries are
// non-alphanumeric characters.
inline int find_first_token(std::string_view text, const std::vector<std::string>& tokens) {
    std::string lower = to_lower(text);
    std::size_t best_pos = std::string::npos;
    int best_token = -1;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        std::string needle = to_lower(tokens[t]);
        std::size_t pos = 0;
        while ((pos = lower.find(needle, pos)) != std::string::npos) {
            bool left_ok = pos == 0 || !std::isalnum(static_cast<unsigned char>(lower[pos - 1]));
            std::size_t after = pos + needle.size();
            bool right_ok = after >= lower.size() ||
                            !std::isalnum(static_cast<unsigned char>(lower[after]));
            if (left_ok && right_ok) break;
            ++pos;
        }
        if (pos != std::string::npos && pos < best_pos) {
            best_pos = pos;
            best_token = static_cast<int>(t);
        }
    }
    return best_token;
}

// 100*num/den as a percent rounded half-up to 2 decimals, computed in
// integer arithmetic so table values are exact.
inline std::int64_t percent_hundredths(std::int64_t num, std::int64_t den) {
    if (den <= 0) return 0;
    return (20000 * num + den) / (2 * den);
}

inline double round_percent2(std::int64_t num, std::int64_t den) {
    return static_cast<double>(percent_hundredths(num, den)) / 100.0;
}

inline std::string format_percent2(std::int64_t num, std::int64_t den) {
    std::int64_t hundredths = percent_hundredths(num, den);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%lld.%02lld",
                  static_cast<long long>(hundredths / 100),
                  static_cast<long long>(hundredths % 100));
    return buf;
}

// Same 2-decimal half-up rendering for an already-computed value (means,
// deltas). Negative values round away from zero.
inline std::string format_fixed2(double value) {
    double scaled = value * 100.0;
    long long hundredths =
        static_cast<long long>(scaled >= 0 ? scaled + 0.5 : scaled - 0.5);
    long long whole = hundredths / 100;
    long long frac = hundredths % 100;
    if (frac < 0) frac = -frac;
    char buf[48];
    if (hundredths < 0 && whole == 0) {
        std::snprintf(buf, sizeof(buf), "-0.%02lld", frac);
    } else {
        std::snprintf(buf, sizeof(buf), "%lld.%02lld", whole, frac);
    }
    return buf;
}

// Task ids become exchange file names; anything exotic is flattened.
inline std::string sanitize_filename(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') {
            out.push_back(c);
        } else {
            out.push_back('_');
        }
    }
    return out.empty() ? "_" : out;
}

}  // namespace isoattack
