#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace circuitgcl::text {

inline std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_space(s[i])) ++i;
        const std::size_t start = i;
        while (i < s.size() && !is_space(s[i])) ++i;
        if (i > start) out.emplace_back(s.substr(start, i - start));
    }
    return out;
}

/// Splits on '\n'; a final line without terminator is kept.
inline std::vector<std::string_view> lines(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start < text.size()) {
        const std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            out.push_back(text.substr(start));
            break;
        }
        out.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return out;
}

/// SPICE number: mantissa with optional scale suffix (f p n u m k meg g t, any case)
/// followed by optional unit letters, e.g. "2e-18", "1.5fF", "3meg".
inline std::optional<double> parse_spice_number(std::string_view tok) {
    double mantissa = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, mantissa);
    if (ec != std::errc() || ptr == first) return std::nullopt;
    std::string rest = lower(std::string_view(ptr, static_cast<std::size_t>(last - ptr)));
    double scale = 1.0;
    std::size_t used = 0;
    if (rest.rfind("meg", 0) == 0) {
        scale = 1e6;
        used = 3;
    } else if (!rest.empty()) {
        switch (rest[0]) {
            case 'a': scale = 1e-18; used = 1; break;
            case 'f': scale = 1e-15; used = 1; break;
            case 'p': scale = 1e-12; used = 1; break;
            case 'n': scale = 1e-9; used = 1; break;
            case 'u': scale = 1e-6; used = 1; break;
            case 'm': scale = 1e-3; used = 1; break;
            case 'k': scale = 1e3; used = 1; break;
            case 'g': scale = 1e9; used = 1; break;
            case 't': scale = 1e12; used = 1; break;
            default: break;
        }
    }
    for (std::size_t i = used; i < rest.size(); ++i) {
        if (!std::isalpha(static_cast<unsigned char>(rest[i]))) return std::nullopt;
    }
    const double v = mantissa * scale;
    if (!std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace circuitgcl::text
