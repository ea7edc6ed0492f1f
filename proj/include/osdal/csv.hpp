#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <system_error>

#include "osdal/common.hpp"

namespace osdal {

// Shortest decimal that round-trips the exact double (std::to_chars);
// locale-free and deterministic, used for every numeric file this project
// writes.
inline std::string format_double(double v) {
    char buf[40];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}

inline double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || p != last)
        throw FormatError(where + ": invalid number '" + s + "'");
    return v;
}

inline long parse_long(const std::string& s, const std::string& where) {
    long v = 0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || p != last)
        throw FormatError(where + ": invalid integer '" + s + "'");
    return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

} // namespace osdal
