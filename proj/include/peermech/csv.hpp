#pragma once

#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

namespace peermech::csv {

/// Round-trippable decimal text for a double.
inline std::string format(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Splits one line on commas. No quoting: none of our schemas carry commas in fields.
inline std::vector<std::string> split(std::string_view line)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            return out;
        }
        out.emplace_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

inline std::string_view chomp(std::string_view line)
{
    if (!line.empty() && line.back() == '\r')
        line.remove_suffix(1);
    return line;
}

} // namespace peermech::csv
