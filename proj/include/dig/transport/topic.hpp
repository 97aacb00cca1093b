#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dig::transport {

// '/'-separated hierarchical filter; '+' matches exactly one level, '#'
// matches any suffix and may only appear as the final level.
struct TopicFilter {
    std::string pattern;

    explicit TopicFilter(std::string p);   // throws std::invalid_argument

    bool matches(std::string_view topic) const;

    static bool valid_filter(std::string_view pattern);
    static bool valid_topic(std::string_view topic);   // concrete, no wildcards
};

bool topic_match(std::string_view filter, std::string_view topic);

std::vector<std::string_view> split_levels(std::string_view s);

} // namespace dig::transport
