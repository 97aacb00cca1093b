#include "dig/transport/topic.hpp"

#include <stdexcept>

namespace dig::transport {

std::vector<std::string_view> split_levels(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find('/', start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

bool TopicFilter::valid_filter(std::string_view pattern) {
    if (pattern.empty()) return false;
    auto levels = split_levels(pattern);
    for (std::size_t i = 0; i < levels.size(); ++i) {
        auto l = levels[i];
        if (l == "#") {
            if (i + 1 != levels.size()) return false;   // '#' terminal only
        } else if (l.find('#') != std::string_view::npos) {
            return false;
        } else if (l.find('+') != std::string_view::npos && l != "+") {
            return false;   // '+' occupies a whole level
        }
    }
    return true;
}

bool TopicFilter::valid_topic(std::string_view topic) {
    if (topic.empty()) return false;
    return topic.find('+') == std::string_view::npos &&
           topic.find('#') == std::string_view::npos;
}

TopicFilter::TopicFilter(std::string p) : pattern(std::move(p)) {
    if (!valid_filter(pattern))
        throw std::invalid_argument("malformed topic filter: " + pattern);
}

bool TopicFilter::matches(std::string_view topic) const {
    return topic_match(pattern, topic);
}

bool topic_match(std::string_view filter, std::string_view topic) {
    auto f = split_levels(filter);
    auto t = split_levels(topic);
    // wildcard first levels never match '$'-prefixed system topics
    if (!t.empty() && !t[0].empty() && t[0][0] == '$' && !f.empty() &&
        (f[0] == "+" || f[0] == "#"))
        return false;
    std::size_t i = 0;
    for (; i < f.size(); ++i) {
        if (f[i] == "#") return true;
        if (i >= t.size()) return false;
        if (f[i] == "+") continue;
        if (f[i] != t[i]) return false;
    }
    return i == t.size();
}

} // namespace dig::transport
