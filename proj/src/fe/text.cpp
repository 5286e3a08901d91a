#include "fe/text.hpp"

#include <algorithm>
#include <cctype>

namespace fe::text {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n\f\v");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n\f\v");
    return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](unsigned char x, unsigned char y) {
               return std::tolower(x) == std::tolower(y);
           });
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
    return s.size() >= prefix.size() && iequals(s.substr(0, prefix.size()), prefix);
}

std::vector<std::string> split_lines(std::string_view s) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        auto end = s.find('\n', pos);
        if (end == std::string_view::npos) end = s.size();
        auto line = s.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        out.emplace_back(line);
        pos = end + 1;
    }
    return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        auto end = s.find(sep, pos);
        out.emplace_back(s.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
        if (end == std::string_view::npos) break;
        pos = end + 1;
    }
    return out;
}

std::vector<std::string> words(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(static_cast<char>(c));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::string normalize(std::string_view s) {
    std::string out;
    bool pending_space = false;
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
        } else if (std::ispunct(c)) {
            continue;
        } else {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    return out;
}

std::string leading_verb(std::string_view instruction) {
    auto w = words(instruction);
    if (w.empty()) return {};
    return normalize(w.front());
}

std::string straighten_quotes(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        // U+201C / U+201D are E2 80 9C / E2 80 9D in UTF-8.
        if (i + 2 < s.size() && static_cast<unsigned char>(s[i]) == 0xE2 &&
            static_cast<unsigned char>(s[i + 1]) == 0x80 &&
            (static_cast<unsigned char>(s[i + 2]) == 0x9C || static_cast<unsigned char>(s[i + 2]) == 0x9D)) {
            out.push_back('"');
            i += 2;
        } else {
            out.push_back(s[i]);
        }
    }
    return out;
}

std::optional<JsonSpan> last_json_object(std::string_view s) {
    std::vector<std::size_t> opens;
    std::vector<std::size_t> closes;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '{') opens.push_back(i);
        if (s[i] == '}') closes.push_back(i);
    }
    for (auto c = closes.rbegin(); c != closes.rend(); ++c) {
        for (auto o : opens) {
            if (o >= *c) break;
            auto candidate = s.substr(o, *c - o + 1);
            auto parsed = json::parse(candidate, nullptr, false);
            if (!parsed.is_discarded() && parsed.is_object()) return JsonSpan{std::move(parsed), o, *c + 1};
        }
    }
    return std::nullopt;
}

} // namespace fe::text
