#pragma once

#include "fe/model.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fe::text {

std::string trim(std::string_view s);
std::string lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
bool starts_with_ci(std::string_view s, std::string_view prefix);
std::vector<std::string> split_lines(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::vector<std::string> words(std::string_view s);

// Lowercase, drop punctuation, collapse whitespace. Idempotent.
std::string normalize(std::string_view s);

// First word of the instruction, lowercased, punctuation stripped.
std::string leading_verb(std::string_view instruction);

// Replaces typographic double quotes with ASCII ones.
std::string straighten_quotes(std::string_view s);

struct JsonSpan {
    json value;
    std::size_t begin = 0;
    std::size_t end = 0;  // one past the closing brace
};

// The well-formed JSON object that ends last in `s`; among objects ending at
// the same brace, the outermost one.
std::optional<JsonSpan> last_json_object(std::string_view s);

} // namespace fe::text
