#pragma once

#include <string_view>

// Prompt templates from assets/prompts/, compiled in at build time.
namespace fe::assets {

std::string_view verdict_prompt();
std::string_view qa_prompt();
std::string_view entities_prompt();
std::string_view tifa_prompt();

} // namespace fe::assets
