#pragma once

#include "fe/model.hpp"

#include <cstddef>
#include <functional>
#include <map>
#include <string>

namespace fe {

// Per-run counts printed by every stage command.
struct StageReport {
    std::string stage;
    std::size_t input = 0;
    std::size_t processed = 0;
    std::size_t kept = 0;
    std::size_t passed_through = 0;  // already rejected on entry
    std::map<std::string, std::size_t> rejected;
    json details = json::object();

    json to_json() const;
};

// Runs fn(0..n-1) on up to `workers` threads. The first exception (by index)
// is rethrown after all workers finish.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

// Throws StageMismatch if any non-rejected record is not at `expected`.
void require_stage(const Manifest& m, Stage expected, std::string_view command);

// Records already rejected on entry count as passed through.
StageReport summarize(const Manifest& before, const Manifest& after, std::string stage_name);

} // namespace fe
