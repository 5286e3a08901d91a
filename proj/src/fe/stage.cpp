#include "fe/stage.hpp"

#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace fe {

json StageReport::to_json() const {
    std::size_t total_rejected = 0;
    for (const auto& [reason, n] : rejected) total_rejected += n;
    json j = {{"stage", stage},
            {"input", input},
            {"processed", processed},
            {"kept", kept},
            {"passed_through", passed_through},
            {"rejected", rejected},
            {"rejected_total", total_rejected}};
    for (auto it = details.begin(); it != details.end(); ++it) j[it.key()] = it.value();
    return j;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

void require_stage(const Manifest& m, Stage expected, std::string_view command) {
    for (const auto& r : m.records) {
        if (r.rejected()) continue;
        if (r.stage != expected) {
            throw Error(ErrorCode::StageMismatch,
                        std::string(command) + " expects records at stage '" + std::string(to_string(expected)) +
                            "' but record '" + r.id + "' is at '" + std::string(to_string(r.stage)) + "'");
        }
    }
}

StageReport summarize(const Manifest& before, const Manifest& after, std::string stage_name) {
    StageReport rep;
    rep.stage = std::move(stage_name);
    rep.input = before.records.size();
    for (std::size_t i = 0; i < after.records.size(); ++i) {
        const auto& a = after.records[i];
        if (i < before.records.size() && before.records[i].rejected()) {
            ++rep.passed_through;
            continue;
        }
        ++rep.processed;
        if (a.rejected()) {
            ++rep.rejected[a.rejection->reason];
        } else {
            ++rep.kept;
        }
    }
    return rep;
}

} // namespace fe
