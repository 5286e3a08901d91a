#pragma once

#include "fe/eval.hpp"
#include "fe/export.hpp"
#include "fe/gateway.hpp"
#include "fe/grounding.hpp"
#include "fe/manifest.hpp"
#include "fe/rerank.hpp"
#include "fe/verdict.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace fe {

// Everything a command needs. Sources, lowest precedence first: built-in
// defaults, FE_* environment variables (secrets and endpoints only), the
// key=value config file, then explicit set() calls from flags.
struct RunConfig {
    std::uint64_t seed = 0;
    int k = 3;
    SupervisionMode supervision = SupervisionMode::Mask;
    double box_threshold = default_box_threshold;
    AreaBounds area_bounds;
    int dilation_radius = 0;
    int stroke_px = 4;
    double temperature = 0.0;
    SplitRatios ratios;

    double sim_threshold = 0.7;
    std::size_t per_verb = 20;
    std::vector<std::string> verbs = {"Replace", "Swap", "Add", "Turn", "Change"};
    std::vector<std::string> change_action_blocklist = {"make the person jump", "make the dog look away"};
    AlphaMetric metric = AlphaMetric::Ordinal;

    BackendConfig backend;
    std::filesystem::path mock_script;

    std::filesystem::path training_manifest;
    std::filesystem::path embedding_cache;
    std::filesystem::path magicbrush;
    std::filesystem::path metaphor;
    std::filesystem::path export_dir;
    std::map<std::string, std::filesystem::path> systems;

    static RunConfig defaults();  // defaults plus environment
    void load_file(const std::filesystem::path& path);
    void apply_text(std::string_view text, const std::filesystem::path& base_dir);
    // One key=value setting; relative paths resolve against base_dir.
    void set(std::string_view key, std::string_view value, const std::filesystem::path& base_dir = {});
    void validate() const;
};

// Owns the gateway so every command in a session shares one cache.
class Session {
public:
    explicit Session(RunConfig config);
    Session(RunConfig config, std::shared_ptr<Transport> transport);

    RunConfig& config() { return config_; }
    Gateway& gateway();

    json run_stage(std::string_view stage, const std::filesystem::path& in, const std::filesystem::path& out);
    json run_all(const std::filesystem::path& in, const std::filesystem::path& out);
    json testset(const std::filesystem::path& pool, const std::filesystem::path& out);
    json eval_tifa(const std::filesystem::path& manifest, const std::filesystem::path& out);
    json eval_human(const std::filesystem::path& ratings, const std::filesystem::path& out);

private:
    RunConfig config_;
    std::shared_ptr<Transport> transport_;
    std::unique_ptr<Gateway> gateway_;
};

// Counts per stage and rejection reason, plus the mask-area distribution.
json manifest_stats(const Manifest& manifest);

inline const std::vector<std::string> stage_commands = {"verdict", "ground", "inpaint", "rerank", "export"};

} // namespace fe
