#include "fe/fe.h"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

namespace {

struct Flags {
    std::string in, out, config;
    std::string seed, k, supervision, box_threshold, sim_threshold, per_verb, verbs, metric;
    std::vector<std::string> systems;
};

using Context = std::unique_ptr<fe_context, decltype(&fe_context_destroy)>;

int exit_code(fe_status s) {
    if (s == FE_OK) return 0;
    if (s == FE_ERR_INVALID_ARGUMENT || s == FE_ERR_STAGE_MISMATCH) return 1;
    return 2;
}

int fail(fe_context* ctx, fe_status s) {
    std::cerr << "error (" << fe_status_name(s) << "): " << fe_last_error(ctx) << "\n";
    return exit_code(s);
}

void print(char* json_text) {
    if (!json_text) return;
    std::cout << nlohmann::json::parse(json_text).dump(2) << "\n";
    fe_string_free(json_text);
}

int with_context(const Flags& f, const std::function<fe_status(fe_context*, char**)>& body) {
    fe_context* raw = nullptr;
    if (auto s = fe_context_create(f.config.empty() ? nullptr : f.config.c_str(), &raw); s != FE_OK) {
        return fail(nullptr, s);
    }
    Context ctx(raw, &fe_context_destroy);
    const std::pair<const char*, const std::string*> overrides[] = {
        {"seed", &f.seed},           {"k", &f.k},
        {"supervision", &f.supervision}, {"box_threshold", &f.box_threshold},
        {"sim_threshold", &f.sim_threshold}, {"per_verb", &f.per_verb},
        {"verbs", &f.verbs},         {"metric", &f.metric}};
    for (const auto& [key, value] : overrides) {
        if (value->empty()) continue;
        if (auto s = fe_context_set(ctx.get(), key, value->c_str()); s != FE_OK) return fail(ctx.get(), s);
    }
    for (const auto& sys : f.systems) {
        auto eq = sys.find('=');
        if (eq == std::string::npos) {
            std::cerr << "error: --system expects name=dir\n";
            return 1;
        }
        auto key = "system." + sys.substr(0, eq);
        if (auto s = fe_context_set(ctx.get(), key.c_str(), sys.substr(eq + 1).c_str()); s != FE_OK) {
            return fail(ctx.get(), s);
        }
    }
    char* out = nullptr;
    auto s = body(ctx.get(), &out);
    if (s != FE_OK) return fail(ctx.get(), s);
    print(out);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Instruction-edit dataset curation pipeline"};
    app.require_subcommand(1);
    app.set_version_flag("--version", fe_version());
    Flags f;
    int rc = 0;

    auto common = [&](CLI::App* sub, bool needs_out) {
        sub->add_option("--in", f.in, "Input file")->required();
        auto* out = sub->add_option("--out", f.out, "Output file");
        if (needs_out) out->required();
        sub->add_option("--config", f.config, "key = value config file");
        sub->add_option("--seed", f.seed, "Random seed");
    };

    const char* stages[] = {"verdict", "ground", "inpaint", "rerank", "export", "run-all"};
    for (const char* name : stages) {
        auto* sub = app.add_subcommand(name, std::string(name) == "run-all" ? std::string("Run every stage in order")
                                                                            : std::string("Run the ") + name + " stage");
        common(sub, true);
        sub->add_option("--k", f.k, "Inpainting candidates per record");
        sub->add_option("--supervision", f.supervision, "none | bbox | mask")
            ->check(CLI::IsMember({"none", "bbox", "mask"}, CLI::ignore_case));
        sub->add_option("--box-threshold", f.box_threshold, "Detection confidence threshold");
        sub->callback([&, name] {
            std::string stage = name;
            rc = with_context(f, [&](fe_context* c, char** out) {
                return fe_run_stage(c, stage.c_str(), f.in.c_str(), f.out.c_str(), out);
            });
        });
    }

    auto* testset = app.add_subcommand("testset", "Curate the evaluation set");
    common(testset, true);
    testset->add_option("--sim-threshold", f.sim_threshold, "Drop candidates at or above this similarity");
    testset->add_option("--per-verb", f.per_verb, "Samples per verb");
    testset->add_option("--verbs", f.verbs, "Comma-separated verb list");
    testset->callback([&] {
        rc = with_context(f, [&](fe_context* c, char** out) {
            return fe_testset(c, f.in.c_str(), f.out.c_str(), out);
        });
    });

    auto* tifa = app.add_subcommand("eval-tifa", "Score system outputs with TIFA");
    common(tifa, false);
    tifa->add_option("--system", f.systems, "name=dir with {id}.png outputs (repeatable)");
    tifa->callback([&] {
        rc = with_context(f, [&](fe_context* c, char** out) {
            return fe_eval_tifa(c, f.in.c_str(), f.out.c_str(), out);
        });
    });

    auto* human = app.add_subcommand("eval-human", "H-score and Krippendorff's alpha from a ratings CSV");
    common(human, false);
    human->add_option("--metric", f.metric, "nominal | ordinal")
        ->check(CLI::IsMember({"nominal", "ordinal"}, CLI::ignore_case));
    human->callback([&] {
        rc = with_context(f, [&](fe_context* c, char** out) {
            return fe_eval_human(c, f.in.c_str(), f.out.c_str(), out);
        });
    });

    auto* stats = app.add_subcommand("stats", "Stage and rejection counts for a manifest");
    common(stats, false);
    stats->callback([&] {
        rc = with_context(f, [&](fe_context* c, char** out) {
            return fe_stats(c, f.in.c_str(), out);
        });
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    return rc;
}
