#include "fe/pipeline.hpp"

#include "fe/http_transport.hpp"
#include "fe/mock_backend.hpp"
#include "fe/testset.hpp"
#include "fe/text.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

namespace fe {

namespace fs = std::filesystem;

namespace {

Error bad_value(std::string_view key, std::string_view value, std::string_view want) {
    return Error(ErrorCode::InvalidArgument,
                 "config " + std::string(key) + "='" + std::string(value) + "': expected " + std::string(want));
}

double to_double(std::string_view key, std::string_view value) {
    auto v = text::trim(value);
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) throw bad_value(key, value, "a number");
    return out;
}

long long to_int(std::string_view key, std::string_view value) {
    auto v = text::trim(value);
    long long out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw bad_value(key, value, "an integer");
    return out;
}

std::vector<std::string> to_list(std::string_view value) {
    std::vector<std::string> out;
    for (const auto& item : text::split(value, ',')) {
        auto t = text::trim(item);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

fs::path to_path(std::string_view value, const fs::path& base_dir) {
    fs::path p(text::trim(value));
    if (p.empty()) return p;
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    return p.lexically_normal();
}

std::optional<Capability> capability_named(std::string_view name) {
    for (auto c : all_capabilities) {
        if (to_string(c) == text::lower(name)) return c;
    }
    return std::nullopt;
}

fs::path sibling_dir(const fs::path& out, const char* name) {
    return fs::absolute(out).parent_path() / name;
}

void tag_source(std::vector<EditSample>& records, const char* source) {
    for (auto& r : records) r.extra["source"] = source;
}

} // namespace

RunConfig RunConfig::defaults() {
    RunConfig c;
    c.backend = BackendConfig::from_env();
    return c;
}

void RunConfig::load_file(const fs::path& path) {
    apply_text(read_text_file(path), fs::absolute(path).parent_path());
}

void RunConfig::apply_text(std::string_view text, const fs::path& base_dir) {
    std::size_t line_no = 0;
    for (const auto& raw : text::split_lines(text)) {
        ++line_no;
        auto line = text::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorCode::InvalidArgument, "config line " + std::to_string(line_no) + ": expected key = value");
        }
        set(text::trim(std::string_view(line).substr(0, eq)), text::trim(std::string_view(line).substr(eq + 1)),
            base_dir);
    }
}

void RunConfig::set(std::string_view key_in, std::string_view value, const fs::path& base_dir) {
    auto key = text::lower(text::trim(key_in));
    std::replace(key.begin(), key.end(), '-', '_');
    auto v = text::trim(value);

    if (key == "seed") {
        auto s = to_int(key, v);
        if (s < 0) throw bad_value(key, v, "a non-negative integer");
        seed = static_cast<std::uint64_t>(s);
    } else if (key == "k") {
        auto n = to_int(key, v);
        if (n < 1 || n > 64) throw bad_value(key, v, "an integer in [1, 64]");
        k = static_cast<int>(n);
    } else if (key == "supervision") {
        try {
            supervision = parse_supervision_mode(v);
        } catch (const Error&) {
            throw bad_value(key, v, "none, bbox or mask");
        }
    } else if (key == "box_threshold") {
        box_threshold = to_double(key, v);
    } else if (key == "area_min") {
        area_bounds.min = to_double(key, v);
    } else if (key == "area_max") {
        area_bounds.max = to_double(key, v);
    } else if (key == "dilation_radius") {
        dilation_radius = static_cast<int>(to_int(key, v));
    } else if (key == "stroke_px") {
        stroke_px = static_cast<int>(to_int(key, v));
    } else if (key == "temperature") {
        temperature = to_double(key, v);
    } else if (key == "split_train") {
        ratios.train = to_double(key, v);
    } else if (key == "split_val") {
        ratios.val = to_double(key, v);
    } else if (key == "split_test") {
        ratios.test = to_double(key, v);
    } else if (key == "sim_threshold") {
        sim_threshold = to_double(key, v);
    } else if (key == "per_verb") {
        auto n = to_int(key, v);
        if (n < 1) throw bad_value(key, v, "a positive integer");
        per_verb = static_cast<std::size_t>(n);
    } else if (key == "verbs") {
        verbs = to_list(v);
    } else if (key == "change_action_blocklist") {
        change_action_blocklist = to_list(v);
    } else if (key == "metric") {
        try {
            metric = parse_alpha_metric(v);
        } catch (const Error&) {
            throw bad_value(key, v, "nominal or ordinal");
        }
    } else if (key == "max_parallel") {
        backend.max_parallel = static_cast<int>(to_int(key, v));
    } else if (key == "max_retries") {
        backend.max_retries = static_cast<int>(to_int(key, v));
    } else if (key == "backoff_s") {
        backend.backoff_s = to_double(key, v);
    } else if (key == "timeout_s") {
        backend.timeout_s = to_double(key, v);
    } else if (key == "cache_dir") {
        backend.cache_dir = to_path(v, base_dir).string();
    } else if (key == "url") {
        for (auto c : all_capabilities) backend.base_url[c] = v;
    } else if (key.starts_with("url.")) {
        auto cap = capability_named(std::string_view(key).substr(4));
        if (!cap) throw Error(ErrorCode::InvalidArgument, "config: unknown capability in '" + key + "'");
        backend.base_url[*cap] = v;
    } else if (key == "mock_script") {
        mock_script = to_path(v, base_dir);
    } else if (key == "training_manifest") {
        training_manifest = to_path(v, base_dir);
    } else if (key == "embedding_cache") {
        embedding_cache = to_path(v, base_dir);
    } else if (key == "magicbrush") {
        magicbrush = to_path(v, base_dir);
    } else if (key == "metaphor") {
        metaphor = to_path(v, base_dir);
    } else if (key == "export_dir") {
        export_dir = to_path(v, base_dir);
    } else if (key.starts_with("system.")) {
        auto name = std::string(key.substr(7));
        if (name.empty()) throw Error(ErrorCode::InvalidArgument, "config: empty system name");
        systems[name] = to_path(v, base_dir);
    } else if (key == "api_key") {
        throw Error(ErrorCode::InvalidArgument, "config: api_key is read from FE_API_KEY only");
    } else {
        throw Error(ErrorCode::InvalidArgument, "config: unknown key '" + key + "'");
    }
}

void RunConfig::validate() const {
    backend.validate();
    auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidArgument, m); };
    if (!(box_threshold >= 0.0 && box_threshold <= 1.0)) fail("box_threshold must be in [0, 1]");
    if (!(area_bounds.min >= 0.0 && area_bounds.min < area_bounds.max && area_bounds.max <= 1.0)) {
        fail("area bounds must satisfy 0 <= area_min < area_max <= 1");
    }
    if (dilation_radius < 0) fail("dilation_radius must be >= 0");
    if (stroke_px < 1) fail("stroke_px must be >= 1");
    if (temperature < 0.0) fail("temperature must be >= 0");
    if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
        std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
        fail("split ratios must be non-negative and sum to 1");
    }
    if (!(sim_threshold > 0.0 && sim_threshold <= 1.0)) fail("sim_threshold must be in (0, 1]");
    if (verbs.empty()) fail("verbs must not be empty");
}

Session::Session(RunConfig config) : config_(std::move(config)) {}

Session::Session(RunConfig config, std::shared_ptr<Transport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {}

Gateway& Session::gateway() {
    if (!gateway_) {
        config_.validate();
        if (!transport_) {
            if (!config_.mock_script.empty()) {
                transport_ = ScriptedBackend::from_file(config_.mock_script);
            } else {
                transport_ = std::make_shared<HttpTransport>(config_.backend);
            }
        }
        gateway_ = std::make_unique<Gateway>(config_.backend, transport_);
    }
    return *gateway_;
}

json Session::run_stage(std::string_view stage, const fs::path& in, const fs::path& out) {
    config_.validate();
    if (std::find(stage_commands.begin(), stage_commands.end(), stage) == stage_commands.end()) {
        throw Error(ErrorCode::InvalidArgument, "unknown stage '" + std::string(stage) + "'");
    }
    auto input = load_manifest(in);
    StageReport report;
    Manifest result;
    if (stage == "verdict") {
        result = run_verdict_stage(input, gateway(), VerdictOptions{config_.temperature, 512}, &report);
    } else if (stage == "ground") {
        result = run_ground_stage(input, gateway(), sibling_dir(out, "masks"),
                                  GroundOptions{config_.box_threshold, config_.area_bounds}, &report);
    } else if (stage == "inpaint") {
        CandidateOptions opts;
        opts.k = config_.k;
        opts.base_seed = config_.seed;
        opts.dilation_radius = config_.dilation_radius;
        result = run_inpaint_stage(input, gateway(), sibling_dir(out, "candidates"), opts, &report);
    } else if (stage == "rerank") {
        result = run_rerank_stage(input, gateway(), RerankOptions{config_.temperature, 512}, &report);
    } else if (stage == "export") {
        ExportOptions opts;
        opts.ratios = config_.ratios;
        opts.seed = config_.seed;
        opts.stroke_px = config_.stroke_px;
        auto dir = config_.export_dir.empty() ? sibling_dir(out, "export") : config_.export_dir;
        result = run_export_stage(input, config_.supervision, dir, opts, &report);
    } else {
        throw Error(ErrorCode::InvalidArgument, "unknown stage '" + std::string(stage) + "'");
    }
    save_manifest(result, out);
    return report.to_json();
}

json Session::run_all(const fs::path& in, const fs::path& out) {
    auto dir = fs::absolute(out).parent_path();
    json reports = json::array();
    fs::path current = in;
    for (std::size_t i = 0; i < stage_commands.size(); ++i) {
        const auto& stage = stage_commands[i];
        auto next = i + 1 == stage_commands.size() ? out : dir / (stage + ".jsonl");
        reports.push_back(run_stage(stage, current, next));
        current = next;
    }
    return {{"stages", reports}};
}

json Session::testset(const fs::path& pool_path, const fs::path& out) {
    config_.validate();
    json summary = json::object();
    std::vector<std::string> warnings;
    std::vector<EditSample> records;

    auto pool = load_manifest(pool_path);
    if (config_.training_manifest.empty()) {
        throw Error(ErrorCode::InvalidArgument, "testset needs training_manifest for similarity filtering");
    }
    auto training = load_manifest(config_.training_manifest);
    auto cache = config_.embedding_cache.empty() ? EmbeddingCache{} : EmbeddingCache::load(config_.embedding_cache);
    auto train_vecs = embed_inputs(training.records, gateway(), cache, &warnings);
    auto dedup = dedup_filter(pool.records, train_vecs, gateway(), config_.sim_threshold, &cache);
    if (!config_.embedding_cache.empty()) cache.save(config_.embedding_cache);
    for (auto& w : dedup.warnings) warnings.push_back(std::move(w));
    summary["pool"] = pool.records.size();
    summary["after_dedup"] = dedup.kept.size();

    auto sample = stratified_sample(dedup.kept, config_.verbs, config_.per_verb, config_.seed);
    for (auto& w : sample.warnings) warnings.push_back(std::move(w));
    json buckets = json::object();
    for (const auto& b : sample.buckets) buckets[b.verb] = b.samples.size();
    summary["buckets"] = buckets;
    tag_source(sample.samples, "indomain");
    json sources = {{"indomain", sample.samples.size()}, {"magicbrush", 0}, {"metaphor", 0}};
    records = std::move(sample.samples);

    if (!config_.magicbrush.empty()) {
        auto mb = load_manifest(config_.magicbrush);
        auto kept = magicbrush_filter(mb.records, config_.change_action_blocklist);
        tag_source(kept, "magicbrush");
        sources["magicbrush"] = kept.size();
        records.insert(records.end(), kept.begin(), kept.end());
    }
    if (!config_.metaphor.empty()) {
        auto mp = load_manifest(config_.metaphor);
        tag_source(mp.records, "metaphor");
        sources["metaphor"] = mp.records.size();
        records.insert(records.end(), mp.records.begin(), mp.records.end());
    }

    std::set<std::string> ids;
    for (const auto& r : records) {
        if (!ids.insert(r.id).second) {
            throw Error(ErrorCode::DuplicateId, "test set id '" + r.id + "' appears in more than one source");
        }
    }
    save_manifest(Manifest{std::move(records)}, out);
    summary["sources"] = sources;
    summary["total"] = ids.size();
    summary["warnings"] = warnings;
    return summary;
}

json Session::eval_tifa(const fs::path& manifest_path, const fs::path& out) {
    config_.validate();
    if (config_.systems.empty()) throw Error(ErrorCode::InvalidArgument, "eval-tifa needs at least one system");
    auto manifest = load_manifest(manifest_path);
    std::vector<SystemOutputs> systems;
    for (const auto& [name, dir] : config_.systems) {
        SystemOutputs s{name, {}};
        for (const auto& r : manifest.records) {
            auto p = dir / (r.id + ".png");
            if (fs::exists(p)) s.images[r.id] = p;
        }
        systems.push_back(std::move(s));
    }
    auto report = tifa_corpus(manifest, systems, gateway()).to_json();
    if (!out.empty()) write_file_atomic(out, report.dump(2) + "\n");
    return report;
}

json Session::eval_human(const fs::path& ratings, const fs::path& out) {
    auto table = load_ratings(ratings);
    auto report = human_eval_report(table);
    auto key = config_.metric == AlphaMetric::Nominal ? "alpha_nominal" : "alpha_ordinal";
    report["metric"] = config_.metric == AlphaMetric::Nominal ? "nominal" : "ordinal";
    report["alpha"] = report[key];
    if (!out.empty()) write_file_atomic(out, report.dump(2) + "\n");
    return report;
}

json manifest_stats(const Manifest& manifest) {
    json by_stage = json::object();
    for (auto s : {Stage::Raw, Stage::Verdicted, Stage::Grounded, Stage::Inpainted, Stage::Selected, Stage::Exported}) {
        by_stage[std::string(to_string(s))] = 0;
    }
    std::map<std::string, std::size_t> rejected;
    std::size_t kept = 0, rejected_total = 0;
    std::vector<double> areas;
    for (const auto& r : manifest.records) {
        auto& n = by_stage[std::string(to_string(r.stage))];
        n = n.get<std::size_t>() + 1;
        if (r.rejected()) {
            ++rejected[r.rejection->reason];
            ++rejected_total;
        } else {
            ++kept;
        }
        if (r.mask_area_fraction) areas.push_back(*r.mask_area_fraction);
    }
    json area = {{"count", areas.size()}, {"min", 0.0}, {"max", 0.0}, {"mean", 0.0}, {"median", 0.0}};
    if (!areas.empty()) {
        std::sort(areas.begin(), areas.end());
        double sum = 0.0;
        for (double a : areas) sum += a;
        std::size_t m = areas.size();
        area["min"] = areas.front();
        area["max"] = areas.back();
        area["mean"] = sum / static_cast<double>(m);
        area["median"] = m % 2 ? areas[m / 2] : (areas[m / 2 - 1] + areas[m / 2]) / 2.0;
    }
    return {{"total", manifest.records.size()},
            {"kept", kept},
            {"rejected_total", rejected_total},
            {"rejected", rejected},
            {"by_stage", by_stage},
            {"mask_area", area}};
}

} // namespace fe
