#include "doctest.h"

#include "fe/pipeline.hpp"
#include "fe/testset.hpp"
#include "support.hpp"

#include <cstdlib>

using namespace fe;
using fe::testing::TempDir;

namespace {

struct EnvGuard {
    std::string name;
    explicit EnvGuard(std::string n, const char* value) : name(std::move(n)) { setenv(name.c_str(), value, 1); }
    ~EnvGuard() { unsetenv(name.c_str()); }
};

RunConfig fixture_config(const std::filesystem::path& dir) {
    auto cfg = RunConfig::defaults();
    cfg.load_file(dir / "config.txt");
    return cfg;
}

} // namespace

TEST_CASE("config text parsing and validation") {
    RunConfig c;
    c.apply_text("# comment\n\nseed = 9\nk=5\nsupervision = bbox\nbox-threshold = 0.5\nverbs = Add, Turn\n"
                 "system.ours = out/ours\nurl = http://127.0.0.1:9000\nurl.vqa = http://127.0.0.1:9001\n"
                 "metric = nominal\nmock_script = m.json\n",
                 "/base");
    CHECK(c.seed == 9);
    CHECK(c.k == 5);
    CHECK(c.supervision == SupervisionMode::BBox);
    CHECK(c.box_threshold == 0.5);
    CHECK(c.verbs == std::vector<std::string>{"Add", "Turn"});
    CHECK(c.systems.at("ours") == "/base/out/ours");
    CHECK(c.mock_script == "/base/m.json");
    CHECK(c.backend.base_url.at(Capability::Chat) == "http://127.0.0.1:9000");
    CHECK(c.backend.base_url.at(Capability::Vqa) == "http://127.0.0.1:9001");
    CHECK(c.metric == AlphaMetric::Nominal);
    CHECK_NOTHROW(c.validate());

    auto code_of = [](const std::string& text) {
        RunConfig r;
        try {
            r.apply_text(text, "/");
            r.validate();
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::Internal;
    };
    CHECK(code_of("api_key = secret") == ErrorCode::InvalidArgument);
    CHECK(code_of("colour = blue") == ErrorCode::InvalidArgument);
    CHECK(code_of("k = 0") == ErrorCode::InvalidArgument);
    CHECK(code_of("k = three") == ErrorCode::InvalidArgument);
    CHECK(code_of("just a line") == ErrorCode::InvalidArgument);
    CHECK(code_of("split_train = 0.9") == ErrorCode::InvalidArgument);
    CHECK(code_of("sim_threshold = 0") == ErrorCode::InvalidArgument);
    CHECK(code_of("area_min = 0.5\narea_max = 0.4") == ErrorCode::InvalidArgument);
    CHECK(code_of("url.teleport = http://x:1") == ErrorCode::InvalidArgument);
    CHECK(code_of("supervision = scribble") == ErrorCode::InvalidArgument);
    CHECK(code_of("metric = interval") == ErrorCode::InvalidArgument);
}

TEST_CASE("config precedence: defaults < env < file < flags") {
    TempDir dir;
    EnvGuard cache("FE_CACHE_DIR", "/from/env");
    EnvGuard key("FE_API_KEY", "env-secret");
    auto c = RunConfig::defaults();
    CHECK(c.backend.cache_dir == "/from/env");
    CHECK(c.backend.api_key == "env-secret");
    write_file_atomic(dir / "c.txt", std::string_view("cache_dir = cache\nseed = 3\n"));
    c.load_file(dir / "c.txt");
    CHECK(std::filesystem::path(c.backend.cache_dir) == (dir / "cache").lexically_normal());
    CHECK(c.seed == 3);
    c.set("seed", "4");
    c.set("cache-dir", "/from/flag");
    CHECK(c.seed == 4);
    CHECK(c.backend.cache_dir == "/from/flag");
    CHECK(c.backend.api_key == "env-secret");
}

TEST_CASE("run-all over the scripted fixture") {
    TempDir dir;
    fe::testing::stage_e2e_fixture(dir.path());
    Session s(fixture_config(dir.path()));
    auto summary = s.run_all(dir / "raw.jsonl", dir / "run" / "final.jsonl");
    REQUIRE(summary["stages"].size() == 5);
    CHECK(summary["stages"][0]["rejected"]["infeasible"] == 1);

    auto m = load_manifest(dir / "run" / "final.jsonl");
    REQUIRE(m.records.size() == 5);
    std::map<std::string, const EditSample*> by_id;
    for (const auto& r : m.records) by_id[r.id] = &r;
    CHECK(by_id["r1"]->stage == Stage::Exported);
    CHECK(by_id["r1"]->scores == std::vector<int>{1, 2, 2});
    CHECK(by_id["r1"]->selected == 1u);
    CHECK(by_id["r2"]->scores == std::vector<int>{2, 2, 1});
    CHECK(by_id["r2"]->selected == 0u);
    CHECK(by_id["r3"]->rejection->reason == "infeasible");
    CHECK(by_id["r3"]->stage == Stage::Raw);
    CHECK(by_id["r4"]->rejection->reason == "no_grounding");
    CHECK(by_id["r4"]->stage == Stage::Verdicted);
    CHECK(by_id["r5"]->scores == std::vector<int>{1, 1, 2});
    CHECK(by_id["r5"]->selected == 2u);
    CHECK(by_id["r5"]->extra.at("source_batch") == "synthetic-01");
    for (auto stage : {"verdict", "ground", "inpaint", "rerank"}) {
        CHECK(std::filesystem::exists(dir / "run" / (std::string(stage) + ".jsonl")));
    }
    CHECK(std::filesystem::exists(dir / "run" / "export" / "index.jsonl"));
    CHECK(std::filesystem::exists(dir / "run" / "masks" / "r1.mask.png"));
    CHECK(std::filesystem::exists(dir / "run" / "candidates" / "r5.cand2.png"));

    auto stats = manifest_stats(m);
    CHECK(stats["total"] == 5);
    CHECK(stats["kept"] == 3);
    CHECK(stats["rejected_total"] == 2);
    CHECK(stats["by_stage"]["exported"] == 3);
    CHECK(stats["mask_area"]["count"] == 3);

    // Each stage can also be invoked on its own and refuses the wrong input.
    Session again(fixture_config(dir.path()));
    auto v = again.run_stage("verdict", dir / "raw.jsonl", dir / "solo" / "v.jsonl");
    CHECK(v["kept"] == 4);
    try {
        again.run_stage("rerank", dir / "solo" / "v.jsonl", dir / "solo" / "r.jsonl");
        FAIL("expected stage mismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::StageMismatch);
    }
    CHECK_THROWS_AS(again.run_stage("paint", dir / "raw.jsonl", dir / "solo" / "x.jsonl"), Error);
}

TEST_CASE("stats on hand-built manifests") {
    Manifest empty;
    auto e = manifest_stats(empty);
    CHECK(e["total"] == 0);
    CHECK(e["kept"] == 0);
    CHECK(e["rejected"].empty());
    CHECK(e["by_stage"].size() == 6);
    CHECK(e["mask_area"]["count"] == 0);

    Manifest m;
    for (int i = 0; i < 3; ++i) {
        auto r = fe::testing::sample("x" + std::to_string(i), "c", "i", "e");
        reject(r, Stage::Verdicted, "infeasible", "");
        m.records.push_back(r);
    }
    for (double a : {0.1, 0.4}) {
        auto r = fe::testing::sample("g" + std::to_string(a), "c", "i", "e");
        r.stage = Stage::Grounded;
        r.mask_area_fraction = a;
        m.records.push_back(r);
    }
    auto s = manifest_stats(m);
    CHECK(s["rejected"] == json{{"infeasible", 3}});
    CHECK(s["kept"].get<int>() + s["rejected_total"].get<int>() == s["total"].get<int>());
    CHECK(s["mask_area"]["median"].get<double>() == doctest::Approx(0.25));
    CHECK(s["mask_area"]["min"] == 0.1);
}

TEST_CASE("testset session combines sources") {
    TempDir dir;
    auto rec = [&](const std::string& id, const std::string& instr, int variant) {
        auto r = fe::testing::sample(id, "c", instr, "e");
        r.input.path = dir / "img" / (id + ".png");
        save_png(r.input.path, fe::testing::scene(8, 8, variant));
        return r;
    };
    Manifest training{{rec("t0", "Add a hat", 0)}};
    Manifest pool{{rec("p_dup", "Add a cap", 0), rec("p_add", "Add a dog", 20), rec("p_turn", "Turn it red", 30),
                   rec("p_swap", "Swap the cups", 40)}};
    Manifest mb{{rec("mb1", "Make the teddy bear black.", 1), rec("mb2", "Make the person jump", 2)}};
    Manifest meta{{rec("mt1", "Turn time into a river", 3)}};
    save_manifest(training, dir / "train.jsonl");
    save_manifest(pool, dir / "pool.jsonl");
    save_manifest(mb, dir / "mb.jsonl");
    save_manifest(meta, dir / "meta.jsonl");

    RunConfig cfg;
    cfg.backend = fe::testing::fast_config();
    cfg.apply_text("training_manifest = train.jsonl\nmagicbrush = mb.jsonl\nmetaphor = meta.jsonl\n"
                   "embedding_cache = emb.csv\nper_verb = 1\nsim_threshold = 0.999\nverbs = Add, Turn, Replace\n",
                   dir.path());
    Session s(cfg, fe::testing::scripted(json::object()));
    auto summary = s.testset(dir / "pool.jsonl", dir / "test.jsonl");
    CHECK(summary["pool"] == 4);
    CHECK(summary["after_dedup"] == 3);
    CHECK(summary["buckets"] == json{{"Add", 1}, {"Turn", 1}, {"Replace", 0}});
    CHECK(summary["sources"] == json{{"indomain", 2}, {"magicbrush", 1}, {"metaphor", 1}});
    CHECK(summary["total"] == 4);
    CHECK(summary["warnings"].size() == 1);
    auto out = load_manifest(dir / "test.jsonl");
    std::vector<std::string> ids;
    for (const auto& r : out.records) ids.push_back(r.id);
    CHECK(ids == std::vector<std::string>{"p_add", "p_turn", "mb1", "mt1"});
    CHECK(out.records[2].extra.at("source") == "magicbrush");
    CHECK(std::filesystem::exists(dir / "emb.csv"));
    // p_dup shares t0's bytes, so five images give four digests.
    CHECK(EmbeddingCache::load(dir / "emb.csv").size() == 4);

    RunConfig bare;
    bare.backend = fe::testing::fast_config();
    Session no_train(bare, fe::testing::scripted(json::object()));
    CHECK_THROWS_AS(no_train.testset(dir / "pool.jsonl", dir / "x.jsonl"), Error);

    // The same id in two sources is refused.
    Manifest clash{{rec("p_add", "Turn time into a river", 3)}};
    save_manifest(clash, dir / "meta.jsonl");
    Session dup(cfg, fe::testing::scripted(json::object()));
    try {
        dup.testset(dir / "pool.jsonl", dir / "y.jsonl");
        FAIL("expected duplicate id");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DuplicateId);
    }
}

TEST_CASE("eval commands write reports") {
    TempDir dir;
    write_file_atomic(dir / "r.csv", std::string_view("item_id,rater_id,label\na,x,Yes\na,y,Yes\nb,x,No\nb,y,No\nc,x,Yes\nc,y,No\n"));
    RunConfig cfg;
    cfg.set("metric", "nominal");
    Session s(cfg, fe::testing::scripted(json::object()));
    auto h = s.eval_human(dir / "r.csv", dir / "h.json");
    CHECK(h["metric"] == "nominal");
    CHECK(h["alpha"].get<double>() == doctest::Approx(4.0 / 9.0));
    CHECK(json::parse(read_text_file(dir / "h.json")) == h);

    Manifest m{{fe::testing::sample("r1", "c", "i", "A red ball")}};
    save_manifest(m, dir / "test.jsonl");
    save_png(dir / "ours" / "r1.png", fe::testing::scene(8, 8, 0));
    json script = {{"chat", json::array({{{"match", "Caption: A red ball"},
                                          {"replies", {"Question: Is there a ball?\nChoices: yes, no\nAnswer: yes"}}}})},
                   {"vqa", json::array({{{"question", "Is there a ball?"}, {"answer", "yes"}}})}};
    RunConfig tc;
    tc.backend = fe::testing::fast_config();
    tc.apply_text("system.ours = ours\nsystem.none = missing\n", dir.path());
    Session t(tc, fe::testing::scripted(script));
    CHECK_THROWS_AS(t.eval_tifa(dir / "test.jsonl", dir / "t.json"), Error);
    tc.systems.erase("none");
    Session t2(tc, fe::testing::scripted(script));
    auto report = t2.eval_tifa(dir / "test.jsonl", dir / "t.json");
    CHECK(report["systems"][0]["mean"] == 1.0);
    CHECK(report["low_coverage"] == json::array({"r1"}));
    CHECK(std::filesystem::exists(dir / "t.json"));

    RunConfig none;
    Session empty(none, fe::testing::scripted(json::object()));
    CHECK_THROWS_AS(empty.eval_tifa(dir / "test.jsonl", {}), Error);
}
