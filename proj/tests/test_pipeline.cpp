#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include <nlohmann/json.hpp>

#include "iqabench/pipeline.hpp"
#include "helpers.hpp"

using namespace iqa;
using testutil::TempDir;
using json = nlohmann::ordered_json;

namespace {

PipelineConfig nr_oracle_config(const TempDir& dir, const std::string& run_dir) {
    const Manifest m = testutil::make_nr_manifest(12, 23, true);
    m.save(dir.file("manifest.jsonl"));
    PipelineConfig cfg;
    cfg.run_dir = dir.file(run_dir);
    cfg.manifest_path = dir.file("manifest.jsonl");
    cfg.select.mode = "uniform";
    cfg.select.sampler.n_select = 8;
    cfg.select.sampler.seed = 4;
    cfg.plan.stimulus_method = StimulusMethod::Double;
    cfg.plan.planner.pair_budget = 7;  // full round-robin: exact order recovery
    cfg.backend.kind = "simulated_oracle";
    cfg.backend.oracle_tie_margin = 0.0;
    return cfg;
}

}  // namespace

TEST_CASE("full NR simulated-oracle pipeline produces a perfect report") {
    TempDir dir("pipeline_nr");
    const PipelineConfig cfg = nr_oracle_config(dir, "run");
    Pipeline pipeline(cfg);
    CHECK(pipeline.run_all() == 0);

    const json report = json::parse(testutil::read_file(pipeline.artifact_path("report.json")));
    CHECK(report.at("global_srcc").get<double>() == doctest::Approx(1.0));
    CHECK(report.at("invalid_trial_rate").get<double>() == 0.0);

    const json manifest =
        json::parse(testutil::read_file(pipeline.artifact_path("run_manifest.json")));
    for (const char* stage : {"select", "plan", "run", "aggregate", "report"})
        CHECK(manifest.at("stages").at(stage).at("status").get<std::string>() == "ok");

    SUBCASE("rerun skips every stage via digests") {
        Pipeline again(cfg);
        CHECK(again.run_all() == 0);
        const json m2 =
            json::parse(testutil::read_file(again.artifact_path("run_manifest.json")));
        for (const char* stage : {"select", "plan", "run", "aggregate", "report"})
            CHECK(m2.at("stages").at(stage).at("status").get<std::string>() == "skipped");
    }
    SUBCASE("identical config and inputs give byte-identical reports") {
        PipelineConfig cfg2 = cfg;
        cfg2.run_dir = dir.file("run2");
        Pipeline other(cfg2);
        CHECK(other.run_all() == 0);
        CHECK(testutil::read_file(other.artifact_path("report.json")) ==
              testutil::read_file(pipeline.artifact_path("report.json")));
    }
    SUBCASE("changing a stage config reruns from that stage") {
        PipelineConfig cfg2 = cfg;
        cfg2.backend.oracle_noise_std = 2.0;
        Pipeline noisy(cfg2);
        CHECK(noisy.run_all() == 0);
        const json m2 =
            json::parse(testutil::read_file(noisy.artifact_path("run_manifest.json")));
        CHECK(m2.at("stages").at("select").at("status").get<std::string>() == "skipped");
        CHECK(m2.at("stages").at("plan").at("status").get<std::string>() == "skipped");
        CHECK(m2.at("stages").at("run").at("status").get<std::string>() == "ok");
    }
}

TEST_CASE("difficult mode without embeddings fails naming the missing input") {
    TempDir dir("pipeline_missing");
    PipelineConfig cfg = nr_oracle_config(dir, "run");
    cfg.select.mode = "difficult";
    Pipeline pipeline(cfg);
    CHECK(pipeline.run_all() == 1);
    const json manifest =
        json::parse(testutil::read_file(pipeline.artifact_path("run_manifest.json")));
    const json& sel = manifest.at("stages").at("select");
    CHECK(sel.at("status").get<std::string>() == "failed");
    CHECK(sel.at("error").get<std::string>().find("embeddings") != std::string::npos);
}

TEST_CASE("FR single-stimulus pipeline averages scores per group") {
    TempDir dir("pipeline_fr");
    const Manifest m = testutil::make_fr_manifest(3, 6, 29);
    m.save(dir.file("manifest.jsonl"));
    PipelineConfig cfg;
    cfg.run_dir = dir.file("run");
    cfg.manifest_path = dir.file("manifest.jsonl");
    cfg.select.mode = "uniform";
    cfg.select.sampler.n_select = 3;
    cfg.select.sampler.k_select = 5;
    cfg.plan.stimulus_method = StimulusMethod::Single;
    cfg.backend.kind = "simulated_oracle";
    Pipeline pipeline(cfg);
    REQUIRE(pipeline.run_all() == 0);
    const json report = json::parse(testutil::read_file(pipeline.artifact_path("report.json")));
    CHECK(report.at("mean_srcc").get<double>() == doctest::Approx(1.0));
    CHECK(report.at("groups").size() == 3);
}

TEST_CASE("config parsing applies defaults and validates") {
    const PipelineConfig cfg = PipelineConfig::from_json(R"({"manifest": "m.jsonl"})");
    CHECK(cfg.select.sampler.n_select == 15);
    CHECK(cfg.select.sampler.lambda == 0.01);
    CHECK(cfg.plan.planner.pair_budget == 6);
    CHECK(cfg.aggregate.thurstone.prior_std == 4.0);
    CHECK(cfg.backend.kind == "simulated_oracle");

    CHECK_THROWS_AS(PipelineConfig::from_json("{}"), Error);  // manifest required
    CHECK_THROWS_AS(
        PipelineConfig::from_json(R"({"manifest":"m","select":{"mode":"mystery"}})"), Error);
    CHECK_THROWS_AS(
        PipelineConfig::from_json(R"({"manifest":"m","backend":{"kind":"nope"}})"), Error);

    const PipelineConfig parsed = PipelineConfig::from_json(
        R"({"manifest":"m","aggregate":{"tie_mode":"discard"},"plan":{"nlp_strategy":"cot"}})");
    CHECK(parsed.aggregate.tie_mode == TieMode::Discard);
    CHECK(parsed.plan.nlp_strategy == NlpStrategy::Cot);
    // snapshot parses back to the same config
    CHECK(PipelineConfig::from_json(parsed.to_json()).to_json() == parsed.to_json());
}

TEST_CASE("run manifest serialization round-trips") {
    RunManifest m;
    m.created = "2000-01-01T00:00:00Z";
    m.config_snapshot = "{\n  \"k\": 1\n}\n";
    m.input_digests["manifest"] = "abc";
    StageRecord rec;
    rec.status = "ok";
    rec.input_digest = "d1";
    rec.output_file = "selection.json";
    rec.output_digest = "d2";
    m.stages["select"] = rec;
    const RunManifest back = RunManifest::from_json(m.to_json());
    CHECK(back.to_json() == m.to_json());
}
