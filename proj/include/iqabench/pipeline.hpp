#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iqabench/aggregate.hpp"
#include "iqabench/dataset.hpp"
#include "iqabench/gateway.hpp"
#include "iqabench/metrics.hpp"
#include "iqabench/planner.hpp"
#include "iqabench/prompts.hpp"
#include "iqabench/sampler.hpp"

namespace iqa {

inline constexpr const char* kToolVersion = "0.1.0";

struct SelectConfig {
    std::string mode = "difficult";  // or "uniform"
    SamplerConfig sampler;
};

struct PlanConfig {
    StimulusMethod stimulus_method = StimulusMethod::Double;
    NlpStrategy nlp_strategy = NlpStrategy::Standard;
    int list_size = 4;
    PlannerConfig planner;
    std::uint64_t exemplar_seed = 0;
};

struct ReportConfig {
    GroupedMetricsOptions metrics;
};

// One JSON config file with a section per stage; CLI flags override fields.
struct PipelineConfig {
    std::string run_dir = "run";
    std::string manifest_path;
    std::string embeddings_path;    // optional unless mode=difficult
    std::string expert_scores_path; // optional unless mode=difficult
    SelectConfig select;
    PlanConfig plan;
    BackendConfig backend;
    AggregateOptions aggregate;
    ReportConfig report;

    static PipelineConfig from_json(const std::string& text);
    static PipelineConfig load(const std::string& path);
    std::string to_json() const;  // canonical snapshot, used for stage digests
};

struct StageRecord {
    std::string status;  // "ok", "skipped", "failed"
    std::string input_digest;
    std::string output_file;
    std::string output_digest;
    std::string error;
};

// Audit record written next to the artifacts; every stage output
// references the digest of its inputs.
struct RunManifest {
    std::string tool_version = kToolVersion;
    std::string created;
    std::string config_snapshot;
    std::map<std::string, std::string> input_digests;
    std::map<std::string, StageRecord> stages;

    std::string to_json() const;
    static RunManifest from_json(const std::string& text);
};

// Executes select -> plan -> run -> aggregate -> report against a run
// directory, skipping stages whose inputs are digest-unchanged.
class Pipeline {
public:
    explicit Pipeline(PipelineConfig config);

    // Individual stages; each reads prior artifacts from the run directory.
    void stage_select();
    void stage_plan();
    void stage_run();
    void stage_aggregate();
    void stage_report();

    // All stages with digest-based skipping; returns process exit status.
    int run_all();

    std::string artifact_path(const std::string& name) const;
    const RunManifest& run_manifest() const { return run_manifest_; }

private:
    void ensure_inputs_loaded();
    std::string stage_input_digest(const std::string& stage) const;
    void record_stage(const std::string& stage, const std::string& status,
                      const std::string& output_file, const std::string& error = "");
    void write_run_manifest() const;

    PipelineConfig config_;
    RunManifest run_manifest_;
    std::optional<Manifest> manifest_;
    std::optional<EmbeddingTable> embeddings_;
    std::optional<ExpertScoreTable> experts_;
};

}  // namespace iqa
