#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "iqabench/pipeline.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> backend;
    std::optional<std::string> run_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("-c,--config", opts.config_path, "JSON config file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", opts.seed, "override every stage seed");
    cmd->add_option("--backend", opts.backend, "override backend kind (simulated_oracle, chat_http)");
    cmd->add_option("--run-dir", opts.run_dir, "override the run directory");
}

iqa::PipelineConfig load_config(const CommonOpts& opts) {
    iqa::PipelineConfig config = iqa::PipelineConfig::load(opts.config_path);
    if (opts.seed) {
        config.select.sampler.seed = *opts.seed;
        config.plan.planner.seed = *opts.seed;
        config.plan.exemplar_seed = *opts.seed;
        config.backend.oracle_seed = *opts.seed;
    }
    if (opts.backend) config.backend.kind = *opts.backend;
    if (opts.run_dir) config.run_dir = *opts.run_dir;
    config.backend.validate();
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"batch harness for multimodal image quality evaluation"};
    app.require_subcommand(1);

    CommonOpts opts;
    CLI::App* c_select = app.add_subcommand("select", "pick the test images");
    CLI::App* c_plan = app.add_subcommand("plan", "expand the selection into trials");
    CLI::App* c_run = app.add_subcommand("run", "execute planned trials against the backend");
    CLI::App* c_aggregate = app.add_subcommand("aggregate", "scale trial outcomes per group");
    CLI::App* c_report = app.add_subcommand("report", "compute SRCC/PLCC against human scores");
    CLI::App* c_pipeline = app.add_subcommand("pipeline", "run every stage with digest skipping");
    for (CLI::App* cmd : {c_select, c_plan, c_run, c_aggregate, c_report, c_pipeline})
        add_common(cmd, opts);

    CLI11_PARSE(app, argc, argv);

    try {
        iqa::Pipeline pipeline(load_config(opts));
        if (c_pipeline->parsed()) return pipeline.run_all();
        if (c_select->parsed()) pipeline.stage_select();
        else if (c_plan->parsed()) pipeline.stage_plan();
        else if (c_run->parsed()) pipeline.stage_run();
        else if (c_aggregate->parsed()) pipeline.stage_aggregate();
        else if (c_report->parsed()) pipeline.stage_report();
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
