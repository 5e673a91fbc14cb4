#include "iqabench/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "iqabench/error.hpp"
#include "iqabench/hash.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace iqa {

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void spit(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + path + "'");
        out << content;
    }
    fs::rename(tmp, path);
}

std::string iso_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string to_string(DiversityMode m) {
    return m == DiversityMode::MinToSet ? "min_to_set" : "mean_to_set";
}

DiversityMode diversity_mode_from_string(const std::string& s) {
    if (s == "min_to_set") return DiversityMode::MinToSet;
    if (s == "mean_to_set") return DiversityMode::MeanToSet;
    throw Error("unknown diversity mode '" + s + "'");
}

std::string to_string(TieMode m) { return m == TieMode::Half ? "half" : "discard"; }

TieMode tie_mode_from_string(const std::string& s) {
    if (s == "half") return TieMode::Half;
    if (s == "discard") return TieMode::Discard;
    throw Error("unknown tie mode '" + s + "'");
}

json config_json(const PipelineConfig& c) {
    json j;
    j["run_dir"] = c.run_dir;
    j["manifest"] = c.manifest_path;
    j["embeddings"] = c.embeddings_path;
    j["expert_scores"] = c.expert_scores_path;

    json sel;
    sel["mode"] = c.select.mode;
    sel["n_select"] = c.select.sampler.n_select;
    sel["k_select"] = c.select.sampler.k_select;
    sel["lambda"] = c.select.sampler.lambda;
    sel["epsilon"] = c.select.sampler.epsilon;
    sel["diversity_mode"] = to_string(c.select.sampler.diversity_mode);
    sel["seed"] = c.select.sampler.seed;
    sel["variance_normalize"] = c.select.sampler.variance_normalize;
    j["select"] = std::move(sel);

    json pl;
    pl["stimulus_method"] = to_string(c.plan.stimulus_method);
    pl["nlp_strategy"] = to_string(c.plan.nlp_strategy);
    pl["list_size"] = c.plan.list_size;
    pl["pair_budget"] = c.plan.planner.pair_budget;
    pl["seed"] = c.plan.planner.seed;
    pl["exemplar_seed"] = c.plan.exemplar_seed;
    j["plan"] = std::move(pl);

    json be;
    be["kind"] = c.backend.kind;
    be["endpoint"] = c.backend.endpoint;
    be["auth_env"] = c.backend.auth_env;
    be["model"] = c.backend.model;
    be["temperature"] = c.backend.temperature;
    be["max_tokens"] = c.backend.max_tokens;
    be["max_attempts"] = c.backend.max_attempts;
    be["backoff_base_ms"] = c.backend.backoff_base_ms;
    be["parallelism"] = c.backend.parallelism;
    be["oracle_noise_std"] = c.backend.oracle_noise_std;
    be["oracle_seed"] = c.backend.oracle_seed;
    be["oracle_tie_margin"] = c.backend.oracle_tie_margin;
    j["backend"] = std::move(be);

    json ag;
    ag["prior_std"] = c.aggregate.thurstone.prior_std;
    ag["tol"] = c.aggregate.thurstone.tol;
    ag["max_iter"] = c.aggregate.thurstone.max_iter;
    ag["tie_mode"] = to_string(c.aggregate.tie_mode);
    j["aggregate"] = std::move(ag);

    json rp;
    rp["global_logistic_fit"] = c.report.metrics.global_logistic_fit;
    j["report"] = std::move(rp);
    return j;
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    PipelineConfig c;
    maybe(j, "run_dir", c.run_dir);
    maybe(j, "manifest", c.manifest_path);
    maybe(j, "embeddings", c.embeddings_path);
    maybe(j, "expert_scores", c.expert_scores_path);
    if (j.contains("select")) {
        const json& s = j["select"];
        maybe(s, "mode", c.select.mode);
        maybe(s, "n_select", c.select.sampler.n_select);
        maybe(s, "k_select", c.select.sampler.k_select);
        maybe(s, "lambda", c.select.sampler.lambda);
        maybe(s, "epsilon", c.select.sampler.epsilon);
        if (s.contains("diversity_mode"))
            c.select.sampler.diversity_mode =
                diversity_mode_from_string(s["diversity_mode"].get<std::string>());
        maybe(s, "seed", c.select.sampler.seed);
        maybe(s, "variance_normalize", c.select.sampler.variance_normalize);
        if (c.select.mode != "difficult" && c.select.mode != "uniform")
            throw Error("select: unknown mode '" + c.select.mode + "'");
    }
    if (j.contains("plan")) {
        const json& p = j["plan"];
        if (p.contains("stimulus_method"))
            c.plan.stimulus_method =
                stimulus_method_from_string(p["stimulus_method"].get<std::string>());
        if (p.contains("nlp_strategy"))
            c.plan.nlp_strategy = nlp_strategy_from_string(p["nlp_strategy"].get<std::string>());
        maybe(p, "list_size", c.plan.list_size);
        maybe(p, "pair_budget", c.plan.planner.pair_budget);
        maybe(p, "seed", c.plan.planner.seed);
        maybe(p, "exemplar_seed", c.plan.exemplar_seed);
    }
    if (j.contains("backend")) {
        const json& b = j["backend"];
        maybe(b, "kind", c.backend.kind);
        maybe(b, "endpoint", c.backend.endpoint);
        maybe(b, "auth_env", c.backend.auth_env);
        maybe(b, "model", c.backend.model);
        maybe(b, "temperature", c.backend.temperature);
        maybe(b, "max_tokens", c.backend.max_tokens);
        maybe(b, "max_attempts", c.backend.max_attempts);
        maybe(b, "backoff_base_ms", c.backend.backoff_base_ms);
        maybe(b, "parallelism", c.backend.parallelism);
        maybe(b, "oracle_noise_std", c.backend.oracle_noise_std);
        maybe(b, "oracle_seed", c.backend.oracle_seed);
        maybe(b, "oracle_tie_margin", c.backend.oracle_tie_margin);
    }
    if (j.contains("aggregate")) {
        const json& a = j["aggregate"];
        maybe(a, "prior_std", c.aggregate.thurstone.prior_std);
        maybe(a, "tol", c.aggregate.thurstone.tol);
        maybe(a, "max_iter", c.aggregate.thurstone.max_iter);
        if (a.contains("tie_mode"))
            c.aggregate.tie_mode = tie_mode_from_string(a["tie_mode"].get<std::string>());
    }
    if (j.contains("report")) {
        maybe(j["report"], "global_logistic_fit", c.report.metrics.global_logistic_fit);
    }
    c.backend.validate();
    if (c.manifest_path.empty()) throw Error("config: 'manifest' is required");
    return c;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    return from_json(slurp(path));
}

std::string PipelineConfig::to_json() const { return config_json(*this).dump(2) + "\n"; }

std::string RunManifest::to_json() const {
    json j;
    j["tool_version"] = tool_version;
    j["created"] = created;
    j["config"] = json::parse(config_snapshot);
    j["inputs"] = input_digests;
    j["stages"] = json::object();
    for (const auto& [name, rec] : stages) {
        json s;
        s["status"] = rec.status;
        s["input_digest"] = rec.input_digest;
        s["output_file"] = rec.output_file;
        s["output_digest"] = rec.output_digest;
        if (!rec.error.empty()) s["error"] = rec.error;
        j["stages"][name] = std::move(s);
    }
    return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
    json j = json::parse(text);
    RunManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.created = j.at("created").get<std::string>();
    m.config_snapshot = j.at("config").dump(2) + "\n";
    m.input_digests = j.at("inputs").get<std::map<std::string, std::string>>();
    for (const auto& [name, s] : j.at("stages").items()) {
        StageRecord rec;
        rec.status = s.at("status").get<std::string>();
        rec.input_digest = s.at("input_digest").get<std::string>();
        rec.output_file = s.at("output_file").get<std::string>();
        rec.output_digest = s.at("output_digest").get<std::string>();
        if (s.contains("error")) rec.error = s.at("error").get<std::string>();
        m.stages[name] = std::move(rec);
    }
    return m;
}

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
    fs::create_directories(config_.run_dir);
    run_manifest_.created = iso_now();
    run_manifest_.config_snapshot = config_.to_json();
}

std::string Pipeline::artifact_path(const std::string& name) const {
    return (fs::path(config_.run_dir) / name).string();
}

void Pipeline::ensure_inputs_loaded() {
    if (manifest_) return;
    if (!fs::exists(config_.manifest_path))
        throw Error("missing input: manifest '" + config_.manifest_path + "'");
    manifest_ = Manifest::load(config_.manifest_path);
    run_manifest_.input_digests["manifest"] = sha256_file_hex(config_.manifest_path);
    if (!config_.embeddings_path.empty() && fs::exists(config_.embeddings_path))
        run_manifest_.input_digests["embeddings"] = sha256_file_hex(config_.embeddings_path);
    if (!config_.expert_scores_path.empty() && fs::exists(config_.expert_scores_path))
        run_manifest_.input_digests["expert_scores"] = sha256_file_hex(config_.expert_scores_path);
}

std::string Pipeline::stage_input_digest(const std::string& stage) const {
    const json cfg = config_json(config_);
    std::string material = stage + "\n";
    auto add_file = [&material](const std::string& path) {
        material += fs::exists(path) ? sha256_file_hex(path) : std::string("absent");
        material += "\n";
    };
    if (stage == "select") {
        material += cfg["select"].dump() + "\n";
        add_file(config_.manifest_path);
        if (config_.select.mode == "difficult") {
            add_file(config_.embeddings_path);
            add_file(config_.expert_scores_path);
        }
    } else if (stage == "plan") {
        material += cfg["plan"].dump() + "\n";
        add_file(config_.manifest_path);
        add_file(artifact_path("selection.json"));
    } else if (stage == "run") {
        material += cfg["backend"].dump() + "\n";
        add_file(config_.manifest_path);
        add_file(artifact_path("plans.jsonl"));
    } else if (stage == "aggregate") {
        material += cfg["aggregate"].dump() + "\n";
        add_file(artifact_path("results.jsonl"));
    } else if (stage == "report") {
        material += cfg["report"].dump() + "\n";
        add_file(config_.manifest_path);
        add_file(artifact_path("scale.json"));
    } else {
        throw Error("unknown stage '" + stage + "'");
    }
    return sha256_hex(material);
}

void Pipeline::record_stage(const std::string& stage, const std::string& status,
                            const std::string& output_file, const std::string& error) {
    StageRecord rec;
    rec.status = status;
    rec.input_digest = stage_input_digest(stage);
    rec.output_file = output_file;
    if (!output_file.empty() && fs::exists(artifact_path(output_file)))
        rec.output_digest = sha256_file_hex(artifact_path(output_file));
    rec.error = error;
    run_manifest_.stages[stage] = std::move(rec);
}

void Pipeline::write_run_manifest() const {
    spit(artifact_path("run_manifest.json"), run_manifest_.to_json());
}

void Pipeline::stage_select() {
    ensure_inputs_loaded();
    const Scenario scenario = manifest_->header().scenario;
    json out;
    out["mode"] = config_.select.mode;
    out["scenario"] = iqa::to_string(scenario);
    std::vector<std::string> images;

    if (config_.select.mode == "difficult") {
        if (config_.embeddings_path.empty() || !fs::exists(config_.embeddings_path))
            throw Error("select: missing input: embeddings '" + config_.embeddings_path +
                        "' (required for difficult mode)");
        if (config_.expert_scores_path.empty() || !fs::exists(config_.expert_scores_path))
            throw Error("select: missing input: expert scores '" + config_.expert_scores_path +
                        "' (required for difficult mode)");
        if (!embeddings_) embeddings_ = EmbeddingTable::load(config_.embeddings_path);
        if (!experts_) experts_ = ExpertScoreTable::load_csv(config_.expert_scores_path);
        if (scenario == Scenario::FR) {
            const FrSelection sel =
                select_difficult_fr(*manifest_, *embeddings_, *experts_, config_.select.sampler);
            for (const auto& [gid, res] : sel.distorted)
                for (const SelectionEntry& e : res.selected) images.push_back(e.image_id);
            out["detail"] = json::parse(sel.to_json());
        } else {
            const SelectionResult sel =
                select_images_nr(*manifest_, *embeddings_, *experts_, config_.select.sampler);
            for (const SelectionEntry& e : sel.selected) images.push_back(e.image_id);
            out["detail"] = json::parse(sel.to_json());
        }
    } else {
        if (scenario == Scenario::FR) {
            const FrSelection sel = sample_uniform_fr(*manifest_, config_.select.sampler);
            for (const auto& [gid, res] : sel.distorted)
                for (const SelectionEntry& e : res.selected) images.push_back(e.image_id);
            out["detail"] = json::parse(sel.to_json());
        } else {
            const SelectionResult sel = sample_uniform_nr(*manifest_, config_.select.sampler);
            for (const SelectionEntry& e : sel.selected) images.push_back(e.image_id);
            out["detail"] = json::parse(sel.to_json());
        }
    }
    std::sort(images.begin(), images.end());
    out["images"] = images;
    spit(artifact_path("selection.json"), out.dump(2) + "\n");
}

void Pipeline::stage_plan() {
    ensure_inputs_loaded();
    const json sel = json::parse(slurp(artifact_path("selection.json")));
    const std::vector<std::string> images = sel.at("images").get<std::vector<std::string>>();

    PromptSpec spec;
    spec.stimulus_method = config_.plan.stimulus_method;
    spec.nlp_strategy = config_.plan.nlp_strategy;
    spec.scenario = manifest_->header().scenario;
    spec.list_size = config_.plan.list_size;

    std::vector<TrialPlan> plans;
    switch (spec.stimulus_method) {
        case StimulusMethod::Single:
            plans = plan_single(*manifest_, images, spec);
            break;
        case StimulusMethod::Double:
            plans = plan_double(*manifest_, images, spec, config_.plan.planner);
            break;
        case StimulusMethod::Multiple:
            plans = plan_multiple(*manifest_, images, spec, config_.plan.planner);
            break;
    }

    if (spec.nlp_strategy == NlpStrategy::InContext) {
        // exemplar pool: everything eligible that the test selection left out;
        // for FR whole untouched groups so the reference stays unused too
        const std::set<std::string> chosen(images.begin(), images.end());
        std::vector<std::string> pool;
        if (spec.scenario == Scenario::FR) {
            for (const std::string& gid : manifest_->group_ids()) {
                bool touched = false;
                for (const ImageRecord* rec : manifest_->distorted_of(gid))
                    if (chosen.count(rec->image_id)) touched = true;
                if (touched) continue;
                for (const ImageRecord* rec : manifest_->distorted_of(gid))
                    pool.push_back(rec->image_id);
            }
        } else {
            for (const ImageRecord& rec : manifest_->records())
                if (!chosen.count(rec.image_id)) pool.push_back(rec.image_id);
        }
        assign_exemplars(plans, *manifest_, pool, config_.plan.exemplar_seed);
    }
    spit(artifact_path("plans.jsonl"), plans_to_jsonl(plans));
}

void Pipeline::stage_run() {
    ensure_inputs_loaded();
    const std::vector<TrialPlan> plans = plans_from_jsonl(slurp(artifact_path("plans.jsonl")));
    std::unique_ptr<Backend> backend = make_backend(config_.backend, *manifest_);
    Gateway gateway(config_.backend, *backend, *manifest_, artifact_path("cache"));
    const std::vector<TrialResult> results = gateway.execute(plans);
    spit(artifact_path("results.jsonl"), results_to_jsonl(results));
}

void Pipeline::stage_aggregate() {
    ensure_inputs_loaded();
    const std::vector<TrialResult> results =
        results_from_jsonl(slurp(artifact_path("results.jsonl")));
    const Scenario scenario = manifest_->header().scenario;

    size_t invalid = 0, clamped = 0;
    for (const TrialResult& r : results) {
        if (r.outcome.kind == OutcomeKind::Invalid) ++invalid;
        if (r.outcome.clamped) ++clamped;
    }

    json out;
    out["stimulus_method"] = to_string(config_.plan.stimulus_method);
    out["total_trials"] = results.size();
    out["invalid_trials"] = invalid;
    out["clamped_trials"] = clamped;

    std::map<std::string, double> predictions;
    if (config_.plan.stimulus_method == StimulusMethod::Single) {
        // absolute scores need no scaling step: prediction = mean valid score
        std::map<std::string, std::pair<double, int>> acc;
        for (const TrialResult& r : results) {
            if (r.outcome.kind != OutcomeKind::Score &&
                r.outcome.kind != OutcomeKind::DescriptionAndScore)
                continue;
            const std::string& id = scenario == Scenario::FR ? r.stimuli.at(1) : r.stimuli.at(0);
            acc[id].first += r.outcome.score;
            acc[id].second += 1;
        }
        for (const auto& [id, p] : acc) predictions[id] = p.first / p.second;
        out["aggregate"] = nullptr;
    } else {
        const AggregateResult agg = scale_per_group(results, scenario, config_.aggregate);
        predictions = agg.predictions();
        out["aggregate"] = json::parse(agg.to_json());
    }
    out["predictions"] = predictions;
    spit(artifact_path("scale.json"), out.dump(2) + "\n");
}

void Pipeline::stage_report() {
    ensure_inputs_loaded();
    const json scale = json::parse(slurp(artifact_path("scale.json")));
    const std::map<std::string, double> predictions =
        scale.at("predictions").get<std::map<std::string, double>>();

    MetricReport report = grouped_metrics(predictions, *manifest_, config_.report.metrics);
    const double total = scale.at("total_trials").get<double>();
    if (total > 0) {
        report.invalid_trial_rate = scale.at("invalid_trials").get<double>() / total;
        report.clamp_rate = scale.at("clamped_trials").get<double>() / total;
    }
    spit(artifact_path("report.json"), report.to_json());
    spit(artifact_path("report.csv"), report.to_csv());
}

int Pipeline::run_all() {
    const std::vector<std::pair<std::string, std::string>> stages = {
        {"select", "selection.json"}, {"plan", "plans.jsonl"},   {"run", "results.jsonl"},
        {"aggregate", "scale.json"},  {"report", "report.json"},
    };

    RunManifest previous;
    bool have_previous = false;
    const std::string manifest_file = artifact_path("run_manifest.json");
    if (fs::exists(manifest_file)) {
        try {
            previous = RunManifest::from_json(slurp(manifest_file));
            have_previous = true;
        } catch (const std::exception&) {
            have_previous = false;  // corrupt manifest: rerun everything
        }
    }

    for (const auto& [stage, output] : stages) {
        try {
            ensure_inputs_loaded();
            const std::string digest = stage_input_digest(stage);
            bool skip = false;
            if (have_previous) {
                auto it = previous.stages.find(stage);
                if (it != previous.stages.end() &&
                    (it->second.status == "ok" || it->second.status == "skipped") &&
                    it->second.input_digest == digest && fs::exists(artifact_path(output)) &&
                    sha256_file_hex(artifact_path(output)) == it->second.output_digest) {
                    skip = true;
                }
            }
            if (skip) {
                record_stage(stage, "skipped", output);
            } else {
                if (stage == "select") stage_select();
                else if (stage == "plan") stage_plan();
                else if (stage == "run") stage_run();
                else if (stage == "aggregate") stage_aggregate();
                else stage_report();
                record_stage(stage, "ok", output);
            }
        } catch (const std::exception& e) {
            record_stage(stage, "failed", output, e.what());
            write_run_manifest();
            return 1;
        }
    }
    write_run_manifest();
    return 0;
}

}  // namespace iqa
