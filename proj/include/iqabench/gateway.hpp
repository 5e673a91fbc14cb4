#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "iqabench/dataset.hpp"
#include "iqabench/error.hpp"
#include "iqabench/planner.hpp"
#include "iqabench/prompts.hpp"

namespace iqa {

struct BackendConfig {
    std::string kind = "simulated_oracle";  // or "chat_http"
    std::string endpoint;
    std::string auth_env;  // environment variable holding the API token
    std::string model;
    double temperature = 0.0;
    int max_tokens = 1024;
    int max_attempts = 3;      // R
    int backoff_base_ms = 250;
    int parallelism = 4;       // P
    double oracle_noise_std = 0.0;
    std::uint64_t oracle_seed = 0;
    double oracle_tie_margin = 1.0;

    void validate() const;
    std::string id() const;  // identity used in cache keys
};

struct TrialResult {
    std::int64_t trial_id = 0;
    std::string prompt_hash;
    std::vector<std::string> stimuli;
    std::string raw_response;
    ParsedOutcome outcome;
    std::string group_id;
    int attempts = 0;
    double latency_ms = 0.0;
    std::string backend_id;
    bool cache_hit = false;
};

std::string results_to_jsonl(const std::vector<TrialResult>& results);
std::vector<TrialResult> results_from_jsonl(const std::string& text);

// Raised on authentication failures; aborts the run instead of retrying.
class AuthError : public Error {
public:
    using Error::Error;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string respond(const TrialPlan& plan, const BuiltPrompt& prompt) = 0;
    long calls() const { return calls_.load(); }

protected:
    std::atomic<long> calls_{0};
};

// Deterministic test double: scores stimuli by mos plus seeded Gaussian noise
// keyed by (seed, trial_id), and answers in the template response format.
class OracleBackend : public Backend {
public:
    OracleBackend(const BackendConfig& config, const Manifest& manifest);
    std::string respond(const TrialPlan& plan, const BuiltPrompt& prompt) override;

private:
    BackendConfig config_;
    const Manifest& manifest_;
};

std::string oracle_respond(const PromptSpec& spec, const std::vector<double>& stimulus_mos,
                           double noise_std, std::uint64_t seed, std::int64_t trial_id,
                           double tie_margin);

// Chat-completion HTTP backend; images attached as base64 data URIs in the
// declared order.
class HttpBackend : public Backend {
public:
    HttpBackend(const BackendConfig& config, const Manifest& manifest);
    std::string respond(const TrialPlan& plan, const BuiltPrompt& prompt) override;

private:
    BackendConfig config_;
    const Manifest& manifest_;
    std::string token_;
};

std::unique_ptr<Backend> make_backend(const BackendConfig& config, const Manifest& manifest);

// Dispatches plans to a backend through a content-addressed cache with
// bounded parallelism and per-trial retries.
class Gateway {
public:
    Gateway(BackendConfig config, Backend& backend, const Manifest& manifest,
            std::string cache_dir);

    std::vector<TrialResult> execute(const std::vector<TrialPlan>& plans);

    std::string cache_key(const TrialPlan& plan, const BuiltPrompt& prompt) const;

private:
    TrialResult run_one(const TrialPlan& plan);

    BackendConfig config_;
    Backend& backend_;
    const Manifest& manifest_;
    std::string cache_dir_;
};

}  // namespace iqa
