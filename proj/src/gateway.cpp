#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "iqabench/gateway.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "iqabench/hash.hpp"
#include "iqabench/rng.hpp"

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace iqa {

void BackendConfig::validate() const {
    if (kind != "simulated_oracle" && kind != "chat_http")
        throw Error("backend: unknown kind '" + kind + "'");
    if (max_attempts < 1) throw Error("backend: max_attempts must be >= 1");
    if (parallelism < 1) throw Error("backend: parallelism must be >= 1");
    if (temperature < 0.0) throw Error("backend: temperature must be >= 0");
    if (oracle_noise_std < 0.0) throw Error("backend: oracle noise_std must be >= 0");
}

std::string BackendConfig::id() const {
    return kind + "|" + model + "|" + endpoint;
}

namespace {

std::string outcome_kind_string(OutcomeKind k) {
    switch (k) {
        case OutcomeKind::Score: return "score";
        case OutcomeKind::Comparison: return "comparison";
        case OutcomeKind::Ranking: return "ranking";
        case OutcomeKind::DescriptionAndScore: return "description_and_score";
        case OutcomeKind::Invalid: return "invalid";
    }
    throw Error("bad outcome kind");
}

OutcomeKind outcome_kind_from_string(const std::string& s) {
    if (s == "score") return OutcomeKind::Score;
    if (s == "comparison") return OutcomeKind::Comparison;
    if (s == "ranking") return OutcomeKind::Ranking;
    if (s == "description_and_score") return OutcomeKind::DescriptionAndScore;
    if (s == "invalid") return OutcomeKind::Invalid;
    throw Error("unknown outcome kind: " + s);
}

json outcome_to_json(const ParsedOutcome& o) {
    json j;
    j["kind"] = outcome_kind_string(o.kind);
    j["score"] = o.score;
    j["clamped"] = o.clamped;
    j["comparison"] = o.comparison;
    j["ranking"] = o.ranking;
    j["description"] = o.description;
    return j;
}

ParsedOutcome outcome_from_json(const json& j) {
    ParsedOutcome o;
    o.kind = outcome_kind_from_string(j.at("kind").get<std::string>());
    o.score = j.at("score").get<double>();
    o.clamped = j.at("clamped").get<bool>();
    o.comparison = j.at("comparison").get<int>();
    o.ranking = j.at("ranking").get<std::vector<int>>();
    o.description = j.at("description").get<std::string>();
    return o;
}

}  // namespace

std::string results_to_jsonl(const std::vector<TrialResult>& results) {
    std::ostringstream out;
    for (const TrialResult& r : results) {
        json j;
        j["trial_id"] = r.trial_id;
        j["prompt_hash"] = r.prompt_hash;
        j["stimuli"] = r.stimuli;
        j["group_id"] = r.group_id;
        j["raw_response"] = r.raw_response;
        j["outcome"] = outcome_to_json(r.outcome);
        j["attempts"] = r.attempts;
        j["latency_ms"] = r.latency_ms;
        j["backend_id"] = r.backend_id;
        j["cache_hit"] = r.cache_hit;
        out << j.dump() << "\n";
    }
    return out.str();
}

std::vector<TrialResult> results_from_jsonl(const std::string& text) {
    std::vector<TrialResult> results;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        TrialResult r;
        r.trial_id = j.at("trial_id").get<std::int64_t>();
        r.prompt_hash = j.at("prompt_hash").get<std::string>();
        r.stimuli = j.at("stimuli").get<std::vector<std::string>>();
        r.group_id = j.at("group_id").get<std::string>();
        r.raw_response = j.at("raw_response").get<std::string>();
        r.outcome = outcome_from_json(j.at("outcome"));
        r.attempts = j.at("attempts").get<int>();
        r.latency_ms = j.at("latency_ms").get<double>();
        r.backend_id = j.at("backend_id").get<std::string>();
        r.cache_hit = j.at("cache_hit").get<bool>();
        results.push_back(std::move(r));
    }
    return results;
}

std::string oracle_respond(const PromptSpec& spec, const std::vector<double>& stimulus_mos,
                           double noise_std, std::uint64_t seed, std::int64_t trial_id,
                           double tie_margin) {
    Rng rng(seed * 0x9e3779b97f4a7c15ULL ^ static_cast<std::uint64_t>(trial_id) * 0xd1b54a32d192ed03ULL);
    std::vector<double> z(stimulus_mos.size());
    for (size_t i = 0; i < z.size(); ++i) z[i] = rng.normal(stimulus_mos[i], noise_std);

    ParsedOutcome out;
    switch (spec.stimulus_method) {
        case StimulusMethod::Single: {
            if (z.size() != 1) throw Error("oracle: single-stimulus expects one test image");
            out.kind = OutcomeKind::Score;
            out.score = std::clamp(z[0], 0.0, 100.0);
            break;
        }
        case StimulusMethod::Double: {
            if (z.size() != 2) throw Error("oracle: double-stimulus expects two test images");
            out.kind = OutcomeKind::Comparison;
            if (std::abs(z[0] - z[1]) < tie_margin)
                out.comparison = 2;
            else
                out.comparison = z[0] > z[1] ? 1 : 0;
            break;
        }
        case StimulusMethod::Multiple: {
            if (static_cast<int>(z.size()) != spec.list_size)
                throw Error("oracle: multiple-stimulus expects L test images");
            std::vector<size_t> order(z.size());
            for (size_t i = 0; i < z.size(); ++i) order[i] = i;
            std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
                if (z[a] != z[b]) return z[a] < z[b];
                return a < b;
            });
            out.ranking.resize(z.size());
            int rank = 0;
            for (size_t k = 0; k < order.size(); ++k) {
                if (k > 0 && z[order[k]] != z[order[k - 1]]) rank = static_cast<int>(k);
                out.ranking[order[k]] = rank;
            }
            out.kind = OutcomeKind::Ranking;
            break;
        }
    }
    return format_outcome(out, spec);
}

OracleBackend::OracleBackend(const BackendConfig& config, const Manifest& manifest)
    : config_(config), manifest_(manifest) {}

std::string OracleBackend::respond(const TrialPlan& plan, const BuiltPrompt& prompt) {
    (void)prompt;
    ++calls_;
    std::vector<double> mos;
    const size_t first_test = plan.spec.scenario == Scenario::FR ? 1 : 0;
    for (size_t i = first_test; i < plan.stimuli.size(); ++i)
        mos.push_back(manifest_.record(plan.stimuli[i]).mos);
    return oracle_respond(plan.spec, mos, config_.oracle_noise_std, config_.oracle_seed,
                          plan.trial_id, config_.oracle_tie_margin);
}

namespace {

std::string base64_encode(const std::string& data) {
    static const char* table = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((data.size() + 2) / 3 * 4);
    size_t i = 0;
    while (i + 3 <= data.size()) {
        const unsigned v = (static_cast<unsigned char>(data[i]) << 16) |
                           (static_cast<unsigned char>(data[i + 1]) << 8) |
                           static_cast<unsigned char>(data[i + 2]);
        out += table[(v >> 18) & 63];
        out += table[(v >> 12) & 63];
        out += table[(v >> 6) & 63];
        out += table[v & 63];
        i += 3;
    }
    const size_t rem = data.size() - i;
    if (rem == 1) {
        const unsigned v = static_cast<unsigned char>(data[i]) << 16;
        out += table[(v >> 18) & 63];
        out += table[(v >> 12) & 63];
        out += "==";
    } else if (rem == 2) {
        const unsigned v = (static_cast<unsigned char>(data[i]) << 16) |
                           (static_cast<unsigned char>(data[i + 1]) << 8);
        out += table[(v >> 18) & 63];
        out += table[(v >> 12) & 63];
        out += table[(v >> 6) & 63];
        out += "=";
    }
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("gateway: cannot read image file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

HttpBackend::HttpBackend(const BackendConfig& config, const Manifest& manifest)
    : config_(config), manifest_(manifest) {
    if (!config_.auth_env.empty()) {
        const char* token = std::getenv(config_.auth_env.c_str());
        if (!token) throw AuthError("gateway: auth env var '" + config_.auth_env + "' is not set");
        token_ = token;
    }
}

std::string HttpBackend::respond(const TrialPlan& plan, const BuiltPrompt& prompt) {
    ++calls_;
    const auto scheme_end = config_.endpoint.find("://");
    if (scheme_end == std::string::npos)
        throw Error("gateway: endpoint must include a scheme: " + config_.endpoint);
    const auto path_start = config_.endpoint.find('/', scheme_end + 3);
    const std::string base = path_start == std::string::npos ? config_.endpoint
                                                             : config_.endpoint.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/"
                                                             : config_.endpoint.substr(path_start);

    json content = json::array();
    content.push_back({{"type", "text"}, {"text", prompt.text}});
    for (const std::string& id : prompt.attachments) {
        const std::string& uri = manifest_.record(id).uri;
        const std::string data = read_file(uri);
        content.push_back(
            {{"type", "image_url"},
             {"image_url", {{"url", "data:image/*;base64," + base64_encode(data)}}}});
    }
    json body;
    body["model"] = config_.model;
    body["temperature"] = config_.temperature;
    body["max_tokens"] = config_.max_tokens;
    body["messages"] = json::array({{{"role", "user"}, {"content", content}}});

    httplib::Client client(base);
    client.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) throw Error("gateway: transport error contacting " + base);
    if (res->status == 401 || res->status == 403)
        throw AuthError("gateway: authentication rejected (HTTP " + std::to_string(res->status) + ")");
    if (res->status != 200)
        throw Error("gateway: HTTP " + std::to_string(res->status) + " from " + base);
    json reply = json::parse(res->body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config, const Manifest& manifest) {
    config.validate();
    if (config.kind == "simulated_oracle")
        return std::make_unique<OracleBackend>(config, manifest);
    return std::make_unique<HttpBackend>(config, manifest);
}

Gateway::Gateway(BackendConfig config, Backend& backend, const Manifest& manifest,
                 std::string cache_dir)
    : config_(std::move(config)), backend_(backend), manifest_(manifest),
      cache_dir_(std::move(cache_dir)) {
    config_.validate();
}

std::string Gateway::cache_key(const TrialPlan& plan, const BuiltPrompt& prompt) const {
    std::string material = config_.id() + "\n" + sha256_hex(prompt.text);
    for (const std::string& id : prompt.attachments) {
        const std::string& uri = manifest_.record(id).uri;
        // content hash so edited image files invalidate only their own trials
        material += "\n" + (fs::exists(uri) ? sha256_file_hex(uri) : sha256_hex(uri));
    }
    return sha256_hex(material);
}

namespace {

struct CacheEntry {
    std::string raw_response;
    int attempts = 0;
};

}  // namespace

TrialResult Gateway::run_one(const TrialPlan& plan) {
    const auto start = std::chrono::steady_clock::now();
    const BuiltPrompt prompt = build_prompt(plan.spec, plan.stimuli);
    const std::string key = cache_key(plan, prompt);
    const fs::path cache_file = fs::path(cache_dir_) / (key + ".json");

    TrialResult result;
    result.trial_id = plan.trial_id;
    result.prompt_hash = sha256_hex(prompt.text);
    result.stimuli = plan.stimuli;
    result.group_id = plan.group_id;
    result.backend_id = config_.id();

    if (fs::exists(cache_file)) {
        std::ifstream in(cache_file);
        json j = json::parse(in);
        result.raw_response = j.at("raw_response").get<std::string>();
        result.attempts = j.at("attempts").get<int>();
        result.cache_hit = true;
    } else {
        std::string text;
        int attempts = 0;
        for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
            attempts = attempt;
            try {
                text = backend_.respond(plan, prompt);
            } catch (const AuthError&) {
                throw;
            } catch (const Error&) {
                if (attempt == config_.max_attempts) {
                    text.clear();
                    break;
                }
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(config_.backoff_base_ms << (attempt - 1)));
                continue;
            }
            if (parse_response(text, plan.spec).kind != OutcomeKind::Invalid) break;
            if (attempt < config_.max_attempts)
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(config_.backoff_base_ms << (attempt - 1)));
        }
        result.raw_response = text;
        result.attempts = attempts;
        json j;
        j["raw_response"] = result.raw_response;
        j["attempts"] = result.attempts;
        const fs::path tmp = cache_file.string() + ".tmp." + std::to_string(plan.trial_id);
        std::ofstream out(tmp);
        out << j.dump() << "\n";
        out.close();
        fs::rename(tmp, cache_file);
    }

    result.outcome = parse_response(result.raw_response, plan.spec);
    result.latency_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - start)
                            .count();
    return result;
}

std::vector<TrialResult> Gateway::execute(const std::vector<TrialPlan>& plans) {
    fs::create_directories(cache_dir_);
    std::vector<TrialResult> results(plans.size());
    std::atomic<size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;

    // In-run dedup: identical cache keys are queried once.
    std::mutex inflight_mutex;
    std::map<std::string, std::shared_ptr<std::shared_future<CacheEntry>>> inflight;

    auto worker = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= plans.size()) return;
            {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (first_error) return;
            }
            try {
                const TrialPlan& plan = plans[i];
                const BuiltPrompt prompt = build_prompt(plan.spec, plan.stimuli);
                const std::string key = cache_key(plan, prompt);

                std::shared_ptr<std::promise<CacheEntry>> my_promise;
                std::shared_ptr<std::shared_future<CacheEntry>> fut;
                {
                    std::lock_guard<std::mutex> lock(inflight_mutex);
                    auto it = inflight.find(key);
                    if (it != inflight.end()) {
                        fut = it->second;
                    } else {
                        my_promise = std::make_shared<std::promise<CacheEntry>>();
                        auto shared =
                            std::make_shared<std::shared_future<CacheEntry>>(my_promise->get_future());
                        inflight.emplace(key, shared);
                    }
                }
                if (fut) {
                    const CacheEntry entry = fut->get();
                    TrialResult r;
                    r.trial_id = plan.trial_id;
                    r.prompt_hash = sha256_hex(prompt.text);
                    r.stimuli = plan.stimuli;
                    r.group_id = plan.group_id;
                    r.backend_id = config_.id();
                    r.raw_response = entry.raw_response;
                    r.attempts = entry.attempts;
                    r.cache_hit = true;
                    r.outcome = parse_response(r.raw_response, plan.spec);
                    results[i] = std::move(r);
                } else {
                    try {
                        TrialResult r = run_one(plan);
                        my_promise->set_value(CacheEntry{r.raw_response, r.attempts});
                        results[i] = std::move(r);
                    } catch (...) {
                        my_promise->set_exception(std::current_exception());
                        throw;
                    }
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    const int threads = std::min<int>(config_.parallelism, static_cast<int>(plans.size()));
    std::vector<std::thread> pool;
    for (int t = 0; t < std::max(threads, 1); ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);

    std::sort(results.begin(), results.end(),
              [](const TrialResult& a, const TrialResult& b) { return a.trial_id < b.trial_id; });
    return results;
}

}  // namespace iqa
