#include "iqabench/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "iqabench/error.hpp"
#include "iqabench/metrics.hpp"
#include "iqabench/rng.hpp"

using json = nlohmann::ordered_json;

namespace iqa {

namespace {

json entry_to_json(const SelectionEntry& e) {
    json j;
    j["image_id"] = e.image_id;
    j["objective"] = e.objective;
    j["error_term"] = e.error_term;
    j["diversity_term"] = e.diversity_term;
    return j;
}

}  // namespace

std::string SelectionResult::to_json() const {
    json j;
    j["selected"] = json::array();
    for (const SelectionEntry& e : selected) j["selected"].push_back(entry_to_json(e));
    return j.dump(2) + "\n";
}

std::string FrSelection::to_json() const {
    json j;
    j["references"] = json::parse(references.to_json());
    j["distorted"] = json::object();
    for (const auto& [gid, sel] : distorted) j["distorted"][gid] = json::parse(sel.to_json());
    return j.dump(2) + "\n";
}

FusionResult fuse_experts(ExpertScoreTable& table, const Manifest& manifest) {
    FusionResult result;
    const std::vector<std::string> ids = table.image_ids();
    if (ids.empty()) throw Error("fuse_experts: empty score table");

    // per-expert calibration pairs (raw, mos)
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> columns;
    for (const std::string& id : ids) {
        if (!manifest.contains(id)) continue;
        const double mos = manifest.record(id).mos;
        for (const ExpertScore& s : table.scores_of(id)) {
            columns[s.expert_name].first.push_back(s.raw_score);
            columns[s.expert_name].second.push_back(mos);
        }
    }
    if (columns.empty()) throw Error("fuse_experts: no expert scores overlap the manifest");

    std::map<std::string, LogisticFit> fits;
    for (const auto& [name, col] : columns) {
        const auto& [raw, mos] = col;
        const bool constant =
            std::all_of(raw.begin(), raw.end(), [&](double x) { return x == raw.front(); });
        if (constant || raw.size() < 5) {
            result.excluded_experts.push_back(name);
            result.warnings.push_back("expert '" + name + "' excluded: " +
                                      (constant ? "constant scores" : "too few samples"));
            continue;
        }
        fits[name] = fit_logistic(raw, mos);
        result.used_experts.push_back(name);
    }
    if (fits.empty()) throw Error("fuse_experts: no usable experts after exclusions");

    for (const std::string& id : ids) {
        double acc = 0.0;
        int count = 0;
        for (const ExpertScore& s : table.scores_of(id)) {
            auto it = fits.find(s.expert_name);
            if (it == fits.end()) continue;
            acc += it->second.map(s.raw_score);
            ++count;
        }
        if (count == 0)
            throw Error("fuse_experts: image '" + id + "' has no scores from usable experts");
        table.set_fused(id, acc / count);
    }
    return result;
}

double diversity(const std::string& candidate_id, const std::vector<std::string>& selected,
                 const EmbeddingTable& embeddings, DiversityMode mode) {
    if (selected.empty()) return 0.0;
    const std::vector<double>& c = embeddings.at(candidate_id);
    double best = std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (const std::string& sid : selected) {
        const std::vector<double>& s = embeddings.at(sid);
        if (s.size() != c.size()) throw Error("diversity: embedding dimension mismatch");
        double mse = 0.0;
        for (size_t i = 0; i < c.size(); ++i) mse += (c[i] - s[i]) * (c[i] - s[i]);
        mse /= static_cast<double>(c.size());
        best = std::min(best, mse);
        sum += mse;
    }
    return mode == DiversityMode::MinToSet ? best : sum / static_cast<double>(selected.size());
}

double prediction_error(const ImageRecord& rec, const ExpertScoreTable& table,
                        const SamplerConfig& config) {
    const auto fused = table.fused(rec.image_id);
    if (!fused) throw Error("sampler: no fused score for '" + rec.image_id + "'");
    const double diff = *fused - rec.mos;
    const double denom = config.variance_normalize ? rec.std * rec.std + config.epsilon : 1.0;
    return diff * diff / denom;
}

namespace {

// Greedy argmax of error + lambda * Div over the candidates; candidates are
// visited in id order so equal objectives resolve to the smaller id.
SelectionResult greedy_select(const std::vector<std::pair<std::string, double>>& candidates,
                              const EmbeddingTable& embeddings, const SamplerConfig& config) {
    if (static_cast<int>(candidates.size()) < config.n_select)
        throw Error("sampler: " + std::to_string(candidates.size()) + " candidates but N=" +
                    std::to_string(config.n_select));
    for (const auto& [id, err] : candidates) {
        (void)err;
        if (config.lambda > 0.0 && !embeddings.contains(id))
            throw Error("sampler: missing embedding for '" + id + "'");
    }
    SelectionResult result;
    std::vector<std::string> chosen;
    std::vector<bool> taken(candidates.size(), false);
    for (int n = 0; n < config.n_select; ++n) {
        int best = -1;
        SelectionEntry best_entry;
        for (size_t i = 0; i < candidates.size(); ++i) {
            if (taken[i]) continue;
            SelectionEntry e;
            e.image_id = candidates[i].first;
            e.error_term = candidates[i].second;
            e.diversity_term = config.lambda > 0.0
                                   ? diversity(e.image_id, chosen, embeddings, config.diversity_mode)
                                   : 0.0;
            e.objective = e.error_term + config.lambda * e.diversity_term;
            if (best < 0 || e.objective > best_entry.objective) {
                best = static_cast<int>(i);
                best_entry = e;
            }
        }
        taken[best] = true;
        chosen.push_back(best_entry.image_id);
        result.selected.push_back(std::move(best_entry));
    }
    return result;
}

}  // namespace

SelectionResult select_references_fr(const Manifest& manifest, const EmbeddingTable& embeddings,
                                     const ExpertScoreTable& table, const SamplerConfig& config) {
    if (manifest.header().scenario != Scenario::FR)
        throw Error("select_references_fr: manifest is not FR");
    std::vector<std::pair<std::string, double>> candidates;
    for (const std::string& gid : manifest.group_ids()) {
        const ImageRecord& ref = manifest.reference_of(gid);
        const auto members = manifest.distorted_of(gid);
        if (members.empty()) continue;
        double err = 0.0;
        for (const ImageRecord* rec : members) err += prediction_error(*rec, table, config);
        err /= static_cast<double>(members.size());
        candidates.emplace_back(ref.image_id, err);
    }
    std::sort(candidates.begin(), candidates.end());
    return greedy_select(candidates, embeddings, config);
}

SelectionResult select_distorted_fr(const Manifest& manifest, const std::string& group_id,
                                    const ExpertScoreTable& table, const SamplerConfig& config) {
    const auto members = manifest.distorted_of(group_id);
    if (static_cast<int>(members.size()) < config.k_select)
        throw Error("select_distorted_fr: group '" + group_id + "' has " +
                    std::to_string(members.size()) + " distorted images, K=" +
                    std::to_string(config.k_select));
    std::vector<SelectionEntry> entries;
    for (const ImageRecord* rec : members) {
        SelectionEntry e;
        e.image_id = rec->image_id;
        e.error_term = prediction_error(*rec, table, config);
        e.objective = e.error_term;
        entries.push_back(std::move(e));
    }
    std::sort(entries.begin(), entries.end(), [](const SelectionEntry& a, const SelectionEntry& b) {
        if (a.error_term != b.error_term) return a.error_term > b.error_term;
        return a.image_id < b.image_id;
    });
    entries.resize(static_cast<size_t>(config.k_select));
    return SelectionResult{std::move(entries)};
}

FrSelection select_difficult_fr(const Manifest& manifest, const EmbeddingTable& embeddings,
                                const ExpertScoreTable& table, const SamplerConfig& config) {
    FrSelection sel;
    sel.references = select_references_fr(manifest, embeddings, table, config);
    for (const SelectionEntry& ref : sel.references.selected) {
        const std::string& gid = manifest.record(ref.image_id).content_group;
        sel.distorted[gid] = select_distorted_fr(manifest, gid, table, config);
    }
    return sel;
}

SelectionResult select_images_nr(const Manifest& manifest, const EmbeddingTable& embeddings,
                                 const ExpertScoreTable& table, const SamplerConfig& config) {
    std::vector<std::pair<std::string, double>> candidates;
    for (const ImageRecord& rec : manifest.records()) {
        if (rec.role == Role::Reference) continue;
        candidates.emplace_back(rec.image_id, prediction_error(rec, table, config));
    }
    std::sort(candidates.begin(), candidates.end());
    return greedy_select(candidates, embeddings, config);
}

namespace {

// Partial Fisher-Yates over a sorted id list.
std::vector<std::string> uniform_pick(std::vector<std::string> pool, int n, Rng& rng) {
    if (static_cast<int>(pool.size()) < n)
        throw Error("sample_uniform: " + std::to_string(pool.size()) + " candidates but N=" +
                    std::to_string(n));
    for (int i = 0; i < n; ++i) {
        const size_t j = i + rng.below(pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(static_cast<size_t>(n));
    return pool;
}

SelectionResult ids_to_result(const std::vector<std::string>& ids) {
    SelectionResult r;
    for (const std::string& id : ids) r.selected.push_back(SelectionEntry{id, 0.0, 0.0, 0.0});
    return r;
}

// One uniform draw per mos-quantile stratum.
std::vector<std::string> stratified_by_mos(const std::vector<const ImageRecord*>& members,
                                           int k, Rng& rng) {
    const size_t m = members.size();
    if (static_cast<int>(m) < k)
        throw Error("sample_uniform: group has " + std::to_string(m) + " images, K=" +
                    std::to_string(k));
    std::vector<const ImageRecord*> sorted = members;
    std::sort(sorted.begin(), sorted.end(), [](const ImageRecord* a, const ImageRecord* b) {
        if (a->mos != b->mos) return a->mos < b->mos;
        return a->image_id < b->image_id;
    });
    std::vector<std::string> picks;
    for (int s = 0; s < k; ++s) {
        const size_t lo = s * m / k;
        const size_t hi = (s + 1) * m / k;
        picks.push_back(sorted[lo + rng.below(hi - lo)]->image_id);
    }
    return picks;
}

}  // namespace

FrSelection sample_uniform_fr(const Manifest& manifest, const SamplerConfig& config) {
    if (manifest.header().scenario != Scenario::FR)
        throw Error("sample_uniform_fr: manifest is not FR");
    Rng rng(config.seed);
    std::vector<std::string> refs;
    for (const std::string& gid : manifest.group_ids())
        refs.push_back(manifest.reference_of(gid).image_id);
    std::sort(refs.begin(), refs.end());
    FrSelection sel;
    sel.references = ids_to_result(uniform_pick(refs, config.n_select, rng));
    for (const SelectionEntry& ref : sel.references.selected) {
        const std::string& gid = manifest.record(ref.image_id).content_group;
        sel.distorted[gid] =
            ids_to_result(stratified_by_mos(manifest.distorted_of(gid), config.k_select, rng));
    }
    return sel;
}

SelectionResult sample_uniform_nr(const Manifest& manifest, const SamplerConfig& config) {
    Rng rng(config.seed);
    std::vector<std::string> pool;
    for (const ImageRecord& rec : manifest.records())
        if (rec.role != Role::Reference) pool.push_back(rec.image_id);
    std::sort(pool.begin(), pool.end());
    return ids_to_result(uniform_pick(std::move(pool), config.n_select, rng));
}

}  // namespace iqa
