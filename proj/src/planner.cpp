#include "iqabench/planner.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "iqabench/error.hpp"
#include "iqabench/rng.hpp"

using json = nlohmann::ordered_json;

namespace iqa {

namespace {

double scale_to_100(const ManifestHeader& h, double mos) {
    const double span = h.scale_max - h.scale_min;
    if (span <= 0.0) throw Error("planner: manifest scale range is degenerate");
    return (mos - h.scale_min) / span * 100.0;
}

// Selected test images grouped by content group, members sorted by id.
std::map<std::string, std::vector<std::string>> group_images(const Manifest& manifest,
                                                             const std::vector<std::string>& images) {
    std::map<std::string, std::vector<std::string>> groups;
    for (const std::string& id : images) {
        const ImageRecord& rec = manifest.record(id);
        if (rec.role != Role::Distorted)
            throw Error("planner: FR plan expects distorted images, got '" + id + "'");
        groups[rec.content_group].push_back(id);
    }
    for (auto& [gid, members] : groups) {
        (void)gid;
        std::sort(members.begin(), members.end());
    }
    return groups;
}

void assign_ids(std::vector<TrialPlan>& plans) {
    for (size_t i = 0; i < plans.size(); ++i) plans[i].trial_id = static_cast<std::int64_t>(i);
}

void shuffle_ids(std::vector<std::string>& ids, Rng& rng) {
    for (size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
}

}  // namespace

std::vector<TrialPlan> plan_single(const Manifest& manifest, const std::vector<std::string>& images,
                                   PromptSpec spec) {
    spec.stimulus_method = StimulusMethod::Single;
    std::vector<TrialPlan> plans;
    if (spec.scenario == Scenario::FR) {
        for (const auto& [gid, members] : group_images(manifest, images)) {
            const std::string ref = manifest.reference_of(gid).image_id;
            for (const std::string& id : members) {
                TrialPlan t;
                t.spec = spec;
                t.stimuli = {ref, id};
                t.group_id = gid;
                plans.push_back(std::move(t));
            }
        }
    } else {
        std::vector<std::string> sorted = images;
        std::sort(sorted.begin(), sorted.end());
        for (const std::string& id : sorted) {
            TrialPlan t;
            t.spec = spec;
            t.stimuli = {id};
            plans.push_back(std::move(t));
        }
    }
    assign_ids(plans);
    return plans;
}

namespace {

using Edge = std::pair<size_t, size_t>;

Edge make_edge(size_t a, size_t b) { return a < b ? Edge{a, b} : Edge{b, a}; }

// Seeded B-regular simple graph: circulant base randomized by double-edge swaps.
std::vector<Edge> regular_pairing(size_t n, int budget, Rng& rng) {
    if (n < 2) throw Error("planner: NR double plan needs at least 2 images");
    if (budget < 1 || budget > static_cast<int>(n) - 1)
        throw Error("planner: pair budget " + std::to_string(budget) +
                    " infeasible, feasible maximum is " + std::to_string(n - 1));
    if ((n * static_cast<size_t>(budget)) % 2 != 0)
        throw Error("planner: pair budget " + std::to_string(budget) + " with " +
                    std::to_string(n) + " images has odd degree sum; feasible maximum is " +
                    std::to_string(budget - 1));
    std::set<Edge> edges;
    for (int off = 1; off <= budget / 2; ++off)
        for (size_t i = 0; i < n; ++i) edges.insert(make_edge(i, (i + off) % n));
    if (budget % 2 == 1)
        for (size_t i = 0; i < n / 2; ++i) edges.insert(make_edge(i, i + n / 2));

    std::vector<Edge> list(edges.begin(), edges.end());
    const size_t swaps = 20 * list.size();
    for (size_t it = 0; it < swaps; ++it) {
        const size_t x = rng.below(list.size());
        const size_t y = rng.below(list.size());
        if (x == y) continue;
        auto [a, b] = list[x];
        auto [c, d] = list[y];
        if (rng.next() & 1) std::swap(c, d);
        if (a == d || c == b || a == c || b == d) continue;
        const Edge e1 = make_edge(a, d), e2 = make_edge(c, b);
        if (edges.count(e1) || edges.count(e2)) continue;
        edges.erase(list[x]);
        edges.erase(list[y]);
        edges.insert(e1);
        edges.insert(e2);
        list[x] = e1;
        list[y] = e2;
    }
    return {edges.begin(), edges.end()};
}

}  // namespace

std::vector<TrialPlan> plan_double(const Manifest& manifest, const std::vector<std::string>& images,
                                   PromptSpec spec, const PlannerConfig& config) {
    spec.stimulus_method = StimulusMethod::Double;
    std::vector<TrialPlan> plans;
    if (spec.scenario == Scenario::FR) {
        for (const auto& [gid, members] : group_images(manifest, images)) {
            if (members.size() < 2)
                throw Error("planner: group '" + gid + "' has fewer than 2 distorted images");
            const std::string ref = manifest.reference_of(gid).image_id;
            for (size_t i = 0; i < members.size(); ++i) {
                for (size_t j = i + 1; j < members.size(); ++j) {
                    TrialPlan t;
                    t.spec = spec;
                    t.stimuli = {ref, members[i], members[j]};
                    t.group_id = gid;
                    plans.push_back(std::move(t));
                }
            }
        }
    } else {
        std::vector<std::string> sorted = images;
        std::sort(sorted.begin(), sorted.end());
        Rng rng(config.seed);
        for (const Edge& e : regular_pairing(sorted.size(), config.pair_budget, rng)) {
            TrialPlan t;
            t.spec = spec;
            t.stimuli = {sorted[e.first], sorted[e.second]};
            plans.push_back(std::move(t));
        }
    }
    assign_ids(plans);
    return plans;
}

namespace {

// Chunk ids into lists of L; pad the remainder with repeats of earlier list
// members, flagged via pad_count.
std::vector<std::pair<std::vector<std::string>, int>> partition_lists(
    std::vector<std::string> ids, int list_size, Rng& rng) {
    const int n = static_cast<int>(ids.size());
    if (list_size > n)
        throw Error("planner: list size " + std::to_string(list_size) + " exceeds population " +
                    std::to_string(n));
    shuffle_ids(ids, rng);
    std::vector<std::pair<std::vector<std::string>, int>> lists;
    for (int start = 0; start < n; start += list_size) {
        const int end = std::min(start + list_size, n);
        std::vector<std::string> chunk(ids.begin() + start, ids.begin() + end);
        int pad = 0;
        if (end - start < list_size) {
            std::vector<std::string> earlier(ids.begin(), ids.begin() + start);
            shuffle_ids(earlier, rng);
            for (const std::string& id : earlier) {
                if (static_cast<int>(chunk.size()) == list_size) break;
                chunk.push_back(id);
                ++pad;
            }
            if (static_cast<int>(chunk.size()) != list_size)
                throw Error("planner: cannot pad remainder list to size " +
                            std::to_string(list_size));
        }
        lists.emplace_back(std::move(chunk), pad);
    }
    return lists;
}

}  // namespace

std::vector<TrialPlan> plan_multiple(const Manifest& manifest,
                                     const std::vector<std::string>& images, PromptSpec spec,
                                     const PlannerConfig& config) {
    spec.stimulus_method = StimulusMethod::Multiple;
    if (spec.list_size < 2) throw Error("planner: list size must be >= 2");
    Rng rng(config.seed);
    std::vector<TrialPlan> plans;
    if (spec.scenario == Scenario::FR) {
        for (const auto& [gid, members] : group_images(manifest, images)) {
            const std::string ref = manifest.reference_of(gid).image_id;
            for (auto& [chunk, pad] : partition_lists(members, spec.list_size, rng)) {
                TrialPlan t;
                t.spec = spec;
                t.stimuli.push_back(ref);
                t.stimuli.insert(t.stimuli.end(), chunk.begin(), chunk.end());
                t.group_id = gid;
                t.pad_count = pad;
                plans.push_back(std::move(t));
            }
        }
    } else {
        std::vector<std::string> sorted = images;
        std::sort(sorted.begin(), sorted.end());
        for (auto& [chunk, pad] : partition_lists(sorted, spec.list_size, rng)) {
            TrialPlan t;
            t.spec = spec;
            t.stimuli = chunk;
            t.pad_count = pad;
            plans.push_back(std::move(t));
        }
    }
    assign_ids(plans);
    return plans;
}

namespace {

std::vector<int> ranking_from_mos(const Manifest& manifest, const std::vector<std::string>& ids) {
    const size_t n = ids.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        const double ma = manifest.record(ids[a]).mos, mb = manifest.record(ids[b]).mos;
        if (ma != mb) return ma < mb;
        return ids[a] < ids[b];
    });
    std::vector<int> ranks(n);
    int rank = 0;
    for (size_t k = 0; k < n; ++k) {
        if (k > 0 && manifest.record(ids[order[k]]).mos != manifest.record(ids[order[k - 1]]).mos)
            rank = static_cast<int>(k);
        ranks[order[k]] = rank;
    }
    return ranks;
}

std::vector<std::string> pick_distinct(const std::vector<std::string>& pool, size_t count,
                                       Rng& rng) {
    if (pool.size() < count) throw Error("planner: exemplar pool too small");
    std::vector<std::string> copy = pool;
    shuffle_ids(copy, rng);
    copy.resize(count);
    return copy;
}

}  // namespace

void assign_exemplars(std::vector<TrialPlan>& plans, const Manifest& manifest,
                      const std::vector<std::string>& pool, std::uint64_t seed) {
    if (pool.empty()) throw Error("planner: exemplar pool is empty");
    std::set<std::string> pool_set(pool.begin(), pool.end());
    for (const TrialPlan& t : plans)
        for (const std::string& id : t.stimuli)
            if (pool_set.count(id))
                throw Error("planner: exemplar pool overlaps test stimuli at '" + id + "'");

    Rng rng(seed);
    std::vector<std::string> sorted_pool(pool.begin(), pool.end());
    std::sort(sorted_pool.begin(), sorted_pool.end());

    // FR pools are grouped by content; every pool image must carry mos.
    std::map<std::string, std::vector<std::string>> pool_groups;
    for (const std::string& id : sorted_pool) {
        const ImageRecord& rec = manifest.record(id);
        if (rec.role == Role::Distorted) pool_groups[rec.content_group].push_back(id);
    }

    for (TrialPlan& t : plans) {
        if (t.spec.nlp_strategy != NlpStrategy::InContext) continue;
        Exemplar ex;
        const size_t tests = t.spec.scenario == Scenario::FR
                                 ? t.stimuli.size() - 1
                                 : t.stimuli.size();
        std::vector<std::string> picks;
        if (t.spec.scenario == Scenario::FR) {
            std::vector<std::string> eligible;
            for (const auto& [gid, members] : pool_groups)
                if (members.size() >= tests) eligible.push_back(gid);
            if (eligible.empty())
                throw Error("planner: no exemplar pool group with >= " + std::to_string(tests) +
                            " distorted images");
            const std::string gid = eligible[rng.below(eligible.size())];
            picks = pick_distinct(pool_groups[gid], tests, rng);
            ex.image_ids.push_back(manifest.reference_of(gid).image_id);
        } else {
            picks = pick_distinct(sorted_pool, tests, rng);
        }
        ex.image_ids.insert(ex.image_ids.end(), picks.begin(), picks.end());

        switch (t.spec.stimulus_method) {
            case StimulusMethod::Single:
                ex.score = scale_to_100(manifest.header(), manifest.record(picks[0]).mos);
                break;
            case StimulusMethod::Double: {
                const double a = manifest.record(picks[0]).mos;
                const double b = manifest.record(picks[1]).mos;
                ex.comparison = a > b ? 1 : (b > a ? 0 : 2);
                break;
            }
            case StimulusMethod::Multiple:
                ex.ranking = ranking_from_mos(manifest, picks);
                break;
        }
        t.spec.exemplar = std::move(ex);
    }
}

namespace {

json spec_to_json(const PromptSpec& spec) {
    json j;
    j["stimulus_method"] = to_string(spec.stimulus_method);
    j["nlp_strategy"] = to_string(spec.nlp_strategy);
    j["scenario"] = to_string(spec.scenario);
    j["list_size"] = spec.list_size;
    if (spec.exemplar) {
        json e;
        e["image_ids"] = spec.exemplar->image_ids;
        e["score"] = spec.exemplar->score;
        e["comparison"] = spec.exemplar->comparison;
        e["ranking"] = spec.exemplar->ranking;
        j["exemplar"] = std::move(e);
    }
    return j;
}

PromptSpec spec_from_json(const json& j) {
    PromptSpec spec;
    spec.stimulus_method = stimulus_method_from_string(j.at("stimulus_method").get<std::string>());
    spec.nlp_strategy = nlp_strategy_from_string(j.at("nlp_strategy").get<std::string>());
    spec.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    spec.list_size = j.at("list_size").get<int>();
    if (j.contains("exemplar")) {
        Exemplar ex;
        const json& e = j.at("exemplar");
        ex.image_ids = e.at("image_ids").get<std::vector<std::string>>();
        ex.score = e.at("score").get<double>();
        ex.comparison = e.at("comparison").get<int>();
        ex.ranking = e.at("ranking").get<std::vector<int>>();
        spec.exemplar = std::move(ex);
    }
    return spec;
}

}  // namespace

std::string plans_to_jsonl(const std::vector<TrialPlan>& plans) {
    std::ostringstream out;
    for (const TrialPlan& t : plans) {
        json j;
        j["trial_id"] = t.trial_id;
        j["spec"] = spec_to_json(t.spec);
        j["stimuli"] = t.stimuli;
        j["group_id"] = t.group_id;
        j["pad_count"] = t.pad_count;
        out << j.dump() << "\n";
    }
    return out.str();
}

std::vector<TrialPlan> plans_from_jsonl(const std::string& text) {
    std::vector<TrialPlan> plans;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        TrialPlan t;
        t.trial_id = j.at("trial_id").get<std::int64_t>();
        t.spec = spec_from_json(j.at("spec"));
        t.stimuli = j.at("stimuli").get<std::vector<std::string>>();
        t.group_id = j.at("group_id").get<std::string>();
        t.pad_count = j.at("pad_count").get<int>();
        plans.push_back(std::move(t));
    }
    return plans;
}

}  // namespace iqa
