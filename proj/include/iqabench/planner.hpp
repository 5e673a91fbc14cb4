#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iqabench/dataset.hpp"
#include "iqabench/prompts.hpp"

namespace iqa {

struct TrialPlan {
    std::int64_t trial_id = 0;
    PromptSpec spec;
    std::vector<std::string> stimuli;  // presentation order; FR puts the group reference first
    std::string group_id;              // empty for NR
    int pad_count = 0;                 // repeated images appended to short multiple lists
};

struct PlannerConfig {
    int pair_budget = 6;  // B: pairs per image in NR double-stimulus plans
    std::uint64_t seed = 0;
};

// One trial per test image; FR attaches the group reference first.
std::vector<TrialPlan> plan_single(const Manifest& manifest, const std::vector<std::string>& images,
                                   PromptSpec spec);

// FR: every within-group pair, K(K-1)/2 per group. NR: a seeded random
// B-regular pairing with no duplicate unordered pair.
std::vector<TrialPlan> plan_double(const Manifest& manifest, const std::vector<std::string>& images,
                                   PromptSpec spec, const PlannerConfig& config);

// FR: each group partitioned into ceil(K/L) lists, the remainder list padded
// with flagged repeats. NR: seeded shuffle partitioned into lists of L.
std::vector<TrialPlan> plan_multiple(const Manifest& manifest,
                                     const std::vector<std::string>& images, PromptSpec spec,
                                     const PlannerConfig& config);

// Draw one solved exemplar per trial from the pool (disjoint from the test
// selection), with human values filled from the manifest.
void assign_exemplars(std::vector<TrialPlan>& plans, const Manifest& manifest,
                      const std::vector<std::string>& pool, std::uint64_t seed);

std::string plans_to_jsonl(const std::vector<TrialPlan>& plans);
std::vector<TrialPlan> plans_from_jsonl(const std::string& text);

}  // namespace iqa
