#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "iqabench/dataset.hpp"

namespace iqa {

enum class DiversityMode { MinToSet, MeanToSet };

struct SamplerConfig {
    int n_select = 15;      // N: references (FR) or images (NR; default there is 150)
    int k_select = 10;      // K: distorted per reference, FR only
    double lambda = 0.01;   // diversity trade-off
    double epsilon = 1.0;   // variance-normalization stabilizer, > 0
    DiversityMode diversity_mode = DiversityMode::MinToSet;
    std::uint64_t seed = 0;  // uniform mode only
    // When false the error denominator is 1 instead of std^2 + epsilon;
    // exists for the distribution-shift comparison, on by default.
    bool variance_normalize = true;
};

struct SelectionEntry {
    std::string image_id;
    double objective = 0.0;
    double error_term = 0.0;
    double diversity_term = 0.0;
};

struct SelectionResult {
    std::vector<SelectionEntry> selected;  // greedy order
    std::string to_json() const;
};

// Full FR selection: references plus per-group distorted picks.
struct FrSelection {
    SelectionResult references;
    std::map<std::string, SelectionResult> distorted;  // group id -> top-K
    std::string to_json() const;
};

struct FusionResult {
    std::vector<std::string> used_experts;
    std::vector<std::string> excluded_experts;  // constant columns
    std::vector<std::string> warnings;
};

// Remap each expert onto the human scale via the four-parameter logistic,
// then set fused_score = unweighted mean of the remapped experts.
FusionResult fuse_experts(ExpertScoreTable& table, const Manifest& manifest);

// Mean-squared-difference point-to-set distance in embedding space.
double diversity(const std::string& candidate_id, const std::vector<std::string>& selected,
                 const EmbeddingTable& embeddings, DiversityMode mode);

// Normalized squared error of the fused prediction against mos.
double prediction_error(const ImageRecord& rec, const ExpertScoreTable& table,
                        const SamplerConfig& config);

SelectionResult select_references_fr(const Manifest& manifest, const EmbeddingTable& embeddings,
                                     const ExpertScoreTable& table, const SamplerConfig& config);

SelectionResult select_distorted_fr(const Manifest& manifest, const std::string& group_id,
                                    const ExpertScoreTable& table, const SamplerConfig& config);

FrSelection select_difficult_fr(const Manifest& manifest, const EmbeddingTable& embeddings,
                                const ExpertScoreTable& table, const SamplerConfig& config);

SelectionResult select_images_nr(const Manifest& manifest, const EmbeddingTable& embeddings,
                                 const ExpertScoreTable& table, const SamplerConfig& config);

// Uniform baseline. FR: N references uniformly, then K distorted per group by
// stratified quantile sampling over mos. NR: N images uniformly.
FrSelection sample_uniform_fr(const Manifest& manifest, const SamplerConfig& config);
SelectionResult sample_uniform_nr(const Manifest& manifest, const SamplerConfig& config);

}  // namespace iqa
