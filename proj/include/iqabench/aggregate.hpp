#pragma once

#include <map>
#include <string>
#include <vector>

#include "iqabench/gateway.hpp"
#include "iqabench/prompts.hpp"

namespace iqa {

enum class TieMode { Half, Discard };

// M x M win-count matrix C; C[i][j] counts (possibly fractionally) how often
// item i was preferred over item j.
class PreferenceMatrix {
public:
    explicit PreferenceMatrix(std::vector<std::string> ids);

    void accumulate(const std::string& i_id, const std::string& j_id, PairResult result,
                    TieMode tie_mode = TieMode::Half);

    size_t size() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }
    double count(size_t i, size_t j) const { return counts_[i * ids_.size() + j]; }
    double total() const;
    size_t index_of(const std::string& id) const;

    std::string to_json() const;

private:
    std::vector<std::string> ids_;
    std::map<std::string, size_t> index_;
    std::vector<double> counts_;
};

struct ThurstoneOptions {
    double prior_std = 4.0;
    double tol = 1e-8;       // gradient max-norm
    int max_iter = 10000;
    std::vector<double> init_mu;  // optional starting point; defaults to zeros
};

struct QualityScale {
    std::vector<std::string> ids;
    std::vector<double> mu;
    double log_posterior = 0.0;
    bool converged = false;
    int iterations = 0;
    bool usable = true;  // false when the matrix had no usable comparisons

    double mu_of(const std::string& id) const;
};

// MAP log-posterior under Thurstone Case V with an independent zero-mean
// Gaussian prior; preference probability Phi((mu_i - mu_j)/sqrt(2)).
double thurstone_log_posterior(const PreferenceMatrix& matrix, const std::vector<double>& mu,
                               double prior_std);
std::vector<double> thurstone_gradient(const PreferenceMatrix& matrix,
                                       const std::vector<double>& mu, double prior_std);

QualityScale thurstone_map(const PreferenceMatrix& matrix, const ThurstoneOptions& options = {});

struct AggregateOptions {
    ThurstoneOptions thurstone;
    TieMode tie_mode = TieMode::Half;
};

struct AggregateResult {
    std::map<std::string, QualityScale> scales;  // FR: per group; NR: {"global"}
    std::vector<std::string> unusable_groups;
    size_t invalid_trials = 0;
    size_t total_trials = 0;

    // Flattened mu per image over usable scales.
    std::map<std::string, double> predictions() const;
    std::string to_json() const;
    static AggregateResult from_json(const std::string& text);
};

// Build per-group (FR) or global (NR) matrices from double/multiple trial
// results and solve each. Invalid trials are excluded and counted.
AggregateResult scale_per_group(const std::vector<TrialResult>& trials, Scenario scenario,
                                const AggregateOptions& options = {});

}  // namespace iqa
