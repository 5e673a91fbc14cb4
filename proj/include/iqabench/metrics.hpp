#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iqabench/dataset.hpp"

namespace iqa {

// Four-parameter logistic q_hat = (eta1-eta2)/(1+exp(-(q-eta3)/|eta4|)) + eta2.
struct LogisticFit {
    double eta1 = 0.0;
    double eta2 = 0.0;
    double eta3 = 0.0;
    double eta4 = 1.0;
    double residual_rms = 0.0;
    bool converged = false;
    bool linear_fallback = false;  // logistic diverged, affine fit used
    // Fallback affine coefficients (target ~= a*pred + b) when linear_fallback.
    double fallback_a = 0.0;
    double fallback_b = 0.0;

    double map(double q) const;
};

double pearson(const std::vector<double>& a, const std::vector<double>& b);

// Fractional (average) ranks, 1-based; ties share the mean rank.
std::vector<double> average_ranks(const std::vector<double>& v);

// Spearman rank correlation via Pearson on average ranks.
// Constant pred yields 0 and sets *degenerate when provided.
double srcc(const std::vector<double>& pred, const std::vector<double>& target,
            bool* degenerate = nullptr);

LogisticFit fit_logistic(const std::vector<double>& pred, const std::vector<double>& target);

// Pearson correlation after the logistic remap of pred.
double plcc(const std::vector<double>& pred, const std::vector<double>& target,
            LogisticFit* fit_out = nullptr);

struct GroupMetrics {
    std::string group_id;
    double srcc = 0.0;
    double plcc = 0.0;
    size_t n = 0;
    bool srcc_degenerate = false;
    LogisticFit fit;
};

struct MetricReport {
    Scenario scenario = Scenario::NR;
    std::vector<GroupMetrics> groups;        // FR per-group rows; NR has one "global" row
    std::optional<double> mean_srcc;         // FR: unweighted mean over usable groups
    std::optional<double> mean_plcc;
    std::optional<double> global_srcc;       // NR: single global computation
    std::optional<double> global_plcc;
    std::vector<std::string> excluded_groups;  // < 3 usable predictions
    double invalid_trial_rate = 0.0;
    double clamp_rate = 0.0;

    std::string to_json() const;
    std::string to_csv() const;  // flat per-group rows
};

struct GroupedMetricsOptions {
    // FR: fit the logistic per group (default) or once globally before
    // computing per-group PLCC.
    bool global_logistic_fit = false;
};

MetricReport grouped_metrics(const std::map<std::string, double>& predictions,
                             const Manifest& manifest,
                             const GroupedMetricsOptions& options = {});

}  // namespace iqa
