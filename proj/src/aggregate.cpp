#include "iqabench/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "iqabench/error.hpp"

using json = nlohmann::ordered_json;

namespace iqa {

PreferenceMatrix::PreferenceMatrix(std::vector<std::string> ids) : ids_(std::move(ids)) {
    if (ids_.size() < 2) throw Error("preference matrix: need at least 2 items");
    for (size_t i = 0; i < ids_.size(); ++i) {
        if (!index_.emplace(ids_[i], i).second)
            throw Error("preference matrix: duplicate id '" + ids_[i] + "'");
    }
    counts_.assign(ids_.size() * ids_.size(), 0.0);
}

size_t PreferenceMatrix::index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw Error("preference matrix: unknown id '" + id + "'");
    return it->second;
}

void PreferenceMatrix::accumulate(const std::string& i_id, const std::string& j_id,
                                  PairResult result, TieMode tie_mode) {
    if (i_id == j_id) throw Error("preference matrix: cannot compare '" + i_id + "' with itself");
    const size_t i = index_of(i_id);
    const size_t j = index_of(j_id);
    const size_t m = ids_.size();
    switch (result) {
        case PairResult::FirstBetter: counts_[i * m + j] += 1.0; break;
        case PairResult::SecondBetter: counts_[j * m + i] += 1.0; break;
        case PairResult::Tie:
            if (tie_mode == TieMode::Half) {
                counts_[i * m + j] += 0.5;
                counts_[j * m + i] += 0.5;
            }
            break;
    }
}

double PreferenceMatrix::total() const {
    double acc = 0.0;
    for (double c : counts_) acc += c;
    return acc;
}

std::string PreferenceMatrix::to_json() const {
    json j;
    j["ids"] = ids_;
    j["counts"] = json::array();
    const size_t m = ids_.size();
    for (size_t i = 0; i < m; ++i)
        j["counts"].push_back(std::vector<double>(counts_.begin() + i * m,
                                                  counts_.begin() + (i + 1) * m));
    return j.dump(2) + "\n";
}

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kHalfLog2Pi = 0.9189385332046727418;

// log Phi(d); asymptotic expansion once erfc underflows range.
double log_phi_cdf(double d) {
    const double phi = 0.5 * std::erfc(-d * kInvSqrt2);
    if (phi > 1e-280) return std::log(phi);
    const double d2 = d * d;
    const double series = 1.0 - 1.0 / d2 + 3.0 / (d2 * d2) - 15.0 / (d2 * d2 * d2);
    return -0.5 * d2 - kHalfLog2Pi + std::log(-series / d);
}

// Inverse Mills ratio pdf/cdf of the standard normal.
double mills(double d) {
    const double cdf = 0.5 * std::erfc(-d * kInvSqrt2);
    if (cdf > 1e-280) {
        const double pdf = std::exp(-0.5 * d * d - kHalfLog2Pi);
        return pdf / cdf;
    }
    const double d2 = d * d;
    const double series = 1.0 - 1.0 / d2 + 3.0 / (d2 * d2) - 15.0 / (d2 * d2 * d2);
    return -d / series;
}

}  // namespace

double thurstone_log_posterior(const PreferenceMatrix& matrix, const std::vector<double>& mu,
                               double prior_std) {
    const size_t m = matrix.size();
    if (mu.size() != m) throw Error("thurstone: mu size mismatch");
    double L = 0.0;
    for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < m; ++j) {
            if (i == j) continue;
            const double c = matrix.count(i, j);
            if (c == 0.0) continue;
            L += c * log_phi_cdf((mu[i] - mu[j]) * kInvSqrt2);
        }
        L -= mu[i] * mu[i] / (2.0 * prior_std * prior_std);
    }
    return L;
}

std::vector<double> thurstone_gradient(const PreferenceMatrix& matrix,
                                       const std::vector<double>& mu, double prior_std) {
    const size_t m = matrix.size();
    std::vector<double> grad(m, 0.0);
    for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < m; ++j) {
            if (i == j) continue;
            const double c = matrix.count(i, j);
            if (c == 0.0) continue;
            const double g = c * mills((mu[i] - mu[j]) * kInvSqrt2) * kInvSqrt2;
            grad[i] += g;
            grad[j] -= g;
        }
        grad[i] -= mu[i] / (prior_std * prior_std);
    }
    return grad;
}

double QualityScale::mu_of(const std::string& id) const {
    for (size_t i = 0; i < ids.size(); ++i)
        if (ids[i] == id) return mu[i];
    throw Error("quality scale: unknown id '" + id + "'");
}

QualityScale thurstone_map(const PreferenceMatrix& matrix, const ThurstoneOptions& options) {
    const size_t m = matrix.size();
    if (matrix.total() == 0.0) throw Error("thurstone: empty preference matrix");
    if (options.prior_std <= 0.0) throw Error("thurstone: prior_std must be > 0");

    QualityScale scale;
    scale.ids = matrix.ids();
    std::vector<double> mu(m, 0.0);
    if (!options.init_mu.empty()) {
        if (options.init_mu.size() != m) throw Error("thurstone: init_mu size mismatch");
        mu = options.init_mu;
    }
    double L = thurstone_log_posterior(matrix, mu, options.prior_std);

    Eigen::MatrixXd neg_hess(m, m);
    Eigen::VectorXd g(m), step(m);
    int iter = 0;
    for (; iter < options.max_iter; ++iter) {
        const std::vector<double> grad = thurstone_gradient(matrix, mu, options.prior_std);
        double max_norm = 0.0;
        for (double v : grad) max_norm = std::max(max_norm, std::abs(v));
        if (max_norm <= options.tol) {
            scale.converged = true;
            break;
        }

        // Newton step on the strictly concave objective
        neg_hess.setZero();
        for (size_t i = 0; i < m; ++i) {
            for (size_t j = 0; j < m; ++j) {
                if (i == j) continue;
                const double c = matrix.count(i, j);
                if (c == 0.0) continue;
                const double d = (mu[i] - mu[j]) * kInvSqrt2;
                const double gm = mills(d);
                const double curv = c * 0.5 * (d * gm + gm * gm);  // -d^2/dmu_i^2 of the term
                neg_hess(i, i) += curv;
                neg_hess(j, j) += curv;
                neg_hess(i, j) -= curv;
                neg_hess(j, i) -= curv;
            }
            neg_hess(i, i) += 1.0 / (options.prior_std * options.prior_std);
            g(i) = grad[i];
        }
        Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_hess);
        if (ldlt.info() == Eigen::Success) {
            step = ldlt.solve(g);
        } else {
            step = g;  // gradient ascent fallback
        }

        const double slope = g.dot(step);
        // Near the optimum the predicted improvement drops below the rounding
        // noise of L and the Armijo test starts rejecting pure Newton steps;
        // take them unguarded there to finish the quadratic phase.
        if (slope <= 1e-12 * (1.0 + std::abs(L))) {
            for (size_t i = 0; i < m; ++i) mu[i] += step(i);
            L = thurstone_log_posterior(matrix, mu, options.prior_std);
            continue;
        }
        double alpha = 1.0;
        bool accepted = false;
        std::vector<double> mu_try(m);
        for (int bt = 0; bt < 60; ++bt) {
            for (size_t i = 0; i < m; ++i) mu_try[i] = mu[i] + alpha * step(i);
            const double L_try = thurstone_log_posterior(matrix, mu_try, options.prior_std);
            if (std::isfinite(L_try) && L_try >= L + 1e-4 * alpha * slope) {
                mu = mu_try;
                L = L_try;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) break;  // stalled; report non-convergence
    }

    scale.mu = std::move(mu);
    scale.log_posterior = L;
    scale.iterations = iter;
    return scale;
}

namespace {

// Test stimuli of a trial (FR drops the leading reference).
std::vector<std::string> test_stimuli(const TrialResult& trial, Scenario scenario) {
    if (scenario == Scenario::FR)
        return {trial.stimuli.begin() + 1, trial.stimuli.end()};
    return trial.stimuli;
}

}  // namespace

AggregateResult scale_per_group(const std::vector<TrialResult>& trials, Scenario scenario,
                                const AggregateOptions& options) {
    AggregateResult result;
    result.total_trials = trials.size();

    // matrix key: group id for FR, "global" for NR
    std::map<std::string, std::set<std::string>> members;
    std::map<std::string, std::vector<const TrialResult*>> by_key;
    for (const TrialResult& t : trials) {
        if (t.outcome.kind == OutcomeKind::Invalid) {
            ++result.invalid_trials;
            continue;
        }
        if (t.outcome.kind != OutcomeKind::Comparison && t.outcome.kind != OutcomeKind::Ranking)
            continue;  // single-stimulus scores are aggregated elsewhere
        std::string key = "global";
        if (scenario == Scenario::FR) {
            if (t.group_id.empty())
                throw Error("aggregate: FR trial " + std::to_string(t.trial_id) +
                            " has no group id");
            key = t.group_id;
        }
        for (const std::string& id : test_stimuli(t, scenario)) members[key].insert(id);
        by_key[key].push_back(&t);
    }

    for (const auto& [key, ids_set] : members) {
        std::vector<std::string> ids(ids_set.begin(), ids_set.end());
        if (ids.size() < 2) {
            result.unusable_groups.push_back(key);
            continue;
        }
        PreferenceMatrix matrix(std::move(ids));
        for (const TrialResult* t : by_key[key]) {
            const std::vector<std::string> stim = test_stimuli(*t, scenario);
            if (t->outcome.kind == OutcomeKind::Comparison) {
                if (stim.size() != 2)
                    throw Error("aggregate: comparison trial " + std::to_string(t->trial_id) +
                                " has " + std::to_string(stim.size()) + " test stimuli");
                const PairResult pr = t->outcome.comparison == 1   ? PairResult::FirstBetter
                                      : t->outcome.comparison == 0 ? PairResult::SecondBetter
                                                                   : PairResult::Tie;
                matrix.accumulate(stim[0], stim[1], pr, options.tie_mode);
            } else {
                if (stim.size() != t->outcome.ranking.size())
                    throw Error("aggregate: ranking size mismatch in trial " +
                                std::to_string(t->trial_id));
                for (const PairwiseOutcome& p : expand_ranking(t->outcome.ranking)) {
                    // padded lists repeat images; skip self-pairs
                    if (stim[p.i] == stim[p.j]) continue;
                    matrix.accumulate(stim[p.i], stim[p.j], p.result, options.tie_mode);
                }
            }
        }
        if (matrix.total() == 0.0) {
            result.unusable_groups.push_back(key);
            QualityScale dead;
            dead.ids = matrix.ids();
            dead.mu.assign(matrix.size(), 0.0);
            dead.usable = false;
            result.scales.emplace(key, std::move(dead));
            continue;
        }
        result.scales.emplace(key, thurstone_map(matrix, options.thurstone));
    }
    return result;
}

std::map<std::string, double> AggregateResult::predictions() const {
    std::map<std::string, double> out;
    for (const auto& [key, scale] : scales) {
        (void)key;
        if (!scale.usable) continue;
        for (size_t i = 0; i < scale.ids.size(); ++i) out[scale.ids[i]] = scale.mu[i];
    }
    return out;
}

std::string AggregateResult::to_json() const {
    json j;
    j["total_trials"] = total_trials;
    j["invalid_trials"] = invalid_trials;
    j["unusable_groups"] = unusable_groups;
    j["scales"] = json::object();
    for (const auto& [key, scale] : scales) {
        json s;
        s["ids"] = scale.ids;
        s["mu"] = scale.mu;
        s["log_posterior"] = scale.log_posterior;
        s["converged"] = scale.converged;
        s["iterations"] = scale.iterations;
        s["usable"] = scale.usable;
        j["scales"][key] = std::move(s);
    }
    return j.dump(2) + "\n";
}

AggregateResult AggregateResult::from_json(const std::string& text) {
    json j = json::parse(text);
    AggregateResult r;
    r.total_trials = j.at("total_trials").get<size_t>();
    r.invalid_trials = j.at("invalid_trials").get<size_t>();
    r.unusable_groups = j.at("unusable_groups").get<std::vector<std::string>>();
    for (const auto& [key, s] : j.at("scales").items()) {
        QualityScale scale;
        scale.ids = s.at("ids").get<std::vector<std::string>>();
        scale.mu = s.at("mu").get<std::vector<double>>();
        scale.log_posterior = s.at("log_posterior").get<double>();
        scale.converged = s.at("converged").get<bool>();
        scale.iterations = s.at("iterations").get<int>();
        scale.usable = s.at("usable").get<bool>();
        r.scales.emplace(key, std::move(scale));
    }
    return r;
}

}  // namespace iqa
