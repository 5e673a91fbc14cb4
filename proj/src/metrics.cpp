#include "iqabench/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "iqabench/error.hpp"

using json = nlohmann::ordered_json;

namespace iqa {

namespace {

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size()));
}

bool is_constant(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double LogisticFit::map(double q) const {
    if (linear_fallback) return fallback_a * q + fallback_b;
    return (eta1 - eta2) / (1.0 + std::exp(-(q - eta3) / std::abs(eta4))) + eta2;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw Error("pearson: length mismatch");
    if (a.size() < 2) throw Error("pearson: need at least 2 points");
    const double ma = mean_of(a), mb = mean_of(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) throw Error("pearson: constant input");
    return sab / std::sqrt(saa * sbb);
}

std::vector<double> average_ranks(const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        // ties get the mean of ranks i+1 .. j+1
        const double r = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double srcc(const std::vector<double>& pred, const std::vector<double>& target, bool* degenerate) {
    if (pred.size() != target.size()) throw Error("srcc: length mismatch");
    if (pred.size() < 3) throw Error("srcc: need at least 3 points");
    if (is_constant(target)) throw Error("srcc: constant target");
    if (degenerate) *degenerate = false;
    if (is_constant(pred)) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    return pearson(average_ranks(pred), average_ranks(target));
}

namespace {

// Residuals and Jacobian of the logistic model at params (e1, e2, e3, t>0).
void logistic_residuals(const std::vector<double>& q, const std::vector<double>& y,
                        const double p[4], std::vector<double>& r,
                        std::vector<std::array<double, 4>>* jac) {
    const double e1 = p[0], e2 = p[1], e3 = p[2], t = p[3];
    for (size_t i = 0; i < q.size(); ++i) {
        const double z = (q[i] - e3) / t;
        const double s = 1.0 / (1.0 + std::exp(-z));
        r[i] = e2 + (e1 - e2) * s - y[i];
        if (jac) {
            const double ds = s * (1.0 - s);
            (*jac)[i] = {s, 1.0 - s, -(e1 - e2) * ds / t, -(e1 - e2) * ds * (q[i] - e3) / (t * t)};
        }
    }
}

double sum_sq(const std::vector<double>& r) {
    double acc = 0.0;
    for (double x : r) acc += x * x;
    return acc;
}

// Solve the 4x4 normal equations (JtJ + damp*diag(JtJ)) dx = -Jtr via
// Gaussian elimination with partial pivoting. Returns false if singular.
bool solve4(double A[4][4], double b[4], double x[4]) {
    int piv[4] = {0, 1, 2, 3};
    for (int c = 0; c < 4; ++c) {
        int best = c;
        for (int rr = c + 1; rr < 4; ++rr)
            if (std::abs(A[rr][c]) > std::abs(A[best][c])) best = rr;
        if (std::abs(A[best][c]) < 1e-300) return false;
        std::swap(A[c], A[best]);
        std::swap(b[c], b[best]);
        (void)piv;
        for (int rr = c + 1; rr < 4; ++rr) {
            const double f = A[rr][c] / A[c][c];
            for (int cc = c; cc < 4; ++cc) A[rr][cc] -= f * A[c][cc];
            b[rr] -= f * b[c];
        }
    }
    for (int c = 3; c >= 0; --c) {
        double acc = b[c];
        for (int cc = c + 1; cc < 4; ++cc) acc -= A[c][cc] * x[cc];
        x[c] = acc / A[c][c];
    }
    return true;
}

struct LmResult {
    double p[4];
    double ssr = std::numeric_limits<double>::infinity();
    bool converged = false;
};

LmResult lm_fit(const std::vector<double>& q, const std::vector<double>& y,
                const double init[4], int max_iter, double step_tol) {
    const size_t n = q.size();
    LmResult res;
    double p[4] = {init[0], init[1], init[2], std::max(std::abs(init[3]), 1e-8)};
    std::vector<double> r(n), r_try(n);
    std::vector<std::array<double, 4>> jac(n);
    logistic_residuals(q, y, p, r, &jac);
    double ssr = sum_sq(r);
    double damp = 1e-3;
    bool converged = false;
    for (int iter = 0; iter < max_iter; ++iter) {
        double A[4][4] = {};
        double g[4] = {};
        for (size_t i = 0; i < n; ++i) {
            for (int a = 0; a < 4; ++a) {
                g[a] -= jac[i][a] * r[i];
                for (int b = 0; b < 4; ++b) A[a][b] += jac[i][a] * jac[i][b];
            }
        }
        double Ad[4][4];
        double bd[4];
        bool stepped = false;
        for (int tries = 0; tries < 40 && !stepped; ++tries) {
            for (int a = 0; a < 4; ++a) {
                for (int b = 0; b < 4; ++b) Ad[a][b] = A[a][b];
                Ad[a][a] += damp * std::max(A[a][a], 1e-12);
                bd[a] = g[a];
            }
            double dx[4];
            if (!solve4(Ad, bd, dx)) {
                damp *= 10.0;
                continue;
            }
            double p_try[4] = {p[0] + dx[0], p[1] + dx[1], p[2] + dx[2], p[3] + dx[3]};
            if (p_try[3] < 1e-8) p_try[3] = 1e-8;
            logistic_residuals(q, y, p_try, r_try, nullptr);
            const double ssr_try = sum_sq(r_try);
            if (std::isfinite(ssr_try) && ssr_try <= ssr) {
                const double step_norm = std::sqrt(dx[0] * dx[0] + dx[1] * dx[1] +
                                                   dx[2] * dx[2] + dx[3] * dx[3]);
                for (int a = 0; a < 4; ++a) p[a] = p_try[a];
                ssr = ssr_try;
                damp = std::max(damp / 3.0, 1e-12);
                stepped = true;
                if (step_norm <= step_tol) converged = true;
            } else {
                damp *= 2.0;
            }
        }
        if (!stepped || converged) {
            converged = converged || !stepped;
            break;
        }
        logistic_residuals(q, y, p, r, &jac);
    }
    for (int a = 0; a < 4; ++a) res.p[a] = p[a];
    res.ssr = ssr;
    res.converged = converged;
    return res;
}

// Variable-projection polish over (e3, log t): (e1, e2) are re-solved
// linearly at every evaluation. Handles the near-affine regime where the
// full LM stalls in a flat valley of growing t.
struct VarproEval {
    double ssr;
    double a, b;  // f = a*s + b, so e1 = a + b, e2 = b
};

VarproEval varpro_eval(const std::vector<double>& q, const std::vector<double>& y,
                       double e3, double logt) {
    const double t = std::exp(logt);
    const size_t n = q.size();
    double s_sum = 0, ss_sum = 0, sy_sum = 0, y_sum = 0;
    std::vector<double> s(n);
    for (size_t i = 0; i < n; ++i) {
        const double z = (q[i] - e3) / t;
        s[i] = 1.0 / (1.0 + std::exp(-z));
        s_sum += s[i];
        ss_sum += s[i] * s[i];
        sy_sum += s[i] * y[i];
        y_sum += y[i];
    }
    const double nn = static_cast<double>(n);
    const double det = ss_sum * nn - s_sum * s_sum;
    VarproEval ev{};
    if (std::abs(det) < 1e-300) {
        ev.a = 0.0;
        ev.b = y_sum / nn;
    } else {
        ev.a = (sy_sum * nn - s_sum * y_sum) / det;
        ev.b = (ss_sum * y_sum - s_sum * sy_sum) / det;
    }
    double ssr = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double r = ev.a * s[i] + ev.b - y[i];
        ssr += r * r;
    }
    ev.ssr = ssr;
    return ev;
}

void varpro_polish(const std::vector<double>& q, const std::vector<double>& y,
                   double p[4], double* ssr_out) {
    double e3 = p[2];
    double logt = std::log(std::max(p[3], 1e-8));
    VarproEval best = varpro_eval(q, y, e3, logt);
    const double e3_scale = std::max(stddev_of(q), 1e-6);
    double h3 = 0.25 * e3_scale, hl = 0.25;
    for (int iter = 0; iter < 400; ++iter) {
        bool improved = false;
        // coordinate pattern search; shrink on failure
        const double cand3[] = {e3 - h3, e3 + h3};
        for (double c : cand3) {
            VarproEval ev = varpro_eval(q, y, c, logt);
            if (ev.ssr < best.ssr) {
                best = ev;
                e3 = c;
                improved = true;
            }
        }
        const double candl[] = {logt - hl, logt + hl};
        for (double c : candl) {
            if (c > 40.0) continue;  // t overflow guard
            VarproEval ev = varpro_eval(q, y, e3, c);
            if (ev.ssr < best.ssr) {
                best = ev;
                logt = c;
                improved = true;
            }
        }
        if (!improved) {
            h3 *= 0.5;
            hl *= 0.5;
            if (h3 < 1e-12 * e3_scale && hl < 1e-12) break;
        }
    }
    if (best.ssr < *ssr_out) {
        p[0] = best.a + best.b;
        p[1] = best.b;
        p[2] = e3;
        p[3] = std::exp(logt);
        *ssr_out = best.ssr;
    }
}

}  // namespace

LogisticFit fit_logistic(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size()) throw Error("fit_logistic: length mismatch");
    if (pred.size() < 5) throw Error("fit_logistic: need at least 5 points");
    if (is_constant(pred)) throw Error("fit_logistic: constant pred");

    const double y_max = *std::max_element(target.begin(), target.end());
    const double y_min = *std::min_element(target.begin(), target.end());
    const double q_med = median_of(pred);
    const double q_std = stddev_of(pred);
    const double t0 = std::max(q_std / 4.0, 1e-6);

    // Multistart: base init plus two perturbations of (eta3, eta4).
    const double starts[3][4] = {
        {y_max, y_min, q_med, t0},
        {y_max, y_min, q_med + 0.5 * q_std, 2.0 * t0},
        {y_max, y_min, q_med - 0.5 * q_std, 0.5 * t0},
    };

    LmResult best;
    for (const auto& s : starts) {
        LmResult r = lm_fit(pred, target, s, 2000, 1e-10);
        if (r.ssr < best.ssr) best = r;
    }

    LogisticFit fit;
    if (!std::isfinite(best.ssr)) {
        // all starts diverged: affine fallback
        fit.linear_fallback = true;
        const double mp = mean_of(pred), mt = mean_of(target);
        double spp = 0.0, spt = 0.0;
        for (size_t i = 0; i < pred.size(); ++i) {
            spp += (pred[i] - mp) * (pred[i] - mp);
            spt += (pred[i] - mp) * (target[i] - mt);
        }
        fit.fallback_a = spt / spp;
        fit.fallback_b = mt - fit.fallback_a * mp;
        double ssr = 0.0;
        for (size_t i = 0; i < pred.size(); ++i) {
            const double r = fit.fallback_a * pred[i] + fit.fallback_b - target[i];
            ssr += r * r;
        }
        fit.residual_rms = std::sqrt(ssr / static_cast<double>(pred.size()));
        return fit;
    }

    double ssr = best.ssr;
    varpro_polish(pred, target, best.p, &ssr);
    fit.eta1 = best.p[0];
    fit.eta2 = best.p[1];
    fit.eta3 = best.p[2];
    fit.eta4 = best.p[3];
    fit.residual_rms = std::sqrt(ssr / static_cast<double>(pred.size()));
    fit.converged = best.converged;
    return fit;
}

double plcc(const std::vector<double>& pred, const std::vector<double>& target,
            LogisticFit* fit_out) {
    LogisticFit fit = fit_logistic(pred, target);
    if (fit_out) *fit_out = fit;
    std::vector<double> mapped(pred.size());
    for (size_t i = 0; i < pred.size(); ++i) mapped[i] = fit.map(pred[i]);
    if (is_constant(mapped)) return 0.0;
    if (is_constant(target)) throw Error("plcc: constant target");
    return pearson(mapped, target);
}

namespace {

GroupMetrics compute_group(const std::string& gid, const std::vector<double>& pred,
                           const std::vector<double>& target,
                           const LogisticFit* shared_fit) {
    GroupMetrics g;
    g.group_id = gid;
    g.n = pred.size();
    g.srcc = srcc(pred, target, &g.srcc_degenerate);
    if (g.srcc_degenerate) {
        g.plcc = 0.0;
        g.fit.linear_fallback = true;
        return g;
    }
    if (shared_fit) {
        g.fit = *shared_fit;
        std::vector<double> mapped(pred.size());
        for (size_t i = 0; i < pred.size(); ++i) mapped[i] = shared_fit->map(pred[i]);
        g.plcc = is_constant(mapped) ? 0.0 : pearson(mapped, target);
    } else if (pred.size() >= 5) {
        g.plcc = plcc(pred, target, &g.fit);
    } else {
        // too few points for the logistic; plain Pearson
        g.fit.linear_fallback = true;
        g.plcc = pearson(pred, target);
    }
    return g;
}

}  // namespace

MetricReport grouped_metrics(const std::map<std::string, double>& predictions,
                             const Manifest& manifest,
                             const GroupedMetricsOptions& options) {
    MetricReport report;
    report.scenario = manifest.header().scenario;

    if (report.scenario == Scenario::FR) {
        std::optional<LogisticFit> shared;
        if (options.global_logistic_fit) {
            std::vector<double> all_pred, all_target;
            for (const auto& [id, p] : predictions) {
                if (!manifest.contains(id)) continue;
                all_pred.push_back(p);
                all_target.push_back(manifest.record(id).mos);
            }
            shared = fit_logistic(all_pred, all_target);
        }
        double srcc_sum = 0.0, plcc_sum = 0.0;
        size_t usable = 0;
        for (const std::string& gid : manifest.group_ids()) {
            std::vector<double> pred, target;
            for (const ImageRecord* rec : manifest.distorted_of(gid)) {
                auto it = predictions.find(rec->image_id);
                if (it == predictions.end()) continue;
                pred.push_back(it->second);
                target.push_back(rec->mos);
            }
            if (pred.size() < 3) {
                report.excluded_groups.push_back(gid);
                continue;
            }
            GroupMetrics g = compute_group(gid, pred, target, shared ? &*shared : nullptr);
            srcc_sum += g.srcc;
            plcc_sum += g.plcc;
            ++usable;
            report.groups.push_back(std::move(g));
        }
        if (usable > 0) {
            report.mean_srcc = srcc_sum / static_cast<double>(usable);
            report.mean_plcc = plcc_sum / static_cast<double>(usable);
        }
    } else {
        std::vector<double> pred, target;
        for (const auto& [id, p] : predictions) {
            if (!manifest.contains(id)) continue;
            pred.push_back(p);
            target.push_back(manifest.record(id).mos);
        }
        if (pred.size() < 3) {
            report.excluded_groups.push_back("global");
            return report;
        }
        GroupMetrics g = compute_group("global", pred, target, nullptr);
        report.global_srcc = g.srcc;
        report.global_plcc = g.plcc;
        report.groups.push_back(std::move(g));
    }
    return report;
}

namespace {

json fit_to_json(const LogisticFit& f) {
    json j;
    j["eta1"] = f.eta1;
    j["eta2"] = f.eta2;
    j["eta3"] = f.eta3;
    j["eta4"] = f.eta4;
    j["residual_rms"] = f.residual_rms;
    j["converged"] = f.converged;
    j["linear_fallback"] = f.linear_fallback;
    return j;
}

}  // namespace

std::string MetricReport::to_json() const {
    json j;
    j["scenario"] = iqa::to_string(scenario);
    if (mean_srcc) j["mean_srcc"] = *mean_srcc;
    if (mean_plcc) j["mean_plcc"] = *mean_plcc;
    if (global_srcc) j["global_srcc"] = *global_srcc;
    if (global_plcc) j["global_plcc"] = *global_plcc;
    j["invalid_trial_rate"] = invalid_trial_rate;
    j["clamp_rate"] = clamp_rate;
    j["excluded_groups"] = excluded_groups;
    j["groups"] = json::array();
    for (const GroupMetrics& g : groups) {
        json gj;
        gj["group_id"] = g.group_id;
        gj["n"] = g.n;
        gj["srcc"] = g.srcc;
        gj["plcc"] = g.plcc;
        gj["srcc_degenerate"] = g.srcc_degenerate;
        gj["fit"] = fit_to_json(g.fit);
        j["groups"].push_back(std::move(gj));
    }
    return j.dump(2) + "\n";
}

std::string MetricReport::to_csv() const {
    std::ostringstream out;
    out << "group_id,n,srcc,plcc,srcc_degenerate,fit_fallback\n";
    out.precision(17);
    for (const GroupMetrics& g : groups) {
        out << g.group_id << ',' << g.n << ',' << g.srcc << ',' << g.plcc << ','
            << (g.srcc_degenerate ? 1 : 0) << ',' << (g.fit.linear_fallback ? 1 : 0) << "\n";
    }
    return out.str();
}

}  // namespace iqa
