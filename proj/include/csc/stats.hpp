#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace csc {

struct StatsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ScoredCase {
    double score = 0;  // probability of CSC, or {0,1} for a binary rater
    int label = 0;     // truth
};

struct RocPoint {
    double fpr = 0;
    double tpr = 0;
    double threshold = 0;
};

struct RocCurve {
    std::vector<RocPoint> points;
};

struct ConfusionMatrix {
    long tp = 0, fp = 0, tn = 0, fn = 0;
    long total() const { return tp + fp + tn + fn; }
    double accuracy() const { return static_cast<double>(tp + tn) / static_cast<double>(total()); }
    double sensitivity() const { return static_cast<double>(tp) / static_cast<double>(tp + fn); }
    double specificity() const { return static_cast<double>(tn) / static_cast<double>(tn + fp); }
};

struct KappaResult {
    double kappa = 0;
    double se0 = 0;  // standard error under H0: kappa = 0
    double z = 0;
    double p_value = 0;
};

namespace detail {
inline void check_two_classes(const std::vector<ScoredCase>& cases) {
    bool has_pos = false, has_neg = false;
    for (const auto& c : cases) {
        if (c.label == 1)
            has_pos = true;
        else if (c.label == 0)
            has_neg = true;
        else
            throw StatsError("labels must be 0 or 1");
    }
    if (!has_pos || !has_neg) throw StatsError("degenerate labels");
}
}  // namespace detail

// Empirical ROC over the unique score thresholds, descending. tpr/fpr are the
// fractions with score >= threshold.
inline RocCurve roc_curve(const std::vector<ScoredCase>& cases) {
    detail::check_two_classes(cases);
    std::vector<double> thresholds;
    for (const auto& c : cases) thresholds.push_back(c.score);
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    long n_pos = 0, n_neg = 0;
    for (const auto& c : cases) (c.label == 1 ? n_pos : n_neg)++;

    RocCurve curve;
    curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    for (double t : thresholds) {
        long tp = 0, fp = 0;
        for (const auto& c : cases) {
            if (c.score >= t) (c.label == 1 ? tp : fp)++;
        }
        curve.points.push_back({static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos, t});
    }
    curve.points.push_back({1.0, 1.0, -std::numeric_limits<double>::infinity()});
    return curve;
}

// Mann-Whitney AUC, ties credited 0.5. Rank-based O((m+n) log(m+n)).
inline double auc(const std::vector<ScoredCase>& cases) {
    detail::check_two_classes(cases);
    std::vector<std::size_t> order(cases.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&cases](std::size_t a, std::size_t b) { return cases[a].score < cases[b].score; });

    // midranks
    std::vector<double> rank(cases.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && cases[order[j + 1]].score == cases[order[i]].score) ++j;
        double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }
    double rank_sum_pos = 0;
    long m = 0, n = 0;
    for (std::size_t k = 0; k < cases.size(); ++k) {
        if (cases[k].label == 1) {
            rank_sum_pos += rank[k];
            ++m;
        } else {
            ++n;
        }
    }
    return (rank_sum_pos - static_cast<double>(m) * (m + 1) / 2.0) /
           (static_cast<double>(m) * static_cast<double>(n));
}

inline double trapezoid_area(const RocCurve& curve) {
    double area = 0;
    for (std::size_t k = 1; k < curve.points.size(); ++k) {
        const auto& p0 = curve.points[k - 1];
        const auto& p1 = curve.points[k];
        area += (p1.fpr - p0.fpr) * (p0.tpr + p1.tpr) / 2.0;
    }
    return area;
}

inline double normal_quantile(double p) {
    // Acklam's rational approximation; |error| < 1.15e-9.
    if (p <= 0 || p >= 1) throw StatsError("quantile argument out of (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1 - plow;
    double q, r;
    if (p < plow) {
        q = std::sqrt(-2 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    if (p > phigh) {
        q = std::sqrt(-2 * std::log(1 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    q = p - 0.5;
    r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct AucCi {
    double auc = 0;
    double se = 0;
    double lo = 0;
    double hi = 0;
};

// DeLong variance from the structural components V10 (per positive) and V01
// (per negative); CI = auc +/- z * se, clamped to [0,1].
inline AucCi auc_ci_delong(const std::vector<ScoredCase>& cases, double level = 0.95) {
    detail::check_two_classes(cases);
    std::vector<double> pos, neg;
    for (const auto& c : cases) (c.label == 1 ? pos : neg).push_back(c.score);
    const std::size_t m = pos.size(), n = neg.size();
    if (m < 2 || n < 2) throw StatsError("variance undefined");

    auto kernel = [](double sp, double sn) { return sp > sn ? 1.0 : sp == sn ? 0.5 : 0.0; };
    std::vector<double> v10(m, 0.0), v01(n, 0.0);
    double a = 0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double k = kernel(pos[i], neg[j]);
            v10[i] += k;
            v01[j] += k;
            a += k;
        }
    }
    a /= static_cast<double>(m) * static_cast<double>(n);
    for (auto& v : v10) v /= static_cast<double>(n);
    for (auto& v : v01) v /= static_cast<double>(m);

    auto sample_var = [](const std::vector<double>& v, double mean) {
        double s = 0;
        for (double x : v) s += (x - mean) * (x - mean);
        return s / static_cast<double>(v.size() - 1);
    };
    double var = sample_var(v10, a) / static_cast<double>(m) +
                 sample_var(v01, a) / static_cast<double>(n);
    double se = std::sqrt(std::max(var, 0.0));
    double z = normal_quantile(0.5 + level / 2.0);
    return {a, se, std::clamp(a - z * se, 0.0, 1.0), std::clamp(a + z * se, 0.0, 1.0)};
}

// Positive prediction iff score >= t.
inline ConfusionMatrix confusion_at_threshold(const std::vector<ScoredCase>& cases, double t = 0.5) {
    ConfusionMatrix cm;
    for (const auto& c : cases) {
        bool pred = c.score >= t;
        if (c.label == 1)
            (pred ? cm.tp : cm.fn)++;
        else
            (pred ? cm.fp : cm.tn)++;
    }
    return cm;
}

// Cohen's kappa with Fleiss's H0 standard error and two-sided p-value.
inline KappaResult cohen_kappa(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size() || a.size() < 2) throw StatsError("need equal lengths >= 2");
    const double n = static_cast<double>(a.size());
    double table[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < a.size(); ++i) {
        if ((a[i] != 0 && a[i] != 1) || (b[i] != 0 && b[i] != 1))
            throw StatsError("labels must be 0 or 1");
        table[a[i]][b[i]] += 1.0;
    }
    double pa[2] = {(table[0][0] + table[0][1]) / n, (table[1][0] + table[1][1]) / n};
    double pb[2] = {(table[0][0] + table[1][0]) / n, (table[0][1] + table[1][1]) / n};
    double po = (table[0][0] + table[1][1]) / n;
    double pe = pa[0] * pb[0] + pa[1] * pb[1];
    if (pe >= 1.0) throw StatsError("undefined kappa");

    KappaResult r;
    r.kappa = (po - pe) / (1.0 - pe);
    double s = 0;
    for (int k = 0; k < 2; ++k) s += pa[k] * pb[k] * (pa[k] + pb[k]);
    r.se0 = std::sqrt(pe + pe * pe - s) / ((1.0 - pe) * std::sqrt(n));
    r.z = r.se0 > 0 ? r.kappa / r.se0 : 0.0;
    r.p_value = 2.0 * (1.0 - normal_cdf(std::abs(r.z)));
    return r;
}

// Seeded percentile bootstrap for cross-checking the DeLong CI.
template <typename Rng>
inline std::pair<double, double> auc_ci_bootstrap(const std::vector<ScoredCase>& cases,
                                                  int replicates, Rng& rng, double level = 0.95) {
    std::vector<std::size_t> pos_idx, neg_idx;
    for (std::size_t i = 0; i < cases.size(); ++i)
        (cases[i].label == 1 ? pos_idx : neg_idx).push_back(i);
    std::vector<double> aucs;
    aucs.reserve(static_cast<std::size_t>(replicates));
    std::vector<ScoredCase> rep(cases.size());
    for (int r = 0; r < replicates; ++r) {
        // Stratified resample keeps both classes present.
        for (std::size_t i = 0; i < pos_idx.size(); ++i)
            rep[i] = cases[pos_idx[rng.next_below(pos_idx.size())]];
        for (std::size_t i = 0; i < neg_idx.size(); ++i)
            rep[pos_idx.size() + i] = cases[neg_idx[rng.next_below(neg_idx.size())]];
        aucs.push_back(auc(rep));
    }
    std::sort(aucs.begin(), aucs.end());
    double alpha = (1.0 - level) / 2.0;
    auto at = [&aucs](double q) {
        double idx = q * (static_cast<double>(aucs.size()) - 1.0);
        std::size_t lo = static_cast<std::size_t>(idx);
        std::size_t hi = std::min(lo + 1, aucs.size() - 1);
        double w = idx - static_cast<double>(lo);
        return (1.0 - w) * aucs[lo] + w * aucs[hi];
    };
    return {at(alpha), at(1.0 - alpha)};
}

// ---- report assembly ----

struct RaterSet {
    std::string name;
    std::vector<int> labels;  // aligned with the case order
};

inline nlohmann::json roc_to_json(const RocCurve& curve) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : curve.points) {
        double t = p.threshold;
        if (std::isinf(t)) t = t > 0 ? 1e308 : -1e308;  // JSON has no infinity
        arr.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}, {"threshold", t}});
    }
    return arr;
}

inline nlohmann::json confusion_to_json(const ConfusionMatrix& cm) {
    return {{"tp", cm.tp}, {"fp", cm.fp}, {"tn", cm.tn}, {"fn", cm.fn}};
}

// Assembles AUC + CI, ROC points, confusion/accuracy and pairwise kappas for
// the model and each rater into one JSON document.
inline nlohmann::json evaluation_report(const std::vector<double>& model_scores,
                                        const std::vector<int>& truth,
                                        const std::vector<RaterSet>& raters,
                                        double threshold = 0.5) {
    if (model_scores.size() != truth.size()) throw StatsError("scores/truth size mismatch");
    for (const auto& r : raters)
        if (r.labels.size() != truth.size()) throw StatsError("rater size mismatch: " + r.name);

    std::vector<ScoredCase> model_cases(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) model_cases[i] = {model_scores[i], truth[i]};

    auto subject_json = [threshold](const std::vector<ScoredCase>& cases) {
        nlohmann::json j;
        AucCi ci = auc_ci_delong(cases);
        j["auc"] = ci.auc;
        j["auc_ci"] = {ci.lo, ci.hi};
        j["auc_se"] = ci.se;
        ConfusionMatrix cm = confusion_at_threshold(cases, threshold);
        j["confusion"] = confusion_to_json(cm);
        j["accuracy"] = cm.accuracy();
        j["roc_points"] = roc_to_json(roc_curve(cases));
        return j;
    };

    nlohmann::json report;
    report["threshold"] = threshold;
    report["n_cases"] = truth.size();
    report["model"] = subject_json(model_cases);

    std::vector<int> model_labels(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i)
        model_labels[i] = model_scores[i] >= threshold ? 1 : 0;

    report["raters"] = nlohmann::json::object();
    for (const auto& r : raters) {
        std::vector<ScoredCase> cases(truth.size());
        for (std::size_t i = 0; i < truth.size(); ++i)
            cases[i] = {static_cast<double>(r.labels[i]), truth[i]};
        report["raters"][r.name] = subject_json(cases);
    }

    nlohmann::json kappas = nlohmann::json::object();
    for (const auto& r : raters) {
        KappaResult k = cohen_kappa(model_labels, r.labels);
        kappas["model_vs_" + r.name] = {{"kappa", k.kappa}, {"z", k.z}, {"p_value", k.p_value}};
    }
    for (std::size_t i = 0; i < raters.size(); ++i) {
        for (std::size_t j = i + 1; j < raters.size(); ++j) {
            KappaResult k = cohen_kappa(raters[i].labels, raters[j].labels);
            kappas[raters[i].name + "_vs_" + raters[j].name] = {
                {"kappa", k.kappa}, {"z", k.z}, {"p_value", k.p_value}};
        }
    }
    report["kappa"] = kappas;
    return report;
}

}  // namespace csc
