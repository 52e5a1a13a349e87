#include "mvdet/eval.hpp"

#include <algorithm>
#include <cmath>

#include "mvdet/image.hpp"
#include "mvdet/rng.hpp"

namespace mvdet {

namespace {

// shared quantile rule: value such that ceil(tnr*n) of the sorted scores lie
// strictly above it
double threshold_for_tnr(std::vector<double> s, double tnr) {
    std::sort(s.begin(), s.end());
    const int n = static_cast<int>(s.size());
    const int keep_above = static_cast<int>(std::ceil(tnr * n - 1e-9));
    const int m = n - keep_above;
    if (m <= 0) return s.front() - 1.0;
    return s[m - 1];
}

// 2 * (concordant pairs) + (tied pairs), an exact integer count
double pair_count_numerator(const std::vector<double>& benign, const std::vector<double>& adv) {
    std::vector<double> b = benign;
    std::sort(b.begin(), b.end());
    double num = 0.0;
    for (double a : adv) {
        const auto lo = std::lower_bound(b.begin(), b.end(), a);
        const auto hi = std::upper_bound(b.begin(), b.end(), a);
        num += 2.0 * static_cast<double>(lo - b.begin()) + static_cast<double>(hi - lo);
    }
    return num;
}

}  // namespace

double adr_at_tnr(const std::vector<double>& benign_scores, const std::vector<double>& adv_scores,
                  double tnr) {
    check(!benign_scores.empty() && !adv_scores.empty(), "adr_at_tnr: empty score set");
    check(tnr > 0.0 && tnr <= 1.0, "adr_at_tnr: tnr out of (0,1]");
    const double thr = threshold_for_tnr(benign_scores, tnr);
    int detected = 0;
    for (double s : adv_scores)
        if (s <= thr) ++detected;
    return static_cast<double>(detected) / adv_scores.size();
}

double auroc(const std::vector<double>& benign_anomaly, const std::vector<double>& adv_anomaly) {
    check(!benign_anomaly.empty() && !adv_anomaly.empty(), "auroc: empty score set");
    const double num = pair_count_numerator(benign_anomaly, adv_anomaly);
    return num / (2.0 * benign_anomaly.size() * adv_anomaly.size());
}

std::vector<std::pair<double, double>> roc_curve(const std::vector<double>& benign_anomaly,
                                                 const std::vector<double>& adv_anomaly) {
    check(!benign_anomaly.empty() && !adv_anomaly.empty(), "roc_curve: empty score set");
    std::vector<double> all = benign_anomaly;
    all.insert(all.end(), adv_anomaly.begin(), adv_anomaly.end());
    std::sort(all.begin(), all.end(), std::greater<double>());
    all.erase(std::unique(all.begin(), all.end()), all.end());

    std::vector<double> b = benign_anomaly, a = adv_anomaly;
    std::sort(b.begin(), b.end());
    std::sort(a.begin(), a.end());
    const double nb = static_cast<double>(b.size()), na = static_cast<double>(a.size());

    std::vector<std::pair<double, double>> pts;
    pts.emplace_back(0.0, 0.0);
    for (double thr : all) {
        const double fp = static_cast<double>(b.end() - std::lower_bound(b.begin(), b.end(), thr));
        const double tp = static_cast<double>(a.end() - std::lower_bound(a.begin(), a.end(), thr));
        pts.emplace_back(fp / nb, tp / na);
    }
    if (pts.back().first != 1.0 || pts.back().second != 1.0) pts.emplace_back(1.0, 1.0);
    return pts;
}

double area_under_polyline(const std::vector<std::pair<double, double>>& points) {
    double area = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        const double dx = points[i].first - points[i - 1].first;
        area += dx * 0.5 * (points[i].second + points[i - 1].second);
    }
    return area;
}

double mutual_information(const std::vector<double>& predictor, const std::vector<int>& labels,
                          int bins) {
    check(predictor.size() == labels.size() && !predictor.empty(),
          "mutual_information: size mismatch");
    check(bins >= 2, "mutual_information: need >= 2 bins");
    const int n = static_cast<int>(predictor.size());

    // equal-frequency edges; duplicates collapse so discrete predictors work
    std::vector<double> sorted = predictor;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> edges;
    for (int i = 1; i < bins; ++i) {
        const int pos = static_cast<int>(static_cast<long>(i) * n / bins);
        edges.push_back(sorted[std::min(pos, n - 1)]);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    const int nb = static_cast<int>(edges.size()) + 1;

    std::vector<std::vector<double>> joint(nb, std::vector<double>(2, 0.0));
    std::vector<double> pb(nb, 0.0), pl(2, 0.0);
    for (int i = 0; i < n; ++i) {
        check(labels[i] == 0 || labels[i] == 1, "mutual_information: labels must be 0/1");
        const int bin = static_cast<int>(std::upper_bound(edges.begin(), edges.end(), predictor[i]) -
                                         edges.begin());
        joint[bin][labels[i]] += 1.0;
        pb[bin] += 1.0;
        pl[labels[i]] += 1.0;
    }
    double mi = 0.0;
    for (int b = 0; b < nb; ++b) {
        for (int l = 0; l < 2; ++l) {
            if (joint[b][l] <= 0.0) continue;
            const double pij = joint[b][l] / n;
            mi += pij * std::log(pij * n * n / (pb[b] * pl[l]));
        }
    }
    return std::max(0.0, mi);
}

std::pair<double, double> overall_system_accuracy(const std::vector<SystemOutcome>& outcomes) {
    check(!outcomes.empty(), "overall_system_accuracy: no outcomes");
    double dnn = 0.0, sys = 0.0;
    for (const auto& o : outcomes) {
        if (o.dnn_correct) dnn += 1.0;
        if (o.detected || o.dnn_correct) sys += 1.0;
    }
    return {dnn / outcomes.size(), sys / outcomes.size()};
}

AucWithCi auc_with_bootstrap_ci(const std::vector<double>& benign_anomaly,
                                const std::vector<double>& adv_anomaly, std::uint64_t seed,
                                int replicates) {
    AucWithCi out;
    out.auc = auroc(benign_anomaly, adv_anomaly);
    out.n_neg = static_cast<int>(benign_anomaly.size());
    out.n_pos = static_cast<int>(adv_anomaly.size());
    std::vector<double> reps;
    reps.reserve(replicates);
    Rng rng(derive_seed(seed, 0xB007));
    std::vector<double> b(out.n_neg), a(out.n_pos);
    for (int r = 0; r < replicates; ++r) {
        for (int i = 0; i < out.n_neg; ++i)
            b[i] = benign_anomaly[rng.uniform_int(out.n_neg)];
        for (int i = 0; i < out.n_pos; ++i)
            a[i] = adv_anomaly[rng.uniform_int(out.n_pos)];
        reps.push_back(auroc(b, a));
    }
    std::sort(reps.begin(), reps.end());
    out.lo = reps[static_cast<std::size_t>(0.025 * (replicates - 1))];
    out.hi = reps[static_cast<std::size_t>(0.975 * (replicates - 1))];
    return out;
}

}  // namespace mvdet
