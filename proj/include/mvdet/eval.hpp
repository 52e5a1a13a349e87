#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace mvdet {

// Score-orientation conventions differ between the two metric families and
// are part of the contracts:
//   * adr_at_tnr takes benign-ness scores (larger = more benign), matching
//     the detector's thresholded quantity P_RF + P_IF.
//   * auroc / roc_curve take anomaly scores (larger = more anomalous); the
//     callers negate the detector score.

// threshold at the (1-tnr) benign quantile; ADR = fraction of adversarial
// scores at or below it
double adr_at_tnr(const std::vector<double>& benign_scores, const std::vector<double>& adv_scores,
                  double tnr);

// probability a random adversarial score ranks more anomalous than a random
// benign score; ties count one half (Mann-Whitney)
double auroc(const std::vector<double>& benign_anomaly, const std::vector<double>& adv_anomaly);

// threshold sweep, points (FPR, TPR) from (0,0) to (1,1); trapezoid area
// under the polyline equals auroc
std::vector<std::pair<double, double>> roc_curve(const std::vector<double>& benign_anomaly,
                                                 const std::vector<double>& adv_anomaly);

double area_under_polyline(const std::vector<std::pair<double, double>>& points);

// binned plug-in estimate in nats; equal-frequency bins on the predictor
double mutual_information(const std::vector<double>& predictor, const std::vector<int>& labels,
                          int bins = 20);

// one attacked input: did the bare DNN survive, and did the detector fire
struct SystemOutcome {
    bool dnn_correct = false;
    bool detected = false;
};

// (dnn_only, dnn_plus_detector) accuracy over attacked inputs
std::pair<double, double> overall_system_accuracy(const std::vector<SystemOutcome>& outcomes);

struct AucWithCi {
    double auc = 0.0;
    double lo = 0.0, hi = 0.0;  // bootstrap 95% interval
    int n_pos = 0, n_neg = 0;
};

AucWithCi auc_with_bootstrap_ci(const std::vector<double>& benign_anomaly,
                                const std::vector<double>& adv_anomaly, std::uint64_t seed,
                                int replicates = 1000);

}  // namespace mvdet
