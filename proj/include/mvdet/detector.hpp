#pragma once

#include <json.hpp>

#include "mvdet/predictors.hpp"

namespace mvdet {

// ---------------------------------------------------------------- forests

struct TreeNode {
    int feature = -1;       // -1 marks a leaf
    double threshold = 0.0;  // go left when x[feature] <= threshold
    int left = -1, right = -1;
    int leaf_class = -1;
};

struct DecisionTree {
    std::vector<TreeNode> nodes;
    int predict(const VectorXd& x) const;
};

struct RandomForest {
    std::vector<DecisionTree> trees;
    int dim = 0;
    // proportion of trees voting class 0 ("benign")
    double benign_vote_fraction(const VectorXd& x) const;
};

// CART with Gini impurity, bootstrap resampling and sqrt(dim) feature
// subsampling; deterministic given seed
RandomForest train_rf(const std::vector<VectorXd>& benign, const std::vector<VectorXd>& adversarial,
                      int n_trees, std::uint64_t seed);

struct IsoNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1, right = -1;
    int size = 0;  // leaf: number of subsample points that reached it
};

struct IsoTree {
    std::vector<IsoNode> nodes;
    double path_length(const VectorXd& x) const;
};

struct IsolationForest {
    std::vector<IsoTree> trees;
    int dim = 0;
    int psi = 256;  // subsample size

    double mean_path_length(const VectorXd& x) const;
    // 2^(-E/c(psi)): large = anomalous, as in the isolation-forest paper
    double score(const VectorXd& x) const;
};

// average path length of unsuccessful BST search, H(i) ~= ln(i) + gamma
double iforest_c_factor(int n);
double anomaly_score_from_path(double mean_path, int psi);

IsolationForest train_if(const std::vector<VectorXd>& benign, int n_trees, int psi,
                         std::uint64_t seed);

// ---------------------------------------------------------------- hybrid

struct DetectorConfig {
    int rf_trees = 100;
    int if_trees = 100;
    int if_psi = 256;
    double tnr_target = 0.95;
    std::vector<int> feature_mask = {0, 1, 2, 3};  // indices into (d1,d2,d3,d4)
    bool pif_raw_score = false;  // true = paper-literal 2^(-E/c) as the benign vote
    std::uint64_t seed = 11;
};

// Supervised RF over benign + (DeepFool, PGD-eps4) features plus an
// Isolation Forest novelty detector over benign features only. The decision
// rule is Eq.-style: benign iff P_RF(benign) + P_IF(benign) > tau, where tau
// is calibrated to a target TNR on benign validation scores. P_IF(benign)
// defaults to 1 - 2^(-E/c) so that both summands grow with benign-ness.
struct HybridDetector {
    RandomForest rf;
    IsolationForest iforest;
    double tau = std::numeric_limits<double>::quiet_NaN();
    VectorXd std_mean, std_std;  // z-scoring fitted on benign validation
    DetectorConfig config;
    json manifest;

    VectorXd project(const FeatureVector& fv) const;  // mask + standardize
    double p_rf(const FeatureVector& fv) const;
    double p_if(const FeatureVector& fv) const;  // oriented per config
    double combined_score(const FeatureVector& fv) const;  // larger = more benign
    // 0 = benign, 1 = adversarial; requires calibration, ties go adversarial
    int decide(const FeatureVector& fv) const;
};

// tau such that a `tnr_target` fraction of benign scores lies strictly above
double calibrate_tau(const std::vector<double>& benign_scores, double tnr_target);

HybridDetector train_detector(const std::vector<FeatureVector>& benign,
                              const std::vector<FeatureVector>& adversarial,
                              const DetectorConfig& config);

void save_detector(const HybridDetector& det, const std::string& path);
HybridDetector load_detector(const std::string& path);

}  // namespace mvdet
