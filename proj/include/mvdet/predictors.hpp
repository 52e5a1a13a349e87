#pragma once

#include <string>
#include <vector>

#include "mvdet/classifier.hpp"
#include "mvdet/views.hpp"

namespace mvdet {

// Sum_i p_i ln(p_i / q_i), with 0*ln(0/q) = 0 and both ratio terms clamped
// below at 1e-12 so saturated classifier outputs stay finite.
double kl_divergence(const VectorXd& p, const VectorXd& q);

double euclidean_distance(const VectorXd& a, const VectorXd& b);

// predictor tuple d(z): representation distance, summed KL over views,
// conditional input log-likelihood, class-conditional representation density
struct FeatureVector {
    double d1 = 0, d2 = 0, d3 = 0, d4 = 0;
    int label_used = -1;
    int true_label = -1;
    std::string image_id;
    std::string attack_tag = "benign";
    std::string split;
    std::uint64_t seed = 0;

    Eigen::Vector4d as_vec() const { return {d1, d2, d3, d4}; }
};

// --- class-conditional diagonal Gaussian mixture over representations ---

struct GaussComponent {
    double weight = 0;
    VectorXd mean;
    VectorXd var;  // diagonal
};

struct ClassMixture {
    std::vector<GaussComponent> comps;
    double log_density(const VectorXd& x) const;
    // gradient of log_density w.r.t. x (posterior-weighted Mahalanobis pull)
    double log_density_grad(const VectorXd& x, VectorXd* grad) const;
};

struct GmmModel {
    std::vector<ClassMixture> per_class;
    int dim = 0;
    int components = 0;
    json meta;
};

// EM to convergence (mean log-likelihood improvement < tol or max_iter),
// k-means initialization under the given seed; diagonal covariances with a
// small variance floor. Requires >= `components` samples per class.
GmmModel fit_gmm(const std::vector<std::vector<VectorXd>>& reps_by_class, int components = 8,
                 std::uint64_t seed = 5, int max_iter = 200, double tol = 1e-4);

void save_gmm(const GmmModel& gmm, const std::string& path);
GmmModel load_gmm(const std::string& path);

// --- the four predictors ---

double d1_distance(ClassifierModel& classifier, const FlatImage& image, const FlatImage& gstar);
double d2_kl_sum(ClassifierModel& classifier, const FlatImage& image, const ViewSet& views);
double d3_log_likelihood(GenerativeModel& generator, const FlatImage& image, int label);
double d4_rep_density(const GmmModel& gmm, ClassifierModel& classifier, const FlatImage& image);

// fixture-friendly forms the wrappers delegate to
double d2_from_probs(const VectorXd& fz, const VectorXd& fg1, const VectorXd& fg2,
                     const VectorXd& fg3, const VectorXd& fgstar);

// classify -> generate views under F(z) -> d1..d4
FeatureVector extract_features(ClassifierModel& classifier, GenerativeModel& generator,
                               const GmmModel& gmm, const FlatImage& image,
                               std::uint64_t master_seed, ViewSet* views_out = nullptr);

// --- feature store (delimited text table) ---

void save_feature_store(const std::vector<FeatureVector>& rows, const std::string& path);
std::vector<FeatureVector> load_feature_store(const std::string& path);

}  // namespace mvdet
