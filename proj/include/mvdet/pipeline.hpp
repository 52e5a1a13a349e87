#pragma once

#include <array>
#include <map>

#include "mvdet/attacks.hpp"
#include "mvdet/dataset.hpp"
#include "mvdet/detector.hpp"
#include "mvdet/eval.hpp"

namespace mvdet {

// ------------------------------------------------------------ attack batches

struct AttackBatchResult {
    std::vector<AdversarialRecord> records;  // one per correctly classified source
    int attempted = 0;                       // correctly classified sources
    int skipped_misclassified = 0;
    int successes = 0;
    double success_rate = 0.0;
};

// attacks each correctly classified sample; misclassified sources are skipped
// so the success-rate denominator matches the evaluation convention
AttackBatchResult attack_batch(ClassifierModel& model, const AttackSpec& spec,
                               const std::vector<LabeledSample>& samples,
                               GenerativeModel* generator = nullptr, const GmmModel* gmm = nullptr,
                               const WhiteboxContext* ctx = nullptr, bool verbose = true);

// directory of original/perturbed PNG pairs plus a manifest table
void save_adversarial_archive(const AttackBatchResult& batch, const std::string& dir);
AttackBatchResult load_adversarial_archive(const std::string& dir);

// ------------------------------------------------------------ features

struct FeatureWorkItem {
    FlatImage image;
    std::string image_id;
    int true_label = -1;
    std::string attack_tag = "benign";
    std::string split;
};

std::vector<FeatureWorkItem> items_from_samples(const std::vector<LabeledSample>& samples,
                                                const std::string& split);
std::vector<FeatureWorkItem> items_from_records(const std::vector<AdversarialRecord>& records,
                                                const std::string& split);

// classify + generate views + d1..d4 for each item; per-item seeds derive
// from (master_seed, index) so the batch is reproducible and order-free
std::vector<FeatureVector> extract_features_batch(ClassifierModel& classifier,
                                                  GenerativeModel& generator, const GmmModel& gmm,
                                                  const std::vector<FeatureWorkItem>& items,
                                                  std::uint64_t master_seed, bool verbose = true);

// per-class 5th-percentile thresholds for the white-box Reject indicators,
// estimated on (a subsample of) the training split
WhiteboxContext compute_whitebox_context(ClassifierModel& classifier, GenerativeModel& generator,
                                         const GmmModel& gmm,
                                         const std::vector<LabeledSample>& train, int per_class_cap,
                                         bool verbose = true);

void save_whitebox_context(const WhiteboxContext& ctx, const std::string& path);
WhiteboxContext load_whitebox_context(const std::string& path);

// fit the per-class representation GMM from the training split
GmmModel fit_gmm_from_split(ClassifierModel& classifier, const std::vector<LabeledSample>& train,
                            int components, std::uint64_t seed);

// ------------------------------------------------------------ evaluation

struct AttackEvalRow {
    std::string tag;
    double success_rate = 0.0;
    int n_eval = 0;      // successful attacks entering the detection metrics
    double adr = 0.0;    // at the report's TNR target
    double auc = 0.0;
    double dnn_only = 0.0;   // bare-classifier accuracy on all attacked inputs
    double dnn_plus = 0.0;   // classifier + detector system accuracy
    bool severe = false;     // ADR < 0.5, the paper's red flag
};

struct EvalReport {
    std::vector<AttackEvalRow> rows;
    double benign_detection_rate = 0.0;  // TNR of decide() on benign test
    double tnr_target = 0.95;
    std::map<std::string, std::vector<std::pair<double, double>>> rocs;
    std::map<std::string, std::array<double, 4>> mutual_info;  // tag -> MI per predictor
    json manifest;
};

struct EvalInputs {
    const HybridDetector* detector = nullptr;
    std::vector<FeatureVector> benign_test;
    // tag -> features of attacked inputs (sources were correctly classified);
    // label_used != true_label marks the successful ones
    std::map<std::string, std::vector<FeatureVector>> attack_features;
    std::map<std::string, double> success_rates;
    json manifest;
};

// larger = more benign (the thresholded quantity) / larger = more anomalous
std::vector<double> detector_scores(const HybridDetector& det,
                                    const std::vector<FeatureVector>& fvs);
std::vector<double> detector_anomaly_scores(const HybridDetector& det,
                                            const std::vector<FeatureVector>& fvs);

EvalReport evaluate_system(const EvalInputs& in);

// re-renders tables, ROC point files and curve images from a report;
// byte-identical for identical inputs
void write_report(const EvalReport& report, const std::string& dir);

// retrain the hybrid on a predictor subset and report per-attack AUC
std::map<std::string, double> ablation_run(const std::vector<int>& mask,
                                           const std::vector<FeatureVector>& benign_train,
                                           const std::vector<FeatureVector>& adv_train,
                                           const std::vector<FeatureVector>& benign_test,
                                           const std::map<std::string, std::vector<FeatureVector>>& attacks,
                                           const DetectorConfig& base_config);

// AUC separating naturally misclassified benign from correctly classified
// benign test samples; reports n/a when the classifier is perfect
struct MisclassifiedBenignResult {
    bool applicable = false;
    AucWithCi auc;
};
MisclassifiedBenignResult misclassified_benign_eval(const HybridDetector& det,
                                                    const std::vector<FeatureVector>& benign_test,
                                                    std::uint64_t seed);

}  // namespace mvdet
