#pragma once

#include <optional>

#include "mvdet/classifier.hpp"
#include "mvdet/generator.hpp"
#include "mvdet/predictors.hpp"

namespace mvdet {

enum class AttackFamily { fgsm, pgd, mim, deepfool, cw, whitebox };

AttackFamily attack_family_from_string(const std::string& s);
std::string attack_family_name(AttackFamily f);

struct AttackSpec {
    AttackFamily family = AttackFamily::fgsm;
    double epsilon = 8.0;       // L-inf budget on the 0..255 pixel scale
    int iterations = 40;        // T for the iterative families
    double alpha = 0.0;         // step size in pixel units; 0 = epsilon/T
    double confidence = 0.5;    // C&W k
    double overshoot = 0.02;    // DeepFool eta (final factor 1 + eta)
    int deepfool_max_iters = 50;
    int cw_binary_steps = 6;
    int cw_iters = 100;
    double cw_lr = 5e-2;
    double cw_initial_c = 1.0;
    double alpha_wb = 1.0, beta_wb = 1.0;  // white-box objective weights
    bool mim_decay = false;     // original momentum decay variant (off = as printed)
    double mim_mu = 1.0;
    std::uint64_t seed = 0;

    std::string tag() const;  // e.g. "pgd-8", "cw-0.5", "deepfool"
};

struct AdversarialRecord {
    FlatImage original;
    FlatImage perturbed;
    int true_label = -1;
    int pred_original = -1;
    int pred_perturbed = -1;
    bool success = false;     // original correct AND perturbed label flipped
    double linf = 0.0, l2 = 0.0;  // achieved norms, pixel units
    std::string attack_tag;
    std::string image_id;
};

// per-class benign 5th-percentile thresholds the white-box Reject indicators
// compare against (input log-likelihood and representation log-density)
struct WhiteboxContext {
    std::vector<double> loglik_q5;
    std::vector<double> repdens_q5;
};

// --- continuous-space cores ([0,1] inputs); the oracles test these ---

std::vector<double> fgsm_unit(ClassifierModel& model, const std::vector<double>& x0, int label,
                              const AttackSpec& spec);
std::vector<double> pgd_unit(ClassifierModel& model, const std::vector<double>& x0, int label,
                             const AttackSpec& spec,
                             std::vector<std::vector<double>>* trajectory = nullptr);
std::vector<double> mim_unit(ClassifierModel& model, const std::vector<double>& x0, int label,
                             const AttackSpec& spec,
                             std::vector<std::vector<double>>* trajectory = nullptr);
std::vector<double> deepfool_unit(ClassifierModel& model, const std::vector<double>& x0,
                                  const AttackSpec& spec, bool* flipped = nullptr);
std::vector<double> cw_unit(ClassifierModel& model, const std::vector<double>& x0, int label,
                            const AttackSpec& spec, bool* hit_target = nullptr);
std::vector<double> whitebox_unit(ClassifierModel& model, GenerativeModel& generator,
                                  const GmmModel& gmm, const WhiteboxContext& ctx,
                                  const std::vector<double>& x0, int label, const AttackSpec& spec,
                                  std::vector<std::vector<double>>* trajectory = nullptr);

// C&W logit-margin objective: max(max{Z_i : i != t} - Z_t, -k)
double cw_objective(const VectorXd& logits, int target, double k);

// --- record-producing wrappers (quantize, re-verify the budget, classify) ---

AdversarialRecord run_attack(ClassifierModel& model, const AttackSpec& spec, const FlatImage& image,
                             int true_label, GenerativeModel* generator = nullptr,
                             const GmmModel* gmm = nullptr, const WhiteboxContext* ctx = nullptr);

// true iff the clean image was correctly classified and the perturbed one
// flips the label; failed attacks are excluded from detection denominators
bool is_successful(ClassifierModel& model, const AdversarialRecord& record);

}  // namespace mvdet
