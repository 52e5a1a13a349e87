#pragma once

#include <json.hpp>
#include <memory>

#include "mvdet/image.hpp"
#include "mvdet/nn.hpp"

namespace mvdet {

using nlohmann::json;

struct ClassifierOutput {
    VectorXd probs;           // length C, sums to 1
    VectorXd representation;  // penultimate (post-pooling) activation, length d_h
    int label = 0;            // argmax(probs), lowest index wins ties
};

// Victim-network backbone. Implementations keep per-instance activation
// caches between forward(keep=true) and backward, so callers running
// batches in parallel should clone the model per worker.
class Network {
public:
    virtual ~Network() = default;
    virtual int class_count() const = 0;
    virtual int rep_dim() const = 0;
    virtual void forward(const Tensor& x, VectorXd& logits, VectorXd& h, bool keep) = 0;
    // valid after forward(keep=true); dh injects gradient at the representation
    virtual Tensor backward(const VectorXd& dlogits, const VectorXd& dh,
                            bool accumulate_params, bool need_input_grad) = 0;
    virtual void collect_params(std::vector<ParamRef>& out) = 0;
    virtual json arch() const = 0;
};

// arch kinds: "resnet" (stem + 3 stages of residual blocks + pooling head)
// and "linear" (flattened affine logits; used by the attack oracles)
std::unique_ptr<Network> make_network(const json& arch, Rng& rng);

struct ClassifierModel {
    std::unique_ptr<Network> net;
    json meta;  // training provenance: seed, schedule, recorded accuracies
    int rows = 0, cols = 0, channels = 0;

    int class_count() const { return net->class_count(); }
    int rep_dim() const { return net->rep_dim(); }
    ClassifierModel clone() const;
};

struct ClassifierTrainConfig {
    int epochs = 30;
    int batch = 64;
    double lr = 3e-3;
    double lr_min_frac = 0.02;  // cosine floor
    double weight_decay = 5e-4;
    double label_smoothing = 0.0;  // train-time only; attacks use plain CE
    bool keep_best_val = true;     // restore the best validation-epoch weights
    std::uint64_t seed = 1;
    bool verbose = true;
};

ClassifierModel make_classifier(const json& arch, std::uint64_t seed);

// cross-entropy + AdamW; deterministic given seed. Aborts on NaN loss.
ClassifierModel train_classifier(const DatasetSplit& data, const json& arch,
                                 const ClassifierTrainConfig& cfg);

ClassifierOutput classify(ClassifierModel& model, const FlatImage& image);

// continuous-input variants; x holds pixels scaled to [0,1]
ClassifierOutput classify_unit(ClassifierModel& model, const std::vector<double>& x);
VectorXd logits_unit(ClassifierModel& model, const std::vector<double>& x);

// gradient of cross-entropy L(theta; x, y) w.r.t. the [0,1]-scaled input
std::vector<double> loss_gradient(ClassifierModel& model, const std::vector<double>& x, int label);

// gradient of dot(dlogits, logits(x)) w.r.t. x; building block for the attacks
std::vector<double> input_gradient(ClassifierModel& model, const std::vector<double>& x,
                                   const VectorXd& dlogits);

// gradient of dot(dh, h(x)) w.r.t. x (used by the detector-aware attack)
std::vector<double> representation_gradient(ClassifierModel& model, const std::vector<double>& x,
                                            const VectorXd& dh);

double accuracy(ClassifierModel& model, const std::vector<LabeledSample>& samples);

void save_classifier(const ClassifierModel& model, const std::string& path);
ClassifierModel load_classifier(const std::string& path);

Tensor image_to_tensor(const FlatImage& image);
Tensor unit_to_tensor(const std::vector<double>& x, int rows, int cols, int channels);

int argmax_lowest(const VectorXd& v);

}  // namespace mvdet
