#pragma once

#include <json.hpp>

#include "mvdet/image.hpp"
#include "mvdet/nn.hpp"

namespace mvdet {

using nlohmann::json;

// Class-conditional autoregressive pixel model over the raster scan,
//   p(z | y) = prod_i p(z_i | z_1..z_{i-1}, y),
// with sub-pixels ordered row by row, left to right, channel-minor.
//
// Architecture: a masked-convolution stack whose features at (r,c) are a
// function of strictly-previous *pixels* only (the first layer's mask
// excludes the center pixel; later 3x3 masks exclude strictly-future
// positions). Within-pixel channel dependence is added by the output heads:
// the G head takes the R value as an extra scalar input and the B head takes
// R and G, mirroring how PixelCNN++ conditions sub-pixel means on earlier
// channels. Each layer also adds a learned per-class bias, which is the
// label-conditioning path. Output: 256-way categorical per sub-pixel.
class GenerativeModel {
public:
    GenerativeModel() = default;
    GenerativeModel(const json& arch, std::uint64_t seed);

    int classes = 0, rows = 0, cols = 0, channels = 0;
    int feat = 0, n_hidden = 0, k_first = 7, k_hidden = 3;
    static constexpr int kValues = 256;

    json arch_json;
    json meta;

    Conv2d first;
    std::vector<Conv2d> hidden;
    std::vector<std::vector<double>> class_bias;   // per conv layer: classes x cout
    std::vector<std::vector<double>> g_class_bias;
    std::vector<Linear> heads;                     // heads[ch]: (feat+ch) -> 256
    std::vector<std::vector<double>> head_class_bias;    // per channel: classes x 256
    std::vector<std::vector<double>> g_head_class_bias;

    void collect_params(std::vector<ParamRef>& out);
    GenerativeModel clone() const;

    // --- full-image paths (training, scoring) ---

    // teacher-forced logits for every sub-pixel; all_logits[ch] is 256 x (rows*cols)
    void forward_logits(const FlatImage& image, int label, std::vector<RowMat>& all_logits);

    // sum_i log p(z_i | z_<i, label) in nats; one forward pass
    double log_likelihood(const FlatImage& image, int label);

    // mean CE per sub-pixel (nats) and, when training, parameter gradients
    double train_step_loss(const FlatImage& image, int label, bool backprop);

    // log-likelihood of the quantized version of a [0,1]-scaled input plus
    // the surrogate gradient through the network inputs (targets stay fixed)
    double log_likelihood_unit(const std::vector<double>& x01, int label,
                               std::vector<double>* grad_x01);

    // --- per-position path (sampling) ---

    // conditional distribution of sub-pixel (r,c,ch) given the image content
    // before it and the label; identical (up to fp round-off) to the full
    // forward, but evaluated on the receptive-field rectangle only
    VectorXd conditional_at(const FlatImage& image, int label, int r, int c, int ch);

    double temperature = 1.0;  // 1.0 is normative; exposed for exploration

private:
    // features at one position from the masked stack, rectangle evaluation
    void features_at(const std::vector<double>& scaled, int label, int r, int c, VectorXd& out);
    VectorXd head_logits(int ch, const VectorXd& feat_vec, const double* prev_scaled, int label) const;

    std::vector<RowMat> ws_bufs_;  // rectangle-evaluation workspace
    friend struct GenForwardCtx;
    friend FlatImage generate_rows(GenerativeModel&, const FlatImage&, int, int, int, Rng&);

public:
    // scaled image buffer: channel-major (ch,r,c), value/255 - 0.5
    static std::vector<double> scale_image(const FlatImage& image);
    static std::vector<double> scale_unit(const std::vector<double>& x01, int rows, int cols,
                                          int channels);
};

struct GeneratorTrainConfig {
    int epochs = 12;
    int batch = 16;
    double lr = 2e-3;
    double lr_min_frac = 0.05;
    std::uint64_t seed = 2;
    bool verbose = true;
};

GenerativeModel train_generator(const DatasetSplit& data, const json& arch,
                                const GeneratorTrainConfig& cfg);

double conditional_log_likelihood(GenerativeModel& model, const FlatImage& image, int label);

// draw sub-pixel i (0-based) given the first i sub-pixels of `prefix`
int sample_pixel(GenerativeModel& model, const FlatImage& prefix, int label, int i, Rng& rng);

// resample rows [r_start, r_end] (1-indexed, inclusive) left-to-right,
// top-to-bottom, conditioned on everything before each position and the
// label; all other rows are copied through unchanged
FlatImage generate_rows(GenerativeModel& model, const FlatImage& image, int label, int r_start,
                        int r_end, Rng& rng);

// mean -log2 likelihood per sub-pixel over a sample collection
double bits_per_dim(GenerativeModel& model, const std::vector<LabeledSample>& samples);

void save_generator(const GenerativeModel& model, const std::string& path);
GenerativeModel load_generator(const std::string& path);

}  // namespace mvdet
