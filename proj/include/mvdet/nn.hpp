#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "mvdet/rng.hpp"

// Small dense-GEMM training engine: im2col convolutions, GroupNorm, ReLU,
// linear layers and AdamW, all in double so the finite-difference and
// projection oracles hold with margin. Single-threaded by design; summation
// order is fixed, so repeated runs are bit-identical.
namespace mvdet {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// channel-major volume: v[(ch*h + y)*w + x]
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}

    int size() const { return c * h * w; }
    double& at(int ch, int y, int x) { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
    double at(int ch, int y, int x) const { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
    void zero() { std::fill(v.begin(), v.end(), 0.0); }

    Eigen::Map<RowMat> mat() { return Eigen::Map<RowMat>(v.data(), c, h * w); }
    Eigen::Map<const RowMat> mat() const { return Eigen::Map<const RowMat>(v.data(), c, h * w); }
};

struct ParamRef {
    std::string name;
    std::vector<double>* value = nullptr;
    std::vector<double>* grad = nullptr;
    const std::vector<double>* mask = nullptr;  // optional 0/1 pattern kept exact
    bool decay = false;                         // weight decay applies (weights, not biases/norm)
};

struct Conv2d {
    int cin = 0, cout = 0, k = 1, stride = 1, pad = 0;
    std::vector<double> w;   // cout x (cin*k*k), row-major
    std::vector<double> b;   // cout
    std::vector<double> gw, gb;
    std::vector<double> mask;  // empty = dense; else same shape as w

    Conv2d() = default;
    Conv2d(int cin_, int cout_, int k_, int stride_, int pad_);

    void init_kaiming(Rng& rng);
    void apply_mask();  // w := w .* mask
    int out_h(int h) const { return (h + 2 * pad - k) / stride + 1; }
    int out_w(int wv) const { return (wv + 2 * pad - k) / stride + 1; }

    Tensor forward(const Tensor& x, bool keep_cache);
    // gy -> gx; accumulates gw/gb when accumulate is true
    Tensor backward(const Tensor& gy, bool accumulate, bool need_input_grad = true);

    void params(const std::string& prefix, std::vector<ParamRef>& out);

private:
    Tensor x_cache_;
    RowMat col_cache_;
};

struct GroupNorm {
    int channels = 0, groups = 1;
    double eps = 1e-5;
    std::vector<double> gamma, beta, ggamma, gbeta;

    GroupNorm() = default;
    GroupNorm(int channels_, int groups_);

    Tensor forward(const Tensor& x, bool keep_cache);
    Tensor backward(const Tensor& gy, bool accumulate);
    void params(const std::string& prefix, std::vector<ParamRef>& out);

private:
    Tensor xhat_;
    std::vector<double> invstd_;
};

struct Linear {
    int in = 0, out = 0;
    std::vector<double> w, b, gw, gb;

    Linear() = default;
    Linear(int in_, int out_);
    void init_kaiming(Rng& rng);

    VectorXd forward(const VectorXd& x, bool keep_cache);
    VectorXd backward(const VectorXd& gy, bool accumulate);
    void params(const std::string& prefix, std::vector<ParamRef>& out);

    Eigen::Map<const RowMat> wmat() const { return Eigen::Map<const RowMat>(w.data(), out, in); }

private:
    VectorXd x_cache_;
};

struct Relu {
    Tensor forward(const Tensor& x, bool keep_cache);
    Tensor backward(const Tensor& gy) const;

private:
    std::vector<char> pos_;
};

// stable softmax / cross-entropy on logits
VectorXd softmax(const VectorXd& logits);
VectorXd log_softmax(const VectorXd& logits);
double softmax_cross_entropy(const VectorXd& logits, int label, VectorXd* dlogits);

struct AdamW {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 0.0;
    long t = 0;

    void init(const std::vector<ParamRef>& ps);
    void step(std::vector<ParamRef>& ps, double lr);
    void zero_grad(std::vector<ParamRef>& ps);

private:
    std::vector<std::vector<double>> m_, v_;
};

// serialization helpers: parameters stream in declaration order
void write_params_blob(std::ostream& os, const std::vector<ParamRef>& ps);
void read_params_blob(std::istream& is, std::vector<ParamRef>& ps);

}  // namespace mvdet
