#include "mvdet/nn.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "mvdet/image.hpp"

namespace mvdet {

namespace {

// col: (cin*k*k) x (ho*wo)
void im2col(const Tensor& x, int k, int stride, int pad, RowMat& col) {
    const int ho = (x.h + 2 * pad - k) / stride + 1;
    const int wo = (x.w + 2 * pad - k) / stride + 1;
    col.resize(x.c * k * k, ho * wo);
    for (int c = 0; c < x.c; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int row = (c * k + ky) * k + kx;
                double* dst = col.data() + static_cast<std::size_t>(row) * ho * wo;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= x.h) {
                        for (int ox = 0; ox < wo; ++ox) dst[oy * wo + ox] = 0.0;
                        continue;
                    }
                    const double* src = &x.v[(static_cast<std::size_t>(c) * x.h + iy) * x.w];
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        dst[oy * wo + ox] = (ix < 0 || ix >= x.w) ? 0.0 : src[ix];
                    }
                }
            }
        }
    }
}

void col2im_accumulate(const RowMat& col, int cin, int k, int stride, int pad, Tensor& gx) {
    const int ho = (gx.h + 2 * pad - k) / stride + 1;
    const int wo = (gx.w + 2 * pad - k) / stride + 1;
    for (int c = 0; c < cin; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int row = (c * k + ky) * k + kx;
                const double* src = col.data() + static_cast<std::size_t>(row) * ho * wo;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= gx.h) continue;
                    double* dst = &gx.v[(static_cast<std::size_t>(c) * gx.h + iy) * gx.w];
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < gx.w) dst[ix] += src[oy * wo + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Conv2d::Conv2d(int cin_, int cout_, int k_, int stride_, int pad_)
    : cin(cin_), cout(cout_), k(k_), stride(stride_), pad(pad_),
      w(static_cast<std::size_t>(cout_) * cin_ * k_ * k_, 0.0),
      b(cout_, 0.0),
      gw(w.size(), 0.0),
      gb(cout_, 0.0) {}

void Conv2d::init_kaiming(Rng& rng) {
    // fan-in counts only unmasked taps so masked convs start at a sane scale
    const int row_len = cin * k * k;
    for (int o = 0; o < cout; ++o) {
        int fan = row_len;
        if (!mask.empty()) {
            fan = 0;
            for (int i = 0; i < row_len; ++i)
                if (mask[static_cast<std::size_t>(o) * row_len + i] != 0.0) ++fan;
            if (fan == 0) fan = 1;
        }
        const double s = std::sqrt(2.0 / fan);
        for (int i = 0; i < row_len; ++i)
            w[static_cast<std::size_t>(o) * row_len + i] = s * rng.normal();
    }
    std::fill(b.begin(), b.end(), 0.0);
    apply_mask();
}

void Conv2d::apply_mask() {
    if (mask.empty()) return;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] *= mask[i];
}

Tensor Conv2d::forward(const Tensor& x, bool keep_cache) {
    check(x.c == cin, "Conv2d: channel mismatch");
    RowMat col;
    im2col(x, k, stride, pad, col);
    Tensor y(cout, out_h(x.h), out_w(x.w));
    Eigen::Map<const RowMat> wm(w.data(), cout, cin * k * k);
    y.mat().noalias() = wm * col;
    for (int o = 0; o < cout; ++o) y.mat().row(o).array() += b[o];
    if (keep_cache) {
        x_cache_ = x;
        col_cache_ = std::move(col);
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& gy, bool accumulate, bool need_input_grad) {
    Eigen::Map<const RowMat> wm(w.data(), cout, cin * k * k);
    if (accumulate) {
        Eigen::Map<RowMat> gwm(gw.data(), cout, cin * k * k);
        gwm.noalias() += gy.mat() * col_cache_.transpose();
        if (!mask.empty())
            for (std::size_t i = 0; i < gw.size(); ++i) gw[i] *= mask[i];
        for (int o = 0; o < cout; ++o) gb[o] += gy.mat().row(o).sum();
    }
    Tensor gx;
    if (need_input_grad) {
        gx = Tensor(cin, x_cache_.h, x_cache_.w);
        RowMat gcol = wm.transpose() * gy.mat();
        col2im_accumulate(gcol, cin, k, stride, pad, gx);
    }
    return gx;
}

void Conv2d::params(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".w", &w, &gw, mask.empty() ? nullptr : &mask, true});
    out.push_back({prefix + ".b", &b, &gb, nullptr});
}

GroupNorm::GroupNorm(int channels_, int groups_)
    : channels(channels_), groups(groups_),
      gamma(channels_, 1.0), beta(channels_, 0.0),
      ggamma(channels_, 0.0), gbeta(channels_, 0.0) {
    check(channels_ % groups_ == 0, "GroupNorm: channels not divisible by groups");
}

Tensor GroupNorm::forward(const Tensor& x, bool keep_cache) {
    check(x.c == channels, "GroupNorm: channel mismatch");
    const int cg = channels / groups;
    const int plane = x.h * x.w;
    Tensor y(x.c, x.h, x.w);
    Tensor xhat(x.c, x.h, x.w);
    std::vector<double> invstd(groups);
    for (int g = 0; g < groups; ++g) {
        const std::size_t off = static_cast<std::size_t>(g) * cg * plane;
        const int n = cg * plane;
        double mean = 0.0;
        for (int i = 0; i < n; ++i) mean += x.v[off + i];
        mean /= n;
        double var = 0.0;
        for (int i = 0; i < n; ++i) {
            const double d = x.v[off + i] - mean;
            var += d * d;
        }
        var /= n;
        const double is = 1.0 / std::sqrt(var + eps);
        invstd[g] = is;
        for (int i = 0; i < n; ++i) xhat.v[off + i] = (x.v[off + i] - mean) * is;
    }
    for (int c = 0; c < channels; ++c) {
        const std::size_t off = static_cast<std::size_t>(c) * plane;
        for (int i = 0; i < plane; ++i) y.v[off + i] = gamma[c] * xhat.v[off + i] + beta[c];
    }
    if (keep_cache) {
        xhat_ = std::move(xhat);
        invstd_ = std::move(invstd);
    }
    return y;
}

Tensor GroupNorm::backward(const Tensor& gy, bool accumulate) {
    const int cg = channels / groups;
    const int plane = gy.h * gy.w;
    Tensor gx(gy.c, gy.h, gy.w);
    for (int c = 0; c < channels; ++c) {
        const std::size_t off = static_cast<std::size_t>(c) * plane;
        if (accumulate) {
            double dg = 0.0, db = 0.0;
            for (int i = 0; i < plane; ++i) {
                dg += gy.v[off + i] * xhat_.v[off + i];
                db += gy.v[off + i];
            }
            ggamma[c] += dg;
            gbeta[c] += db;
        }
    }
    for (int g = 0; g < groups; ++g) {
        const std::size_t off = static_cast<std::size_t>(g) * cg * plane;
        const int n = cg * plane;
        // dxhat = gy * gamma(c); reduce then distribute
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int c = 0; c < cg; ++c) {
            const double gm = gamma[g * cg + c];
            const std::size_t coff = off + static_cast<std::size_t>(c) * plane;
            for (int i = 0; i < plane; ++i) {
                const double dxh = gy.v[coff + i] * gm;
                sum_dxhat += dxh;
                sum_dxhat_xhat += dxh * xhat_.v[coff + i];
            }
        }
        const double is = invstd_[g];
        for (int c = 0; c < cg; ++c) {
            const double gm = gamma[g * cg + c];
            const std::size_t coff = off + static_cast<std::size_t>(c) * plane;
            for (int i = 0; i < plane; ++i) {
                const double dxh = gy.v[coff + i] * gm;
                gx.v[coff + i] =
                    is * (dxh - sum_dxhat / n - xhat_.v[coff + i] * sum_dxhat_xhat / n);
            }
        }
    }
    return gx;
}

void GroupNorm::params(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".gamma", &gamma, &ggamma, nullptr});
    out.push_back({prefix + ".beta", &beta, &gbeta, nullptr});
}

Linear::Linear(int in_, int out_)
    : in(in_), out(out_), w(static_cast<std::size_t>(in_) * out_, 0.0), b(out_, 0.0),
      gw(w.size(), 0.0), gb(out_, 0.0) {}

void Linear::init_kaiming(Rng& rng) {
    const double s = std::sqrt(2.0 / in);
    for (auto& x : w) x = s * rng.normal();
    std::fill(b.begin(), b.end(), 0.0);
}

VectorXd Linear::forward(const VectorXd& x, bool keep_cache) {
    check(static_cast<int>(x.size()) == in, "Linear: size mismatch");
    VectorXd y = wmat() * x + Eigen::Map<const VectorXd>(b.data(), out);
    if (keep_cache) x_cache_ = x;
    return y;
}

VectorXd Linear::backward(const VectorXd& gy, bool accumulate) {
    if (accumulate) {
        Eigen::Map<RowMat> gwm(gw.data(), out, in);
        gwm.noalias() += gy * x_cache_.transpose();
        Eigen::Map<VectorXd>(gb.data(), out) += gy;
    }
    return wmat().transpose() * gy;
}

void Linear::params(const std::string& prefix, std::vector<ParamRef>& out_) {
    out_.push_back({prefix + ".w", &w, &gw, nullptr, true});
    out_.push_back({prefix + ".b", &b, &gb, nullptr});
}

Tensor Relu::forward(const Tensor& x, bool keep_cache) {
    Tensor y = x;
    if (keep_cache) pos_.assign(x.v.size(), 0);
    for (std::size_t i = 0; i < y.v.size(); ++i) {
        if (y.v[i] > 0.0) {
            if (keep_cache) pos_[i] = 1;
        } else {
            y.v[i] = 0.0;
        }
    }
    return y;
}

Tensor Relu::backward(const Tensor& gy) const {
    Tensor gx = gy;
    for (std::size_t i = 0; i < gx.v.size(); ++i)
        if (!pos_[i]) gx.v[i] = 0.0;
    return gx;
}

VectorXd softmax(const VectorXd& logits) {
    const double m = logits.maxCoeff();
    VectorXd e = (logits.array() - m).exp();
    return e / e.sum();
}

VectorXd log_softmax(const VectorXd& logits) {
    const double m = logits.maxCoeff();
    const double lse = std::log((logits.array() - m).exp().sum()) + m;
    return logits.array() - lse;
}

double softmax_cross_entropy(const VectorXd& logits, int label, VectorXd* dlogits) {
    VectorXd ls = log_softmax(logits);
    if (dlogits) {
        *dlogits = ls.array().exp();
        (*dlogits)(label) -= 1.0;
    }
    return -ls(label);
}

void AdamW::init(const std::vector<ParamRef>& ps) {
    m_.clear();
    v_.clear();
    for (const auto& p : ps) {
        m_.emplace_back(p.value->size(), 0.0);
        v_.emplace_back(p.value->size(), 0.0);
    }
    t = 0;
}

void AdamW::step(std::vector<ParamRef>& ps, double lr) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t pi = 0; pi < ps.size(); ++pi) {
        auto& p = ps[pi];
        auto& m = m_[pi];
        auto& v = v_[pi];
        const bool decay = p.decay;
        for (std::size_t i = 0; i < p.value->size(); ++i) {
            const double g = (*p.grad)[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            double upd = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
            if (decay) upd += weight_decay * (*p.value)[i];
            (*p.value)[i] -= lr * upd;
        }
        if (p.mask)
            for (std::size_t i = 0; i < p.value->size(); ++i) (*p.value)[i] *= (*p.mask)[i];
    }
}

void AdamW::zero_grad(std::vector<ParamRef>& ps) {
    for (auto& p : ps) std::fill(p.grad->begin(), p.grad->end(), 0.0);
}

void write_params_blob(std::ostream& os, const std::vector<ParamRef>& ps) {
    for (const auto& p : ps) {
        const std::uint64_t n = p.value->size();
        os.write(reinterpret_cast<const char*>(&n), sizeof(n));
        os.write(reinterpret_cast<const char*>(p.value->data()),
                 static_cast<std::streamsize>(n * sizeof(double)));
    }
}

void read_params_blob(std::istream& is, std::vector<ParamRef>& ps) {
    for (auto& p : ps) {
        std::uint64_t n = 0;
        is.read(reinterpret_cast<char*>(&n), sizeof(n));
        check(is.good() && n == p.value->size(), "checkpoint: parameter size mismatch at " + p.name);
        is.read(reinterpret_cast<char*>(p.value->data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        check(is.good(), "checkpoint: truncated parameter blob at " + p.name);
    }
}

}  // namespace mvdet
