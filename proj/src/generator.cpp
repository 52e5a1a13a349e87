#include "mvdet/generator.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace mvdet {

namespace {

constexpr double kLn2 = 0.6931471805599453;

// kernel tap allowed for positions strictly before the center pixel
std::vector<double> make_mask(int cout, int cin, int k, bool include_center) {
    std::vector<double> m(static_cast<std::size_t>(cout) * cin * k * k, 0.0);
    const int half = k / 2;
    for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
            const int dy = ky - half, dx = kx - half;
            const bool ok = dy < 0 || (dy == 0 && (include_center ? dx <= 0 : dx < 0));
            if (!ok) continue;
            for (int o = 0; o < cout; ++o)
                for (int ci = 0; ci < cin; ++ci)
                    m[((static_cast<std::size_t>(o) * cin + ci) * k + ky) * k + kx] = 1.0;
        }
    }
    return m;
}

struct Rect {
    int r0, r1, c0, c1;  // inclusive
    int h() const { return r1 - r0 + 1; }
    int w() const { return c1 - c0 + 1; }
    int size() const { return h() * w(); }
};

int draw_from_probs(const VectorXd& probs, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (int v = 0; v < probs.size(); ++v) {
        acc += probs(v);
        if (u < acc) return v;
    }
    return static_cast<int>(probs.size()) - 1;
}

}  // namespace

std::vector<double> GenerativeModel::scale_image(const FlatImage& image) {
    std::vector<double> s(static_cast<std::size_t>(image.size()));
    for (int ch = 0; ch < image.channels; ++ch)
        for (int r = 0; r < image.rows; ++r)
            for (int c = 0; c < image.cols; ++c)
                s[(static_cast<std::size_t>(ch) * image.rows + r) * image.cols + c] =
                    image.at(r, c, ch) / 255.0 - 0.5;
    return s;
}

std::vector<double> GenerativeModel::scale_unit(const std::vector<double>& x01, int rows, int cols,
                                                int channels) {
    std::vector<double> s(x01.size());
    for (int ch = 0; ch < channels; ++ch)
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                s[(static_cast<std::size_t>(ch) * rows + r) * cols + c] =
                    x01[(r * cols + c) * channels + ch] - 0.5;
    return s;
}

GenerativeModel::GenerativeModel(const json& arch, std::uint64_t seed) : arch_json(arch) {
    classes = arch.at("classes");
    rows = arch.at("rows");
    cols = arch.at("cols");
    channels = arch.at("channels");
    feat = arch.value("features", 48);
    n_hidden = arch.value("hidden", 4);
    k_first = arch.value("k_first", 7);
    k_hidden = arch.value("k_hidden", 3);
    check(channels >= 1 && channels <= 3, "generator: channels must be 1..3");

    Rng rng(derive_seed(seed, 0x9E4E));

    first = Conv2d(channels, feat, k_first, 1, k_first / 2);
    first.mask = make_mask(feat, channels, k_first, /*include_center=*/false);
    first.init_kaiming(rng);

    for (int l = 0; l < n_hidden; ++l) {
        Conv2d c(feat, feat, k_hidden, 1, k_hidden / 2);
        c.mask = make_mask(feat, feat, k_hidden, /*include_center=*/true);
        c.init_kaiming(rng);
        hidden.push_back(std::move(c));
    }

    class_bias.assign(1 + n_hidden, std::vector<double>(static_cast<std::size_t>(classes) * feat, 0.0));
    g_class_bias = class_bias;

    for (int ch = 0; ch < channels; ++ch) {
        Linear h(feat + ch, kValues);
        h.init_kaiming(rng);
        heads.push_back(std::move(h));
        head_class_bias.emplace_back(static_cast<std::size_t>(classes) * kValues, 0.0);
        g_head_class_bias.emplace_back(static_cast<std::size_t>(classes) * kValues, 0.0);
    }

    meta = json{{"seed", seed}};
}

void GenerativeModel::collect_params(std::vector<ParamRef>& out) {
    first.params("first", out);
    for (std::size_t l = 0; l < hidden.size(); ++l)
        hidden[l].params("hidden" + std::to_string(l), out);
    for (std::size_t l = 0; l < class_bias.size(); ++l)
        out.push_back({"class_bias" + std::to_string(l), &class_bias[l], &g_class_bias[l], nullptr});
    for (std::size_t ch = 0; ch < heads.size(); ++ch) {
        heads[ch].params("head" + std::to_string(ch), out);
        out.push_back({"head_class_bias" + std::to_string(ch), &head_class_bias[ch],
                       &g_head_class_bias[ch], nullptr});
    }
}

GenerativeModel GenerativeModel::clone() const {
    GenerativeModel m(arch_json, 0);
    m.meta = meta;
    m.temperature = temperature;
    std::vector<ParamRef> src, dst;
    const_cast<GenerativeModel*>(this)->collect_params(src);
    m.collect_params(dst);
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].value = *src[i].value;
    return m;
}

// ---------------------------------------------------------------- full image

namespace {
// shared by the full-forward paths; caches live in the model's conv layers
struct StackActs {
    Tensor in;                      // scaled input
    std::vector<Tensor> post;      // post-relu output of each conv layer
    std::vector<std::vector<char>> relu_pos;
};
}  // namespace

struct GenForwardCtx {
    static void run(GenerativeModel& m, const std::vector<double>& scaled, int label,
                    StackActs& acts, bool keep) {
        acts.in = Tensor(m.channels, m.rows, m.cols);
        acts.in.v = scaled;
        const int L = 1 + m.n_hidden;
        acts.post.resize(L);
        acts.relu_pos.resize(L);
        Tensor cur;
        for (int l = 0; l < L; ++l) {
            Conv2d& conv = l == 0 ? m.first : m.hidden[l - 1];
            Tensor y = conv.forward(l == 0 ? acts.in : cur, keep);
            const double* cb = m.class_bias[l].data() + static_cast<std::size_t>(label) * m.feat;
            for (int o = 0; o < y.c; ++o) y.mat().row(o).array() += cb[o];
            auto& pos = acts.relu_pos[l];
            pos.assign(y.v.size(), 0);
            for (std::size_t i = 0; i < y.v.size(); ++i) {
                if (y.v[i] > 0.0)
                    pos[i] = 1;
                else
                    y.v[i] = 0.0;
            }
            cur = y;
            if (keep || l == L - 1) acts.post[l] = cur;
        }
    }

    // gfeat: gradient w.r.t. final features; accumulates parameter grads when
    // acc, returns input gradient when need_input
    static Tensor back(GenerativeModel& m, StackActs& acts, int label, Tensor gfeat, bool acc,
                       bool need_input) {
        const int L = 1 + m.n_hidden;
        Tensor g = std::move(gfeat);
        for (int l = L - 1; l >= 0; --l) {
            auto& pos = acts.relu_pos[l];
            for (std::size_t i = 0; i < g.v.size(); ++i)
                if (!pos[i]) g.v[i] = 0.0;
            if (acc) {
                double* gcb = m.g_class_bias[l].data() + static_cast<std::size_t>(label) * m.feat;
                for (int o = 0; o < g.c; ++o) gcb[o] += g.mat().row(o).sum();
            }
            Conv2d& conv = l == 0 ? m.first : m.hidden[l - 1];
            g = conv.backward(g, acc, /*need_input=*/l > 0 || need_input);
        }
        return g;
    }
};

void GenerativeModel::forward_logits(const FlatImage& image, int label,
                                     std::vector<RowMat>& all_logits) {
    check(image.rows == rows && image.cols == cols && image.channels == channels,
          "generator: image shape mismatch");
    check(label >= 0 && label < classes, "generator: label out of range");
    StackActs acts;
    GenForwardCtx::run(*this, scale_image(image), label, acts, false);
    const int np = rows * cols;
    all_logits.assign(channels, RowMat());
    const auto& F = acts.post.back();
    for (int ch = 0; ch < channels; ++ch) {
        RowMat X(feat + ch, np);
        X.topRows(feat) = F.mat();
        for (int j = 0; j < ch; ++j) X.row(feat + j) = acts.in.mat().row(j);
        Eigen::Map<const RowMat> W(heads[ch].w.data(), kValues, feat + ch);
        RowMat Y = W * X;
        const double* hb = head_class_bias[ch].data() + static_cast<std::size_t>(label) * kValues;
        for (int v = 0; v < kValues; ++v) Y.row(v).array() += heads[ch].b[v] + hb[v];
        all_logits[ch] = std::move(Y);
    }
}

double GenerativeModel::log_likelihood(const FlatImage& image, int label) {
    std::vector<RowMat> logits;
    forward_logits(image, label, logits);
    const int np = rows * cols;
    double total = 0.0;
    for (int ch = 0; ch < channels; ++ch) {
        for (int p = 0; p < np; ++p) {
            auto col = logits[ch].col(p);
            const double m = col.maxCoeff();
            const double lse = std::log((col.array() - m).exp().sum()) + m;
            const int target = image.pixels[static_cast<std::size_t>(p) * channels + ch];
            total += col(target) - lse;
        }
    }
    return total;
}

double GenerativeModel::train_step_loss(const FlatImage& image, int label, bool backprop) {
    // kept in one routine so the loss and its gradient share the forward pass
    StackActs acts;
    GenForwardCtx::run(*this, scale_image(image), label, acts, backprop);
    const int np = rows * cols;
    const double inv_n = 1.0 / (static_cast<double>(np) * channels);
    const auto& F = acts.post.back();

    double loss = 0.0;
    Tensor gF;
    if (backprop) gF = Tensor(feat, rows, cols);

    for (int ch = 0; ch < channels; ++ch) {
        RowMat X(feat + ch, np);
        X.topRows(feat) = F.mat();
        for (int j = 0; j < ch; ++j) X.row(feat + j) = acts.in.mat().row(j);
        Eigen::Map<const RowMat> W(heads[ch].w.data(), kValues, feat + ch);
        RowMat Y = W * X;
        const double* hb = head_class_bias[ch].data() + static_cast<std::size_t>(label) * kValues;
        for (int v = 0; v < kValues; ++v) Y.row(v).array() += heads[ch].b[v] + hb[v];

        RowMat D;
        if (backprop) D.resize(kValues, np);
        for (int p = 0; p < np; ++p) {
            auto col = Y.col(p);
            const double m = col.maxCoeff();
            const double lse = std::log((col.array() - m).exp().sum()) + m;
            const int target = image.pixels[static_cast<std::size_t>(p) * channels + ch];
            loss += (lse - col(target)) * inv_n;
            if (backprop) {
                D.col(p) = (col.array() - lse).exp() * inv_n;
                D(target, p) -= inv_n;
            }
        }
        if (backprop) {
            Eigen::Map<RowMat> gW(heads[ch].gw.data(), kValues, feat + ch);
            gW.noalias() += D * X.transpose();
            for (int v = 0; v < kValues; ++v) heads[ch].gb[v] += D.row(v).sum();
            double* ghb = g_head_class_bias[ch].data() + static_cast<std::size_t>(label) * kValues;
            for (int v = 0; v < kValues; ++v) ghb[v] += D.row(v).sum();
            gF.mat().noalias() += W.leftCols(feat).transpose() * D;
        }
    }
    if (backprop) GenForwardCtx::back(*this, acts, label, std::move(gF), true, false);
    return loss;
}

double GenerativeModel::log_likelihood_unit(const std::vector<double>& x01, int label,
                                            std::vector<double>* grad_x01) {
    check(static_cast<int>(x01.size()) == rows * cols * channels, "log_likelihood_unit: size");
    // quantized targets are frozen; the gradient flows through the network
    // input path only (a straight-through surrogate)
    std::vector<int> targets(x01.size());
    for (std::size_t i = 0; i < x01.size(); ++i) {
        double v = std::round(x01[i] * 255.0);
        targets[i] = static_cast<int>(std::min(255.0, std::max(0.0, v)));
    }
    StackActs acts;
    GenForwardCtx::run(*this, scale_unit(x01, rows, cols, channels), label, acts, grad_x01 != nullptr);
    const int np = rows * cols;
    const auto& F = acts.post.back();

    double total = 0.0;
    Tensor gF, gin;
    if (grad_x01) {
        gF = Tensor(feat, rows, cols);
        gin = Tensor(channels, rows, cols);
    }

    for (int ch = 0; ch < channels; ++ch) {
        RowMat X(feat + ch, np);
        X.topRows(feat) = F.mat();
        for (int j = 0; j < ch; ++j) X.row(feat + j) = acts.in.mat().row(j);
        Eigen::Map<const RowMat> W(heads[ch].w.data(), kValues, feat + ch);
        RowMat Y = W * X;
        const double* hb = head_class_bias[ch].data() + static_cast<std::size_t>(label) * kValues;
        for (int v = 0; v < kValues; ++v) Y.row(v).array() += heads[ch].b[v] + hb[v];

        RowMat D;
        if (grad_x01) D.resize(kValues, np);
        for (int p = 0; p < np; ++p) {
            auto col = Y.col(p);
            const double m = col.maxCoeff();
            const double lse = std::log((col.array() - m).exp().sum()) + m;
            const int target = targets[static_cast<std::size_t>(p) * channels + ch];
            total += col(target) - lse;
            if (grad_x01) {
                // d(log p)/d logits = e_target - softmax
                D.col(p) = -(col.array() - lse).exp();
                D(target, p) += 1.0;
            }
        }
        if (grad_x01) {
            gF.mat().noalias() += W.leftCols(feat).transpose() * D;
            for (int j = 0; j < ch; ++j)
                gin.mat().row(j).noalias() += W.col(feat + j).transpose() * D;
        }
    }
    if (grad_x01) {
        Tensor gconv = GenForwardCtx::back(*this, acts, label, std::move(gF), false, true);
        for (std::size_t i = 0; i < gin.v.size(); ++i) gin.v[i] += gconv.v[i];
        grad_x01->assign(x01.size(), 0.0);
        for (int ch = 0; ch < channels; ++ch)
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c)
                    (*grad_x01)[(r * cols + c) * channels + ch] = gin.at(ch, r, c);
    }
    return total;
}

// ---------------------------------------------------------------- rect path

void GenerativeModel::features_at(const std::vector<double>& scaled, int label, int r, int c,
                                  VectorXd& out) {
    const int L = 1 + n_hidden;
    // output rect of each layer, layer L-1 needs only (r,c)
    std::vector<Rect> rects(L);
    rects[L - 1] = {r, r, c, c};
    for (int l = L - 1; l >= 1; --l) {
        const int reach = k_hidden / 2;  // layer l is hidden[l-1]
        Rect& o = rects[l];
        rects[l - 1] = {std::max(0, o.r0 - reach), o.r1, std::max(0, o.c0 - reach),
                        std::min(cols - 1, o.c1 + reach)};
    }
    const int reach0 = k_first / 2;
    Rect in_rect{std::max(0, rects[0].r0 - reach0), rects[0].r1, std::max(0, rects[0].c0 - reach0),
                 std::min(cols - 1, rects[0].c1 + reach0)};

    auto& bufs = ws_bufs_;
    bufs.resize(L);
    RowMat col;
    for (int l = 0; l < L; ++l) {
        const Conv2d& conv = l == 0 ? first : hidden[l - 1];
        const Rect& orc = rects[l];
        const Rect& irc = l == 0 ? in_rect : rects[l - 1];
        const RowMat* prev = l == 0 ? nullptr : &bufs[l - 1];
        const int k = conv.k, half = conv.k / 2;
        col.resize(conv.cin * k * k, orc.size());
        int pcol = 0;
        for (int y = orc.r0; y <= orc.r1; ++y) {
            for (int x = orc.c0; x <= orc.c1; ++x, ++pcol) {
                for (int ci = 0; ci < conv.cin; ++ci) {
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = y + ky - half;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = x + kx - half;
                            double v = 0.0;
                            if (iy >= 0 && iy < rows && ix >= 0 && ix < cols) {
                                if (l == 0) {
                                    v = scaled[(static_cast<std::size_t>(ci) * rows + iy) * cols + ix];
                                } else if (iy >= irc.r0 && iy <= irc.r1 && ix >= irc.c0 &&
                                           ix <= irc.c1) {
                                    v = (*prev)(ci, (iy - irc.r0) * irc.w() + (ix - irc.c0));
                                }
                                // inside the image but outside the previous rect
                                // only happens beyond this position's receptive
                                // cone, where the mask weight is exactly zero
                            }
                            col((ci * k + ky) * k + kx, pcol) = v;
                        }
                    }
                }
            }
        }
        RowMat& y = bufs[l];
        Eigen::Map<const RowMat> W(conv.w.data(), conv.cout, conv.cin * k * k);
        y.noalias() = W * col;
        const double* cb = class_bias[l].data() + static_cast<std::size_t>(label) * feat;
        for (int o = 0; o < conv.cout; ++o) {
            y.row(o).array() += conv.b[o] + cb[o];
            for (int i = 0; i < y.cols(); ++i)
                if (y(o, i) < 0.0) y(o, i) = 0.0;
        }
    }
    const Rect& last = rects[L - 1];
    out = bufs[L - 1].col((r - last.r0) * last.w() + (c - last.c0));
}

VectorXd GenerativeModel::head_logits(int ch, const VectorXd& f, const double* prev_scaled,
                                      int label) const {
    const Linear& h = heads[ch];
    VectorXd x(feat + ch);
    x.head(feat) = f;
    for (int j = 0; j < ch; ++j) x(feat + j) = prev_scaled[j];
    VectorXd y = Eigen::Map<const RowMat>(h.w.data(), kValues, feat + ch) * x;
    const double* hb = head_class_bias[ch].data() + static_cast<std::size_t>(label) * kValues;
    for (int v = 0; v < kValues; ++v) y(v) += h.b[v] + hb[v];
    return y;
}

VectorXd GenerativeModel::conditional_at(const FlatImage& image, int label, int r, int c, int ch) {
    check(image.rows == rows && image.cols == cols && image.channels == channels,
          "conditional_at: image shape mismatch");
    check(r >= 0 && r < rows && c >= 0 && c < cols && ch >= 0 && ch < channels,
          "conditional_at: position out of range");
    auto scaled = scale_image(image);
    VectorXd f;
    features_at(scaled, label, r, c, f);
    double prev[3] = {0, 0, 0};
    for (int j = 0; j < ch; ++j)
        prev[j] = scaled[(static_cast<std::size_t>(j) * rows + r) * cols + c];
    VectorXd logits = head_logits(ch, f, prev, label);
    if (temperature != 1.0) logits /= temperature;
    return softmax(logits);
}

// ---------------------------------------------------------------- operations

double conditional_log_likelihood(GenerativeModel& model, const FlatImage& image, int label) {
    return model.log_likelihood(image, label);
}

int sample_pixel(GenerativeModel& model, const FlatImage& prefix, int label, int i, Rng& rng) {
    check(i >= 0 && i < prefix.size(), "sample_pixel: index out of range");
    const int p = i / prefix.channels;
    const int ch = i % prefix.channels;
    VectorXd probs = model.conditional_at(prefix, label, p / prefix.cols, p % prefix.cols, ch);
    return draw_from_probs(probs, rng);
}

FlatImage generate_rows(GenerativeModel& model, const FlatImage& image, int label, int r_start,
                        int r_end, Rng& rng) {
    check(image.rows == model.rows && image.cols == model.cols && image.channels == model.channels,
          "generate_rows: image shape mismatch");
    check(r_start >= 1 && r_start <= r_end && r_end <= image.rows,
          "generate_rows: invalid band [" + std::to_string(r_start) + "," + std::to_string(r_end) + "]");
    check(label >= 0 && label < model.classes, "generate_rows: label out of range");

    FlatImage work = image;
    auto scaled = GenerativeModel::scale_image(work);
    VectorXd f;
    double prev[3] = {0, 0, 0};
    for (int r = r_start - 1; r <= r_end - 1; ++r) {
        for (int c = 0; c < model.cols; ++c) {
            model.features_at(scaled, label, r, c, f);
            for (int ch = 0; ch < model.channels; ++ch) {
                VectorXd logits = model.head_logits(ch, f, prev, label);
                if (model.temperature != 1.0) logits /= model.temperature;
                const int v = draw_from_probs(softmax(logits), rng);
                work.at(r, c, ch) = static_cast<std::uint8_t>(v);
                const double sv = v / 255.0 - 0.5;
                scaled[(static_cast<std::size_t>(ch) * model.rows + r) * model.cols + c] = sv;
                prev[ch] = sv;
            }
        }
    }
    return work;
}

double bits_per_dim(GenerativeModel& model, const std::vector<LabeledSample>& samples) {
    check(!samples.empty(), "bits_per_dim: empty sample set");
    double total_nats = 0.0;
    double total_dims = 0.0;
    for (const auto& s : samples) {
        total_nats += -model.log_likelihood(s.image, s.label);
        total_dims += s.image.size();
    }
    return total_nats / (total_dims * kLn2);
}

GenerativeModel train_generator(const DatasetSplit& data, const json& arch,
                                const GeneratorTrainConfig& cfg) {
    check(!data.train.empty(), "train_generator: empty train split");
    GenerativeModel model(arch, cfg.seed);

    std::vector<ParamRef> params;
    model.collect_params(params);
    AdamW opt;
    opt.init(params);

    const int n = static_cast<int>(data.train.size());
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;

    // small fixed validation subset keeps the per-epoch report cheap
    std::vector<LabeledSample> val_probe(
        data.val.begin(), data.val.begin() + std::min<std::size_t>(data.val.size(), 200));

    const long steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
    const long total_steps = steps_per_epoch * cfg.epochs;
    long step = 0;
    json history = json::array();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng erng(derive_seed(cfg.seed, 0x6E40'0000ull + epoch));
        erng.shuffle(order);
        double epoch_loss = 0.0;
        for (int start = 0; start < n; start += cfg.batch) {
            const int bsz = std::min(cfg.batch, n - start);
            opt.zero_grad(params);
            for (int bi = 0; bi < bsz; ++bi) {
                const auto& s = data.train[order[start + bi]];
                const double loss = model.train_step_loss(s.image, s.label, true);
                check(std::isfinite(loss), "train_generator: loss diverged at epoch " +
                                               std::to_string(epoch) + " sample " + s.id);
                epoch_loss += loss;
            }
            for (auto& p : params)
                for (auto& g : *p.grad) g /= bsz;
            const double prog = static_cast<double>(step) / std::max<long>(1, total_steps);
            const double lr = cfg.lr * (cfg.lr_min_frac +
                                        (1.0 - cfg.lr_min_frac) * 0.5 * (1.0 + std::cos(3.14159265358979 * prog)));
            opt.step(params, lr);
            ++step;
        }
        const double train_bits = epoch_loss / n / kLn2;
        const double val_bits = val_probe.empty() ? 0.0 : bits_per_dim(model, val_probe);
        history.push_back({{"epoch", epoch}, {"train_bits", train_bits}, {"val_bits", val_bits}});
        if (cfg.verbose)
            std::printf("[generator] epoch %d train %.3f bits/dim val %.3f bits/dim\n", epoch,
                        train_bits, val_bits);
    }

    model.meta["seed"] = cfg.seed;
    model.meta["epochs"] = cfg.epochs;
    model.meta["batch"] = cfg.batch;
    model.meta["lr"] = cfg.lr;
    model.meta["history"] = history;
    if (!data.test.empty()) {
        std::vector<LabeledSample> test_probe(
            data.test.begin(), data.test.begin() + std::min<std::size_t>(data.test.size(), 300));
        model.meta["test_bits_per_dim"] = bits_per_dim(model, test_probe);
    }
    return model;
}

static const char kGeneratorMagic[9] = "MVDETGN1";

void save_generator(const GenerativeModel& model, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    check(f.good(), "save_generator: cannot write " + path);
    f.write(kGeneratorMagic, 8);
    json header{{"arch", model.arch_json}, {"meta", model.meta}};
    const std::string hs = header.dump();
    const std::uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    std::vector<ParamRef> params;
    const_cast<GenerativeModel&>(model).collect_params(params);
    write_params_blob(f, params);
    check(f.good(), "save_generator: write failed for " + path);
}

GenerativeModel load_generator(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "load_generator: cannot read " + path);
    char magic[8];
    f.read(magic, 8);
    check(f.good() && std::string(magic, 8) == kGeneratorMagic, "load_generator: bad magic in " + path);
    std::uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hlen));
    json header = json::parse(hs);
    GenerativeModel m(header.at("arch"), 0);
    m.meta = header.at("meta");
    std::vector<ParamRef> params;
    m.collect_params(params);
    read_params_blob(f, params);
    return m;
}

}  // namespace mvdet
