#include "mvdet/classifier.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace mvdet {

int argmax_lowest(const VectorXd& v) {
    int best = 0;
    for (int i = 1; i < v.size(); ++i)
        if (v(i) > v(best)) best = i;
    return best;
}

Tensor image_to_tensor(const FlatImage& image) {
    Tensor t(image.channels, image.rows, image.cols);
    for (int r = 0; r < image.rows; ++r)
        for (int c = 0; c < image.cols; ++c)
            for (int ch = 0; ch < image.channels; ++ch)
                t.at(ch, r, c) = image.at(r, c, ch) / 255.0;
    return t;
}

Tensor unit_to_tensor(const std::vector<double>& x, int rows, int cols, int channels) {
    check(static_cast<int>(x.size()) == rows * cols * channels, "unit_to_tensor: length mismatch");
    Tensor t(channels, rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            for (int ch = 0; ch < channels; ++ch)
                t.at(ch, r, c) = x[(r * cols + c) * channels + ch];
    return t;
}

namespace {

std::vector<double> tensor_to_flat(const Tensor& t) {
    std::vector<double> x(static_cast<std::size_t>(t.size()));
    for (int r = 0; r < t.h; ++r)
        for (int c = 0; c < t.w; ++c)
            for (int ch = 0; ch < t.c; ++ch)
                x[(r * t.w + c) * t.c + ch] = t.at(ch, r, c);
    return x;
}

// ---------------------------------------------------------------- resnet

struct ResBlock {
    Conv2d conv1, conv2;
    GroupNorm gn1, gn2;
    Relu relu1, relu2;
    Conv2d proj;  // 1x1 when stride or width changes
    bool has_proj = false;

    ResBlock() = default;
    ResBlock(int cin, int cout, int stride, int groups)
        : conv1(cin, cout, 3, stride, 1),
          conv2(cout, cout, 3, 1, 1),
          gn1(cout, groups),
          gn2(cout, groups) {
        if (stride != 1 || cin != cout) {
            proj = Conv2d(cin, cout, 1, stride, 0);
            has_proj = true;
        }
    }

    void init(Rng& rng) {
        conv1.init_kaiming(rng);
        conv2.init_kaiming(rng);
        if (has_proj) proj.init_kaiming(rng);
    }

    Tensor forward(const Tensor& x, bool keep) {
        Tensor y = relu1.forward(gn1.forward(conv1.forward(x, keep), keep), keep);
        y = gn2.forward(conv2.forward(y, keep), keep);
        Tensor s = has_proj ? proj.forward(x, keep) : x;
        check(s.size() == y.size(), "ResBlock: skip size mismatch");
        for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += s.v[i];
        return relu2.forward(y, keep);
    }

    void params(const std::string& p, std::vector<ParamRef>& out) {
        conv1.params(p + ".conv1", out);
        gn1.params(p + ".gn1", out);
        conv2.params(p + ".conv2", out);
        gn2.params(p + ".gn2", out);
        if (has_proj) proj.params(p + ".proj", out);
    }
};

struct ResNet final : Network {
    json arch_;
    int classes, rows, cols, channels, groups;
    std::vector<int> widths, blocks;

    Conv2d stem;
    GroupNorm stem_gn;
    Relu stem_relu;
    std::vector<ResBlock> body;
    Linear fc;

    int gap_h = 0, gap_w = 0;
    Tensor gap_in_;  // cache for backward through pooling

    explicit ResNet(const json& arch, Rng& rng) : arch_(arch) {
        classes = arch.at("classes");
        rows = arch.at("rows");
        cols = arch.at("cols");
        channels = arch.at("channels");
        groups = arch.value("groups", 8);
        widths = arch.at("widths").get<std::vector<int>>();
        blocks = arch.at("blocks").get<std::vector<int>>();
        check(widths.size() == blocks.size() && !widths.empty(), "resnet: widths/blocks mismatch");

        stem = Conv2d(channels, widths[0], 3, 1, 1);
        stem_gn = GroupNorm(widths[0], groups);
        int cin = widths[0];
        for (std::size_t s = 0; s < widths.size(); ++s) {
            for (int b = 0; b < blocks[s]; ++b) {
                const int stride = (s > 0 && b == 0) ? 2 : 1;
                body.emplace_back(cin, widths[s], stride, groups);
                cin = widths[s];
            }
        }
        fc = Linear(widths.back(), classes);

        stem.init_kaiming(rng);
        for (auto& blk : body) blk.init(rng);
        fc.init_kaiming(rng);
    }

    int class_count() const override { return classes; }
    int rep_dim() const override { return widths.back(); }

    void forward(const Tensor& x, VectorXd& logits, VectorXd& h, bool keep) override {
        check(x.c == channels && x.h == rows && x.w == cols, "classifier: input shape mismatch");
        Tensor y = stem_relu.forward(stem_gn.forward(stem.forward(x, keep), keep), keep);
        for (auto& blk : body) y = blk_forward(blk, y, keep);
        gap_h = y.h;
        gap_w = y.w;
        if (keep) gap_in_ = y;
        h = VectorXd(y.c);
        const double inv = 1.0 / (y.h * y.w);
        for (int c = 0; c < y.c; ++c) h(c) = y.mat().row(c).sum() * inv;
        logits = fc.forward(h, keep);
    }

    Tensor backward(const VectorXd& dlogits, const VectorXd& dh, bool acc, bool need_input) override {
        VectorXd gh = fc.backward(dlogits, acc);
        if (dh.size()) gh += dh;
        Tensor g(gap_in_.c, gap_h, gap_w);
        const double inv = 1.0 / (gap_h * gap_w);
        for (int c = 0; c < g.c; ++c) g.mat().row(c).setConstant(gh(c) * inv);
        for (auto it = body.rbegin(); it != body.rend(); ++it) g = blk_backward(*it, g, acc);
        g = stem.backward(stem_gn.backward(stem_relu.backward(g), acc), acc, need_input);
        return g;
    }

    void collect_params(std::vector<ParamRef>& out) override {
        stem.params("stem", out);
        stem_gn.params("stem_gn", out);
        for (std::size_t i = 0; i < body.size(); ++i) body[i].params("block" + std::to_string(i), out);
        fc.params("fc", out);
    }

    json arch() const override { return arch_; }

private:
    static Tensor blk_forward(ResBlock& blk, const Tensor& x, bool keep) {
        return blk.forward(x, keep);
    }

    static Tensor blk_backward(ResBlock& blk, const Tensor& gy, bool acc) {
        Tensor g = blk.relu2.backward(gy);
        // main branch
        Tensor gmain = blk.gn2.backward(g, acc);
        gmain = blk.conv2.backward(gmain, acc);
        gmain = blk.relu1.backward(gmain);
        gmain = blk.gn1.backward(gmain, acc);
        gmain = blk.conv1.backward(gmain, acc);
        // skip branch
        if (blk.has_proj) {
            Tensor gskip = blk.proj.backward(g, acc);
            for (std::size_t i = 0; i < gmain.v.size(); ++i) gmain.v[i] += gskip.v[i];
        } else {
            for (std::size_t i = 0; i < gmain.v.size(); ++i) gmain.v[i] += g.v[i];
        }
        return gmain;
    }
};

// ---------------------------------------------------------------- linear

struct LinearNet final : Network {
    json arch_;
    int classes, rows, cols, channels, n;
    Linear fc;
    VectorXd x_;

    explicit LinearNet(const json& arch, Rng& rng) : arch_(arch) {
        classes = arch.at("classes");
        rows = arch.at("rows");
        cols = arch.at("cols");
        channels = arch.at("channels");
        n = rows * cols * channels;
        fc = Linear(n, classes);
        if (arch.value("random_init", true)) fc.init_kaiming(rng);
    }

    int class_count() const override { return classes; }
    int rep_dim() const override { return n; }

    void forward(const Tensor& x, VectorXd& logits, VectorXd& h, bool keep) override {
        check(x.c == channels && x.h == rows && x.w == cols, "classifier: input shape mismatch");
        auto flat = tensor_to_flat(x);
        h = Eigen::Map<const VectorXd>(flat.data(), n);
        logits = fc.forward(h, keep);
        if (keep) x_ = h;
    }

    Tensor backward(const VectorXd& dlogits, const VectorXd& dh, bool acc, bool) override {
        VectorXd gx = fc.backward(dlogits, acc);
        if (dh.size()) gx += dh;
        Tensor g(channels, rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                for (int ch = 0; ch < channels; ++ch)
                    g.at(ch, r, c) = gx((r * cols + c) * channels + ch);
        return g;
    }

    void collect_params(std::vector<ParamRef>& out) override { fc.params("fc", out); }

    json arch() const override { return arch_; }
};

}  // namespace

std::unique_ptr<Network> make_network(const json& arch, Rng& rng) {
    const std::string kind = arch.at("kind");
    if (kind == "resnet") return std::make_unique<ResNet>(arch, rng);
    if (kind == "linear") return std::make_unique<LinearNet>(arch, rng);
    check(false, "make_network: unknown arch kind '" + kind + "'");
    return nullptr;
}

ClassifierModel ClassifierModel::clone() const {
    ClassifierModel out;
    Rng rng(0);
    out.net = make_network(net->arch(), rng);
    out.meta = meta;
    out.rows = rows;
    out.cols = cols;
    out.channels = channels;
    std::vector<ParamRef> src, dst;
    const_cast<Network*>(net.get())->collect_params(src);
    out.net->collect_params(dst);
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].value = *src[i].value;
    return out;
}

ClassifierModel make_classifier(const json& arch, std::uint64_t seed) {
    ClassifierModel m;
    Rng rng(derive_seed(seed, 0xC1A55));
    m.net = make_network(arch, rng);
    m.rows = arch.at("rows");
    m.cols = arch.at("cols");
    m.channels = arch.at("channels");
    m.meta = json{{"seed", seed}};
    return m;
}

ClassifierModel train_classifier(const DatasetSplit& data, const json& arch,
                                 const ClassifierTrainConfig& cfg) {
    check(!data.train.empty(), "train_classifier: empty train split");
    ClassifierModel model = make_classifier(arch, cfg.seed);

    std::vector<ParamRef> params;
    model.net->collect_params(params);
    AdamW opt;
    opt.weight_decay = cfg.weight_decay;
    opt.init(params);

    const int n = static_cast<int>(data.train.size());
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;

    const long steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
    const long total_steps = steps_per_epoch * cfg.epochs;
    long step = 0;
    json history = json::array();

    const int C = model.class_count();
    const double ls = cfg.label_smoothing;
    std::vector<std::vector<double>> best_params;
    double best_val = -1.0;
    int best_epoch = -1;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng erng(derive_seed(cfg.seed, 0xE90C'0000ull + epoch));
        erng.shuffle(order);
        double epoch_loss = 0.0;
        int correct = 0;
        for (int start = 0; start < n; start += cfg.batch) {
            const int bsz = std::min(cfg.batch, n - start);
            opt.zero_grad(params);
            for (int bi = 0; bi < bsz; ++bi) {
                const auto& s = data.train[order[start + bi]];
                Tensor x = image_to_tensor(s.image);
                VectorXd logits, h, dlogits;
                model.net->forward(x, logits, h, true);
                // smoothed targets q = (1-ls)*onehot + ls/C
                VectorXd lsm = log_softmax(logits);
                double loss = -(1.0 - ls) * lsm(s.label) - (ls / C) * lsm.sum();
                dlogits = lsm.array().exp();
                dlogits(s.label) -= 1.0 - ls;
                dlogits.array() -= ls / C;
                check(std::isfinite(loss),
                      "train_classifier: loss diverged (NaN/inf) at epoch " + std::to_string(epoch) +
                          " sample " + s.id);
                epoch_loss += loss;
                if (argmax_lowest(logits) == s.label) ++correct;
                dlogits /= bsz;
                model.net->backward(dlogits, VectorXd(), true, false);
            }
            const double prog = static_cast<double>(step) / std::max<long>(1, total_steps);
            const double lr = cfg.lr * (cfg.lr_min_frac +
                                        (1.0 - cfg.lr_min_frac) * 0.5 * (1.0 + std::cos(3.14159265358979 * prog)));
            opt.step(params, lr);
            ++step;
        }
        double val_acc = data.val.empty() ? 0.0 : accuracy(model, data.val);
        if (cfg.keep_best_val && !data.val.empty() && val_acc > best_val) {
            best_val = val_acc;
            best_epoch = epoch;
            best_params.clear();
            for (const auto& p : params) best_params.push_back(*p.value);
        }
        history.push_back({{"epoch", epoch},
                           {"train_loss", epoch_loss / n},
                           {"train_acc", static_cast<double>(correct) / n},
                           {"val_acc", val_acc}});
        if (cfg.verbose)
            std::printf("[classifier] epoch %d loss %.4f train_acc %.3f val_acc %.3f\n", epoch,
                        epoch_loss / n, static_cast<double>(correct) / n, val_acc);
    }
    if (cfg.keep_best_val && best_epoch >= 0) {
        for (std::size_t i = 0; i < params.size(); ++i) *params[i].value = best_params[i];
        model.meta["best_val_epoch"] = best_epoch;
    }

    model.meta["seed"] = cfg.seed;
    model.meta["label_smoothing"] = ls;
    model.meta["epochs"] = cfg.epochs;
    model.meta["batch"] = cfg.batch;
    model.meta["lr"] = cfg.lr;
    model.meta["weight_decay"] = cfg.weight_decay;
    model.meta["history"] = history;
    model.meta["val_accuracy"] = data.val.empty() ? json() : json(accuracy(model, data.val));
    model.meta["test_accuracy"] = data.test.empty() ? json() : json(accuracy(model, data.test));
    return model;
}

ClassifierOutput classify(ClassifierModel& model, const FlatImage& image) {
    check(image.rows == model.rows && image.cols == model.cols && image.channels == model.channels,
          "classify: image dims do not match the trained model");
    Tensor x = image_to_tensor(image);
    ClassifierOutput out;
    VectorXd logits;
    model.net->forward(x, logits, out.representation, false);
    out.probs = softmax(logits);
    out.label = argmax_lowest(out.probs);
    return out;
}

ClassifierOutput classify_unit(ClassifierModel& model, const std::vector<double>& x) {
    Tensor t = unit_to_tensor(x, model.rows, model.cols, model.channels);
    ClassifierOutput out;
    VectorXd logits;
    model.net->forward(t, logits, out.representation, false);
    out.probs = softmax(logits);
    out.label = argmax_lowest(out.probs);
    return out;
}

VectorXd logits_unit(ClassifierModel& model, const std::vector<double>& x) {
    Tensor t = unit_to_tensor(x, model.rows, model.cols, model.channels);
    VectorXd logits, h;
    model.net->forward(t, logits, h, false);
    return logits;
}

std::vector<double> loss_gradient(ClassifierModel& model, const std::vector<double>& x, int label) {
    check(label >= 0 && label < model.class_count(), "loss_gradient: label out of range");
    Tensor t = unit_to_tensor(x, model.rows, model.cols, model.channels);
    VectorXd logits, h, dlogits;
    model.net->forward(t, logits, h, true);
    softmax_cross_entropy(logits, label, &dlogits);
    Tensor g = model.net->backward(dlogits, VectorXd(), false, true);
    return tensor_to_flat(g);
}

std::vector<double> input_gradient(ClassifierModel& model, const std::vector<double>& x,
                                   const VectorXd& dlogits) {
    Tensor t = unit_to_tensor(x, model.rows, model.cols, model.channels);
    VectorXd logits, h;
    model.net->forward(t, logits, h, true);
    Tensor g = model.net->backward(dlogits, VectorXd(), false, true);
    return tensor_to_flat(g);
}

std::vector<double> representation_gradient(ClassifierModel& model, const std::vector<double>& x,
                                            const VectorXd& dh) {
    Tensor t = unit_to_tensor(x, model.rows, model.cols, model.channels);
    VectorXd logits, h;
    model.net->forward(t, logits, h, true);
    Tensor g = model.net->backward(VectorXd::Zero(model.class_count()), dh, false, true);
    return tensor_to_flat(g);
}

double accuracy(ClassifierModel& model, const std::vector<LabeledSample>& samples) {
    if (samples.empty()) return 0.0;
    int ok = 0;
    for (const auto& s : samples)
        if (classify(model, s.image).label == s.label) ++ok;
    return static_cast<double>(ok) / samples.size();
}

static const char kClassifierMagic[9] = "MVDETCP1";

void save_classifier(const ClassifierModel& model, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    check(f.good(), "save_classifier: cannot write " + path);
    f.write(kClassifierMagic, 8);
    json header{{"arch", model.net->arch()}, {"meta", model.meta}};
    const std::string hs = header.dump();
    const std::uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    std::vector<ParamRef> params;
    const_cast<Network*>(model.net.get())->collect_params(params);
    write_params_blob(f, params);
    check(f.good(), "save_classifier: write failed for " + path);
}

ClassifierModel load_classifier(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "load_classifier: cannot read " + path);
    char magic[8];
    f.read(magic, 8);
    check(f.good() && std::string(magic, 8) == kClassifierMagic, "load_classifier: bad magic in " + path);
    std::uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hlen));
    json header = json::parse(hs);

    ClassifierModel m;
    Rng rng(0);
    m.net = make_network(header.at("arch"), rng);
    m.meta = header.at("meta");
    m.rows = header.at("arch").at("rows");
    m.cols = header.at("arch").at("cols");
    m.channels = header.at("arch").at("channels");
    std::vector<ParamRef> params;
    m.net->collect_params(params);
    read_params_blob(f, params);
    return m;
}

}  // namespace mvdet
