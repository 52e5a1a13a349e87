#include "mvdet/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

namespace mvdet {

namespace {
constexpr double kEulerGamma = 0.57721566490153286;
}

// ---------------------------------------------------------------- CART

int DecisionTree::predict(const VectorXd& x) const {
    int i = 0;
    while (nodes[i].feature >= 0)
        i = x(nodes[i].feature) <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
    return nodes[i].leaf_class;
}

double RandomForest::benign_vote_fraction(const VectorXd& x) const {
    check(!trees.empty(), "RandomForest: not trained");
    int benign = 0;
    for (const auto& t : trees)
        if (t.predict(x) == 0) ++benign;
    return static_cast<double>(benign) / trees.size();
}

namespace {

struct CartBuilder {
    const std::vector<VectorXd>& xs;
    const std::vector<int>& ys;
    int dim;
    int mtry;
    Rng& rng;
    DecisionTree tree;
    static constexpr int kMaxDepth = 24;

    int majority(const std::vector<int>& idx) const {
        int c1 = 0;
        for (int i : idx) c1 += ys[i];
        const int c0 = static_cast<int>(idx.size()) - c1;
        return c1 > c0 ? 1 : 0;  // benign on ties
    }

    static double gini(int n0, int n1) {
        const double n = n0 + n1;
        if (n == 0) return 0.0;
        const double p0 = n0 / n, p1 = n1 / n;
        return 1.0 - p0 * p0 - p1 * p1;
    }

    int build(std::vector<int>& idx, int depth) {
        const int node_id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();

        int pos = 0;
        for (int i : idx) pos += ys[i];
        if (pos == 0 || pos == static_cast<int>(idx.size()) || idx.size() < 2 ||
            depth >= kMaxDepth) {
            tree.nodes[node_id].leaf_class = majority(idx);
            return node_id;
        }

        // feature subsample without replacement
        std::vector<int> feats(dim);
        for (int f = 0; f < dim; ++f) feats[f] = f;
        rng.shuffle(feats);
        feats.resize(mtry);

        double best_score = std::numeric_limits<double>::max();
        int best_f = -1;
        double best_thr = 0.0;
        for (int f : feats) {
            std::vector<double> vals;
            vals.reserve(idx.size());
            for (int i : idx) vals.push_back(xs[i](f));
            std::sort(vals.begin(), vals.end());
            vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
            if (vals.size() < 2) continue;
            for (std::size_t v = 0; v + 1 < vals.size(); ++v) {
                const double thr = 0.5 * (vals[v] + vals[v + 1]);
                int l0 = 0, l1 = 0, r0 = 0, r1 = 0;
                for (int i : idx) {
                    if (xs[i](f) <= thr)
                        ys[i] ? ++l1 : ++l0;
                    else
                        ys[i] ? ++r1 : ++r0;
                }
                const double nl = l0 + l1, nr = r0 + r1;
                const double score = (nl * gini(l0, l1) + nr * gini(r0, r1)) / (nl + nr);
                if (score < best_score - 1e-15) {
                    best_score = score;
                    best_f = f;
                    best_thr = thr;
                }
            }
        }
        if (best_f < 0) {
            tree.nodes[node_id].leaf_class = majority(idx);
            return node_id;
        }

        std::vector<int> left, right;
        for (int i : idx)
            (xs[i](best_f) <= best_thr ? left : right).push_back(i);
        tree.nodes[node_id].feature = best_f;
        tree.nodes[node_id].threshold = best_thr;
        const int l = build(left, depth + 1);
        const int r = build(right, depth + 1);
        tree.nodes[node_id].left = l;
        tree.nodes[node_id].right = r;
        return node_id;
    }
};

}  // namespace

RandomForest train_rf(const std::vector<VectorXd>& benign, const std::vector<VectorXd>& adversarial,
                      int n_trees, std::uint64_t seed) {
    check(!benign.empty() && !adversarial.empty(), "train_rf: both classes must be non-empty");
    check(n_trees >= 1, "train_rf: need K >= 1 trees");

    std::vector<VectorXd> xs;
    std::vector<int> ys;
    for (const auto& v : benign) { xs.push_back(v); ys.push_back(0); }
    for (const auto& v : adversarial) { xs.push_back(v); ys.push_back(1); }

    RandomForest rf;
    rf.dim = static_cast<int>(xs[0].size());
    const int mtry = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(rf.dim))));
    const int n = static_cast<int>(xs.size());
    for (int t = 0; t < n_trees; ++t) {
        Rng rng(derive_seed(seed, 0x3F00'0000ull + t));
        std::vector<int> boot(n);
        for (int i = 0; i < n; ++i) boot[i] = static_cast<int>(rng.uniform_int(n));
        CartBuilder builder{xs, ys, rf.dim, mtry, rng, {}};
        builder.build(boot, 0);
        rf.trees.push_back(std::move(builder.tree));
    }
    return rf;
}

// ---------------------------------------------------------------- iforest

double iforest_c_factor(int n) {
    if (n <= 1) return 0.0;
    const double h = std::log(static_cast<double>(n - 1)) + kEulerGamma;
    return 2.0 * h - 2.0 * (n - 1.0) / n;
}

double anomaly_score_from_path(double mean_path, int psi) {
    return std::pow(2.0, -mean_path / iforest_c_factor(psi));
}

double IsoTree::path_length(const VectorXd& x) const {
    int i = 0;
    double depth = 0.0;
    while (nodes[i].feature >= 0) {
        i = x(nodes[i].feature) <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
        depth += 1.0;
    }
    return depth + iforest_c_factor(nodes[i].size);
}

double IsolationForest::mean_path_length(const VectorXd& x) const {
    check(!trees.empty(), "IsolationForest: not trained");
    double total = 0.0;
    for (const auto& t : trees) total += t.path_length(x);
    return total / trees.size();
}

double IsolationForest::score(const VectorXd& x) const {
    return anomaly_score_from_path(mean_path_length(x), psi);
}

namespace {

struct IsoBuilder {
    const std::vector<VectorXd>& xs;
    int dim;
    int height_limit;
    Rng& rng;
    IsoTree tree;

    int build(std::vector<int>& idx, int depth) {
        const int node_id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        if (static_cast<int>(idx.size()) <= 1 || depth >= height_limit) {
            tree.nodes[node_id].size = static_cast<int>(idx.size());
            return node_id;
        }
        // pick among features that still vary
        std::vector<int> feats;
        for (int f = 0; f < dim; ++f) {
            double lo = xs[idx[0]](f), hi = lo;
            for (int i : idx) {
                lo = std::min(lo, xs[i](f));
                hi = std::max(hi, xs[i](f));
            }
            if (hi > lo) feats.push_back(f);
        }
        if (feats.empty()) {
            tree.nodes[node_id].size = static_cast<int>(idx.size());
            return node_id;
        }
        const int f = feats[rng.uniform_int(feats.size())];
        double lo = xs[idx[0]](f), hi = lo;
        for (int i : idx) {
            lo = std::min(lo, xs[i](f));
            hi = std::max(hi, xs[i](f));
        }
        const double thr = rng.uniform_range(lo, hi);
        std::vector<int> left, right;
        for (int i : idx)
            (xs[i](f) <= thr ? left : right).push_back(i);
        if (left.empty() || right.empty()) {
            tree.nodes[node_id].size = static_cast<int>(idx.size());
            return node_id;
        }
        tree.nodes[node_id].feature = f;
        tree.nodes[node_id].threshold = thr;
        const int l = build(left, depth + 1);
        const int r = build(right, depth + 1);
        tree.nodes[node_id].left = l;
        tree.nodes[node_id].right = r;
        return node_id;
    }
};

}  // namespace

IsolationForest train_if(const std::vector<VectorXd>& benign, int n_trees, int psi,
                         std::uint64_t seed) {
    check(!benign.empty(), "train_if: empty benign set");
    IsolationForest iforest;
    iforest.dim = static_cast<int>(benign[0].size());
    iforest.psi = std::min<int>(psi, benign.size());
    const int height_limit = static_cast<int>(std::ceil(std::log2(std::max(2, iforest.psi))));
    const int n = static_cast<int>(benign.size());
    for (int t = 0; t < n_trees; ++t) {
        Rng rng(derive_seed(seed, 0x1F00'0000ull + t));
        // subsample without replacement
        std::vector<int> perm(n);
        for (int i = 0; i < n; ++i) perm[i] = i;
        rng.shuffle(perm);
        std::vector<int> idx(perm.begin(), perm.begin() + iforest.psi);
        IsoBuilder builder{benign, iforest.dim, height_limit, rng, {}};
        builder.build(idx, 0);
        iforest.trees.push_back(std::move(builder.tree));
    }
    return iforest;
}

// ---------------------------------------------------------------- hybrid

VectorXd HybridDetector::project(const FeatureVector& fv) const {
    const Eigen::Vector4d full = fv.as_vec();
    VectorXd x(static_cast<int>(config.feature_mask.size()));
    for (std::size_t i = 0; i < config.feature_mask.size(); ++i) {
        const int f = config.feature_mask[i];
        x(static_cast<int>(i)) = (full(f) - std_mean(static_cast<int>(i))) / std_std(static_cast<int>(i));
    }
    return x;
}

double HybridDetector::p_rf(const FeatureVector& fv) const {
    return rf.benign_vote_fraction(project(fv));
}

double HybridDetector::p_if(const FeatureVector& fv) const {
    const double raw = iforest.score(project(fv));
    return config.pif_raw_score ? raw : 1.0 - raw;
}

double HybridDetector::combined_score(const FeatureVector& fv) const {
    return p_rf(fv) + p_if(fv);
}

int HybridDetector::decide(const FeatureVector& fv) const {
    check(std::isfinite(tau), "HybridDetector::decide: tau not calibrated");
    return combined_score(fv) > tau ? 0 : 1;
}

double calibrate_tau(const std::vector<double>& benign_scores, double tnr_target) {
    check(benign_scores.size() >= 100, "calibrate_tau: need >= 100 benign validation points, got " +
                                           std::to_string(benign_scores.size()));
    check(tnr_target > 0.0 && tnr_target <= 1.0, "calibrate_tau: tnr_target out of (0,1]");
    std::vector<double> s = benign_scores;
    std::sort(s.begin(), s.end());
    const int n = static_cast<int>(s.size());
    const int keep_above = static_cast<int>(std::ceil(tnr_target * n - 1e-9));
    const int m = n - keep_above;  // points allowed at or below tau
    if (m <= 0) return s.front() - 1.0;
    return s[m - 1];
}

HybridDetector train_detector(const std::vector<FeatureVector>& benign,
                              const std::vector<FeatureVector>& adversarial,
                              const DetectorConfig& config) {
    check(!benign.empty(), "train_detector: empty benign set");
    check(!adversarial.empty(), "train_detector: empty adversarial set");
    check(!config.feature_mask.empty(), "train_detector: empty feature mask");

    HybridDetector det;
    det.config = config;

    const int d = static_cast<int>(config.feature_mask.size());
    det.std_mean = VectorXd::Zero(d);
    det.std_std = VectorXd::Ones(d);
    // z-scoring parameters come from the benign calibration features
    for (int i = 0; i < d; ++i) {
        const int f = config.feature_mask[i];
        double mean = 0.0;
        for (const auto& fv : benign) mean += fv.as_vec()(f);
        mean /= benign.size();
        double var = 0.0;
        for (const auto& fv : benign) {
            const double x = fv.as_vec()(f) - mean;
            var += x * x;
        }
        var /= benign.size();
        det.std_mean(i) = mean;
        det.std_std(i) = std::sqrt(std::max(var, 1e-24));
    }

    std::vector<VectorXd> xb, xa;
    for (const auto& fv : benign) xb.push_back(det.project(fv));
    for (const auto& fv : adversarial) xa.push_back(det.project(fv));

    det.rf = train_rf(xb, xa, config.rf_trees, derive_seed(config.seed, 0xAF5EEDull));
    det.iforest = train_if(xb, config.if_trees, config.if_psi, derive_seed(config.seed, 0x1F5EEDull));

    std::vector<double> cal_scores;
    for (const auto& fv : benign) cal_scores.push_back(det.combined_score(fv));
    det.tau = calibrate_tau(cal_scores, config.tnr_target);

    std::map<std::string, int> adv_sources;
    for (const auto& fv : adversarial) adv_sources[fv.attack_tag]++;
    det.manifest = json{{"rf_trees", config.rf_trees},
                        {"if_trees", config.if_trees},
                        {"if_psi", config.if_psi},
                        {"tnr_target", config.tnr_target},
                        {"seed", config.seed},
                        {"feature_mask", config.feature_mask},
                        {"pif_raw_score", config.pif_raw_score},
                        {"benign_count", benign.size()},
                        {"adversarial_sources", adv_sources},
                        {"tau", det.tau}};
    return det;
}

// ---------------------------------------------------------------- bundle io

namespace {

json tree_to_json(const DecisionTree& t) {
    json nodes = json::array();
    for (const auto& n : t.nodes)
        nodes.push_back({n.feature, n.threshold, n.left, n.right, n.leaf_class});
    return nodes;
}

DecisionTree tree_from_json(const json& j) {
    DecisionTree t;
    for (const auto& n : j)
        t.nodes.push_back({n[0].get<int>(), n[1].get<double>(), n[2].get<int>(), n[3].get<int>(),
                           n[4].get<int>()});
    return t;
}

json isotree_to_json(const IsoTree& t) {
    json nodes = json::array();
    for (const auto& n : t.nodes)
        nodes.push_back({n.feature, n.threshold, n.left, n.right, n.size});
    return nodes;
}

IsoTree isotree_from_json(const json& j) {
    IsoTree t;
    for (const auto& n : j)
        t.nodes.push_back({n[0].get<int>(), n[1].get<double>(), n[2].get<int>(), n[3].get<int>(),
                           n[4].get<int>()});
    return t;
}

}  // namespace

void save_detector(const HybridDetector& det, const std::string& path) {
    json j;
    j["tau"] = det.tau;
    j["std_mean"] = std::vector<double>(det.std_mean.data(), det.std_mean.data() + det.std_mean.size());
    j["std_std"] = std::vector<double>(det.std_std.data(), det.std_std.data() + det.std_std.size());
    j["manifest"] = det.manifest;
    j["config"] = {{"rf_trees", det.config.rf_trees},
                   {"if_trees", det.config.if_trees},
                   {"if_psi", det.config.if_psi},
                   {"tnr_target", det.config.tnr_target},
                   {"feature_mask", det.config.feature_mask},
                   {"pif_raw_score", det.config.pif_raw_score},
                   {"seed", det.config.seed}};
    j["rf"] = {{"dim", det.rf.dim}};
    j["rf"]["trees"] = json::array();
    for (const auto& t : det.rf.trees) j["rf"]["trees"].push_back(tree_to_json(t));
    j["iforest"] = {{"dim", det.iforest.dim}, {"psi", det.iforest.psi}};
    j["iforest"]["trees"] = json::array();
    for (const auto& t : det.iforest.trees) j["iforest"]["trees"].push_back(isotree_to_json(t));

    std::ofstream f(path);
    check(f.good(), "save_detector: cannot write " + path);
    f << j.dump();
}

HybridDetector load_detector(const std::string& path) {
    std::ifstream f(path);
    check(f.good(), "load_detector: cannot read " + path);
    json j = json::parse(f);
    HybridDetector det;
    det.tau = j.at("tau");
    auto mv = j.at("std_mean").get<std::vector<double>>();
    auto sv = j.at("std_std").get<std::vector<double>>();
    det.std_mean = Eigen::Map<const VectorXd>(mv.data(), mv.size());
    det.std_std = Eigen::Map<const VectorXd>(sv.data(), sv.size());
    det.manifest = j.value("manifest", json());
    const auto& jc = j.at("config");
    det.config.rf_trees = jc.at("rf_trees");
    det.config.if_trees = jc.at("if_trees");
    det.config.if_psi = jc.at("if_psi");
    det.config.tnr_target = jc.at("tnr_target");
    det.config.feature_mask = jc.at("feature_mask").get<std::vector<int>>();
    det.config.pif_raw_score = jc.at("pif_raw_score");
    det.config.seed = jc.at("seed");
    det.rf.dim = j.at("rf").at("dim");
    for (const auto& t : j.at("rf").at("trees")) det.rf.trees.push_back(tree_from_json(t));
    det.iforest.dim = j.at("iforest").at("dim");
    det.iforest.psi = j.at("iforest").at("psi");
    for (const auto& t : j.at("iforest").at("trees")) det.iforest.trees.push_back(isotree_from_json(t));
    return det;
}

}  // namespace mvdet
