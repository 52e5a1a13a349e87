#include "mvdet/predictors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mvdet {

namespace {
constexpr double kClamp = 1e-12;
constexpr double kVarFloor = 1e-6;
constexpr double kLog2Pi = 1.8378770664093454836;
}  // namespace

double kl_divergence(const VectorXd& p, const VectorXd& q) {
    check(p.size() == q.size(), "kl_divergence: length mismatch");
    double s = 0.0;
    for (int i = 0; i < p.size(); ++i) {
        if (p(i) <= 0.0) continue;
        s += p(i) * std::log(std::max(p(i), kClamp) / std::max(q(i), kClamp));
    }
    return s;
}

double euclidean_distance(const VectorXd& a, const VectorXd& b) {
    check(a.size() == b.size(), "euclidean_distance: length mismatch");
    return (a - b).norm();
}

// ---------------------------------------------------------------- gmm

double ClassMixture::log_density(const VectorXd& x) const {
    return log_density_grad(x, nullptr);
}

double ClassMixture::log_density_grad(const VectorXd& x, VectorXd* grad) const {
    check(!comps.empty(), "ClassMixture: empty");
    const int J = static_cast<int>(comps.size());
    VectorXd a(J);
    for (int j = 0; j < J; ++j) {
        const auto& c = comps[j];
        double quad = 0.0, logdet = 0.0;
        for (int d = 0; d < c.mean.size(); ++d) {
            const double diff = x(d) - c.mean(d);
            quad += diff * diff / c.var(d);
            logdet += std::log(c.var(d));
        }
        a(j) = std::log(c.weight) - 0.5 * (c.mean.size() * kLog2Pi + logdet + quad);
    }
    const double m = a.maxCoeff();
    const double lse = std::log((a.array() - m).exp().sum()) + m;
    if (grad) {
        grad->setZero(x.size());
        for (int j = 0; j < J; ++j) {
            const double pj = std::exp(a(j) - lse);
            const auto& c = comps[j];
            for (int d = 0; d < x.size(); ++d)
                (*grad)(d) += pj * (-(x(d) - c.mean(d)) / c.var(d));
        }
    }
    return lse;
}

namespace {

// seeded k-means++ then Lloyd; returns assignment centers
std::vector<VectorXd> kmeans(const std::vector<VectorXd>& xs, int k, Rng& rng, int iters = 25) {
    const int n = static_cast<int>(xs.size());
    std::vector<VectorXd> centers;
    centers.push_back(xs[rng.uniform_int(n)]);
    std::vector<double> d2(n, 0.0);
    while (static_cast<int>(centers.size()) < k) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::max();
            for (const auto& c : centers) best = std::min(best, (xs[i] - c).squaredNorm());
            d2[i] = best;
            total += best;
        }
        if (total <= 0.0) {
            centers.push_back(xs[rng.uniform_int(n)]);
            continue;
        }
        double u = rng.uniform() * total, acc = 0.0;
        int pick = n - 1;
        for (int i = 0; i < n; ++i) {
            acc += d2[i];
            if (u < acc) { pick = i; break; }
        }
        centers.push_back(xs[pick]);
    }
    std::vector<int> assign(n, 0);
    for (int it = 0; it < iters; ++it) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double bd = (xs[i] - centers[0]).squaredNorm();
            for (int j = 1; j < k; ++j) {
                const double d = (xs[i] - centers[j]).squaredNorm();
                if (d < bd) { bd = d; best = j; }
            }
            if (assign[i] != best) { assign[i] = best; changed = true; }
        }
        for (int j = 0; j < k; ++j) {
            VectorXd sum = VectorXd::Zero(xs[0].size());
            int cnt = 0;
            for (int i = 0; i < n; ++i)
                if (assign[i] == j) { sum += xs[i]; ++cnt; }
            if (cnt > 0) centers[j] = sum / cnt;
        }
        if (!changed) break;
    }
    return centers;
}

ClassMixture fit_class_em(const std::vector<VectorXd>& xs, int k, Rng& rng, int max_iter,
                          double tol, std::vector<double>* ll_trace) {
    const int n = static_cast<int>(xs.size());
    const int dim = static_cast<int>(xs[0].size());
    auto centers = kmeans(xs, k, rng);

    ClassMixture mix;
    mix.comps.resize(k);
    {
        // moment init per nearest-center cluster
        std::vector<int> cnt(k, 0);
        std::vector<VectorXd> var(k, VectorXd::Zero(dim));
        std::vector<int> assign(n);
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double bd = (xs[i] - centers[0]).squaredNorm();
            for (int j = 1; j < k; ++j) {
                const double d = (xs[i] - centers[j]).squaredNorm();
                if (d < bd) { bd = d; best = j; }
            }
            assign[i] = best;
            ++cnt[best];
        }
        for (int i = 0; i < n; ++i)
            var[assign[i]] += (xs[i] - centers[assign[i]]).array().square().matrix();
        for (int j = 0; j < k; ++j) {
            auto& c = mix.comps[j];
            c.mean = centers[j];
            c.weight = std::max(1, cnt[j]) / static_cast<double>(n);
            c.var = cnt[j] > 1 ? (var[j] / cnt[j]).eval() : VectorXd::Ones(dim);
            for (int d = 0; d < dim; ++d) c.var(d) = std::max(c.var(d), kVarFloor);
        }
        double wsum = 0.0;
        for (auto& c : mix.comps) wsum += c.weight;
        for (auto& c : mix.comps) c.weight /= wsum;
    }

    MatrixXd resp(n, k);
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iter; ++it) {
        // E step
        double ll = 0.0;
        for (int i = 0; i < n; ++i) {
            VectorXd a(k);
            for (int j = 0; j < k; ++j) {
                const auto& c = mix.comps[j];
                double quad = 0.0, logdet = 0.0;
                for (int d = 0; d < dim; ++d) {
                    const double diff = xs[i](d) - c.mean(d);
                    quad += diff * diff / c.var(d);
                    logdet += std::log(c.var(d));
                }
                a(j) = std::log(c.weight) - 0.5 * (dim * kLog2Pi + logdet + quad);
            }
            const double m = a.maxCoeff();
            const double lse = std::log((a.array() - m).exp().sum()) + m;
            ll += lse;
            resp.row(i) = (a.array() - lse).exp();
        }
        ll /= n;
        if (ll_trace) ll_trace->push_back(ll);
        // M step
        for (int j = 0; j < k; ++j) {
            const double nj = resp.col(j).sum();
            auto& c = mix.comps[j];
            c.weight = nj / n;
            if (nj < 1e-10) continue;
            VectorXd mean = VectorXd::Zero(dim);
            for (int i = 0; i < n; ++i) mean += resp(i, j) * xs[i];
            mean /= nj;
            VectorXd var = VectorXd::Zero(dim);
            for (int i = 0; i < n; ++i) var += resp(i, j) * (xs[i] - mean).array().square().matrix();
            var /= nj;
            c.mean = mean;
            for (int d = 0; d < dim; ++d) c.var(d) = std::max(var(d), kVarFloor);
        }
        if (ll - prev_ll < tol && it > 0) break;
        prev_ll = ll;
    }
    return mix;
}

}  // namespace

GmmModel fit_gmm(const std::vector<std::vector<VectorXd>>& reps_by_class, int components,
                 std::uint64_t seed, int max_iter, double tol) {
    check(!reps_by_class.empty(), "fit_gmm: no classes");
    GmmModel gmm;
    gmm.components = components;
    json traces = json::array();
    for (std::size_t cls = 0; cls < reps_by_class.size(); ++cls) {
        const auto& xs = reps_by_class[cls];
        check(static_cast<int>(xs.size()) >= components,
              "fit_gmm: class " + std::to_string(cls) + " has " + std::to_string(xs.size()) +
                  " samples, needs >= " + std::to_string(components));
        if (gmm.dim == 0) gmm.dim = static_cast<int>(xs[0].size());
        Rng rng(derive_seed(seed, 0x93B0'0000ull + cls));
        std::vector<double> trace;
        gmm.per_class.push_back(fit_class_em(xs, components, rng, max_iter, tol, &trace));
        traces.push_back(trace);
    }
    gmm.meta = json{{"components", components}, {"seed", seed}, {"dim", gmm.dim},
                    {"ll_trace", traces}};
    return gmm;
}

void save_gmm(const GmmModel& gmm, const std::string& path) {
    json j;
    j["dim"] = gmm.dim;
    j["components"] = gmm.components;
    j["meta"] = gmm.meta;
    j["classes"] = json::array();
    for (const auto& mix : gmm.per_class) {
        json jm = json::array();
        for (const auto& c : mix.comps) {
            jm.push_back({{"weight", c.weight},
                          {"mean", std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size())},
                          {"var", std::vector<double>(c.var.data(), c.var.data() + c.var.size())}});
        }
        j["classes"].push_back(jm);
    }
    std::ofstream f(path);
    check(f.good(), "save_gmm: cannot write " + path);
    f << j.dump();
}

GmmModel load_gmm(const std::string& path) {
    std::ifstream f(path);
    check(f.good(), "load_gmm: cannot read " + path);
    json j = json::parse(f);
    GmmModel gmm;
    gmm.dim = j.at("dim");
    gmm.components = j.at("components");
    gmm.meta = j.value("meta", json());
    for (const auto& jm : j.at("classes")) {
        ClassMixture mix;
        for (const auto& jc : jm) {
            GaussComponent c;
            c.weight = jc.at("weight");
            auto mv = jc.at("mean").get<std::vector<double>>();
            auto vv = jc.at("var").get<std::vector<double>>();
            c.mean = Eigen::Map<const VectorXd>(mv.data(), mv.size());
            c.var = Eigen::Map<const VectorXd>(vv.data(), vv.size());
            mix.comps.push_back(std::move(c));
        }
        gmm.per_class.push_back(std::move(mix));
    }
    return gmm;
}

// ---------------------------------------------------------------- predictors

double d1_distance(ClassifierModel& classifier, const FlatImage& image, const FlatImage& gstar) {
    return euclidean_distance(classify(classifier, image).representation,
                              classify(classifier, gstar).representation);
}

double d2_from_probs(const VectorXd& fz, const VectorXd& fg1, const VectorXd& fg2,
                     const VectorXd& fg3, const VectorXd& fgstar) {
    return kl_divergence(fz, fg1) + kl_divergence(fz, fg2) + kl_divergence(fz, fg3) +
           kl_divergence(fz, fgstar);
}

double d2_kl_sum(ClassifierModel& classifier, const FlatImage& image, const ViewSet& views) {
    const VectorXd fz = classify(classifier, image).probs;
    return d2_from_probs(fz, classify(classifier, views.g1).probs,
                         classify(classifier, views.g2).probs,
                         classify(classifier, views.g3).probs,
                         classify(classifier, views.gstar).probs);
}

double d3_log_likelihood(GenerativeModel& generator, const FlatImage& image, int label) {
    return conditional_log_likelihood(generator, image, label);
}

double d4_rep_density(const GmmModel& gmm, ClassifierModel& classifier, const FlatImage& image) {
    const auto out = classify(classifier, image);
    check(out.label < static_cast<int>(gmm.per_class.size()), "d4: gmm missing class");
    return gmm.per_class[out.label].log_density(out.representation);
}

FeatureVector extract_features(ClassifierModel& classifier, GenerativeModel& generator,
                               const GmmModel& gmm, const FlatImage& image,
                               std::uint64_t master_seed, ViewSet* views_out) {
    const auto out = classify(classifier, image);
    ViewSet vs = generate_views(generator, image, out.label, master_seed);

    FeatureVector fv;
    fv.label_used = out.label;
    fv.seed = master_seed;
    fv.d1 = euclidean_distance(out.representation, classify(classifier, vs.gstar).representation);
    fv.d2 = d2_from_probs(out.probs, classify(classifier, vs.g1).probs,
                          classify(classifier, vs.g2).probs, classify(classifier, vs.g3).probs,
                          classify(classifier, vs.gstar).probs);
    fv.d3 = conditional_log_likelihood(generator, image, out.label);
    fv.d4 = gmm.per_class[out.label].log_density(out.representation);
    if (views_out) *views_out = std::move(vs);
    return fv;
}

// ---------------------------------------------------------------- store

void save_feature_store(const std::vector<FeatureVector>& rows, const std::string& path) {
    std::ofstream f(path);
    check(f.good(), "save_feature_store: cannot write " + path);
    f << "image_id\tsplit\tattack\td1\td2\td3\td4\tlabel_used\ttrue_label\tseed\n";
    char buf[512];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s\t%s\t%s\t%.17g\t%.17g\t%.17g\t%.17g\t%d\t%d\t%llu\n",
                      r.image_id.c_str(), r.split.c_str(), r.attack_tag.c_str(), r.d1, r.d2, r.d3,
                      r.d4, r.label_used, r.true_label,
                      static_cast<unsigned long long>(r.seed));
        f << buf;
    }
}

std::vector<FeatureVector> load_feature_store(const std::string& path) {
    std::ifstream f(path);
    check(f.good(), "load_feature_store: cannot read " + path);
    std::vector<FeatureVector> rows;
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        FeatureVector r;
        std::string d1, d2, d3, d4, lu, tl, seed;
        std::getline(ss, r.image_id, '\t');
        std::getline(ss, r.split, '\t');
        std::getline(ss, r.attack_tag, '\t');
        std::getline(ss, d1, '\t');
        std::getline(ss, d2, '\t');
        std::getline(ss, d3, '\t');
        std::getline(ss, d4, '\t');
        std::getline(ss, lu, '\t');
        std::getline(ss, tl, '\t');
        std::getline(ss, seed, '\t');
        r.d1 = std::stod(d1);
        r.d2 = std::stod(d2);
        r.d3 = std::stod(d3);
        r.d4 = std::stod(d4);
        r.label_used = std::stoi(lu);
        r.true_label = std::stoi(tl);
        r.seed = std::stoull(seed);
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace mvdet
