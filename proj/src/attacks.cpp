#include "mvdet/attacks.hpp"

#include <cmath>
#include <sstream>

namespace mvdet {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void clip_ball_and_range(std::vector<double>& x, const std::vector<double>& x0, double eps01) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = std::min(x[i], x0[i] + eps01);
        x[i] = std::max(x[i], x0[i] - eps01);
        x[i] = std::min(1.0, std::max(0.0, x[i]));
    }
}

double step_size01(const AttackSpec& spec) {
    const double alpha_px = spec.alpha > 0.0 ? spec.alpha : spec.epsilon / spec.iterations;
    return alpha_px / 255.0;
}

}  // namespace

AttackFamily attack_family_from_string(const std::string& s) {
    if (s == "fgsm") return AttackFamily::fgsm;
    if (s == "pgd") return AttackFamily::pgd;
    if (s == "mim") return AttackFamily::mim;
    if (s == "deepfool") return AttackFamily::deepfool;
    if (s == "cw") return AttackFamily::cw;
    if (s == "whitebox" || s == "wb") return AttackFamily::whitebox;
    check(false, "unknown attack family '" + s + "'");
    return AttackFamily::fgsm;
}

std::string attack_family_name(AttackFamily f) {
    switch (f) {
        case AttackFamily::fgsm: return "fgsm";
        case AttackFamily::pgd: return "pgd";
        case AttackFamily::mim: return "mim";
        case AttackFamily::deepfool: return "deepfool";
        case AttackFamily::cw: return "cw";
        case AttackFamily::whitebox: return "whitebox";
    }
    return "?";
}

std::string AttackSpec::tag() const {
    std::ostringstream ss;
    ss << attack_family_name(family);
    if (family == AttackFamily::fgsm || family == AttackFamily::pgd || family == AttackFamily::mim ||
        family == AttackFamily::whitebox)
        ss << "-" << epsilon;
    if (family == AttackFamily::cw) ss << "-" << confidence;
    return ss.str();
}

// ---------------------------------------------------------------- L-inf

std::vector<double> fgsm_unit(ClassifierModel& model, const std::vector<double>& x0, int label,
                              const AttackSpec& spec) {
    const double eps01 = spec.epsilon / 255.0;
    auto g = loss_gradient(model, x0, label);
    std::vector<double> x = x0;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += eps01 * sign(g[i]);
    clip_ball_and_range(x, x0, eps01);
    return x;
}

std::vector<double> pgd_unit(ClassifierModel& model, const std::vector<double>& x0, int label,
                             const AttackSpec& spec, std::vector<std::vector<double>>* trajectory) {
    check(spec.iterations >= 1, "pgd: T >= 1 required");
    const double eps01 = spec.epsilon / 255.0;
    const double a01 = step_size01(spec);
    std::vector<double> x = x0;  // starts from the clean image
    for (int t = 0; t < spec.iterations; ++t) {
        auto g = loss_gradient(model, x, label);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += a01 * sign(g[i]);
        clip_ball_and_range(x, x0, eps01);
        if (trajectory) trajectory->push_back(x);
    }
    return x;
}

std::vector<double> mim_unit(ClassifierModel& model, const std::vector<double>& x0, int label,
                             const AttackSpec& spec, std::vector<std::vector<double>>* trajectory) {
    check(spec.iterations >= 1, "mim: T >= 1 required");
    const double eps01 = spec.epsilon / 255.0;
    const double a01 = step_size01(spec);
    std::vector<double> x = x0;
    std::vector<double> g_acc(x.size(), 0.0);  // g^0 = 0
    for (int t = 0; t < spec.iterations; ++t) {
        auto g = loss_gradient(model, x, label);
        double l1 = 0.0;
        for (double v : g) l1 += std::abs(v);
        if (l1 > 0.0) {
            for (std::size_t i = 0; i < x.size(); ++i) {
                if (spec.mim_decay) g_acc[i] *= spec.mim_mu;
                g_acc[i] += g[i] / l1;
            }
        }
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += a01 * sign(g_acc[i]);
        clip_ball_and_range(x, x0, eps01);
        if (trajectory) trajectory->push_back(x);
    }
    return x;
}

// ---------------------------------------------------------------- deepfool

std::vector<double> deepfool_unit(ClassifierModel& model, const std::vector<double>& x0,
                                  const AttackSpec& spec, bool* flipped) {
    const int C = model.class_count();
    const int n = static_cast<int>(x0.size());
    const int k0 = argmax_lowest(logits_unit(model, x0));

    std::vector<double> x = x0;
    VectorXd r_total = VectorXd::Zero(n);
    bool flip = false;
    for (int it = 0; it < spec.deepfool_max_iters; ++it) {
        VectorXd logits = logits_unit(model, x);
        if (argmax_lowest(logits) != k0) {
            flip = true;
            break;
        }
        // gradients of every class logit at the current point
        std::vector<VectorXd> grads(C);
        for (int k = 0; k < C; ++k) {
            VectorXd dl = VectorXd::Zero(C);
            dl(k) = 1.0;
            auto g = input_gradient(model, x, dl);
            grads[k] = Eigen::Map<const VectorXd>(g.data(), n);
        }
        // closest hyperplane across the other classes
        int best_k = -1;
        double best_ratio = std::numeric_limits<double>::max();
        for (int k = 0; k < C; ++k) {
            if (k == k0) continue;
            const VectorXd w = grads[k] - grads[k0];
            const double wn = w.norm();
            if (wn < 1e-12) continue;
            const double ratio = std::abs(logits(k) - logits(k0)) / wn;
            if (ratio < best_ratio) {
                best_ratio = ratio;
                best_k = k;
            }
        }
        if (best_k < 0) break;
        const VectorXd w = grads[best_k] - grads[k0];
        const double f = logits(best_k) - logits(k0);
        const VectorXd r = (std::abs(f) / w.squaredNorm()) * w;
        if (r.norm() < 1e-12) break;
        r_total += r;
        for (int i = 0; i < n; ++i) x[i] = x0[i] + r_total(i);
    }
    // overshoot pushes past the linearized boundary; the projection itself is
    // left unboxed (quantization clamps when a record is produced)
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = x0[i] + (1.0 + spec.overshoot) * r_total(i);
    if (flipped) {
        *flipped = flip || argmax_lowest(logits_unit(model, out)) != k0;
    }
    return out;
}

// ---------------------------------------------------------------- C&W

double cw_objective(const VectorXd& logits, int target, double k) {
    double other = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < logits.size(); ++i)
        if (i != target) other = std::max(other, logits(i));
    return std::max(other - logits(target), -k);
}

std::vector<double> cw_unit(ClassifierModel& model, const std::vector<double>& x0, int label,
                            const AttackSpec& spec, bool* hit_target) {
    const int n = static_cast<int>(x0.size());
    const int C = model.class_count();

    // target: the most probable non-true class of the clean input
    VectorXd z0 = logits_unit(model, x0);
    int target = -1;
    for (int i = 0; i < C; ++i)
        if (i != label && (target < 0 || z0(i) > z0(target))) target = i;

    // tanh change of variables keeps the box constraint implicit
    auto to_w = [](double v) {
        const double c = std::min(1.0 - 1e-6, std::max(1e-6 - 1.0, 2.0 * v - 1.0));
        return std::atanh(c);
    };
    std::vector<double> w0(n);
    for (int i = 0; i < n; ++i) w0[i] = to_w(x0[i]);

    std::vector<double> best_x;
    double best_l2 = std::numeric_limits<double>::max();

    double c_lo = 0.0, c_hi = -1.0;  // hi < 0 means unbounded yet
    double c = spec.cw_initial_c;
    for (int bs = 0; bs < spec.cw_binary_steps; ++bs) {
        std::vector<double> w = w0;
        std::vector<double> m(n, 0.0), v(n, 0.0);
        bool found = false;
        for (int it = 0; it < spec.cw_iters; ++it) {
            std::vector<double> x(n);
            std::vector<double> dxdw(n);
            for (int i = 0; i < n; ++i) {
                const double th = std::tanh(w[i]);
                x[i] = 0.5 * (th + 1.0);
                dxdw[i] = 0.5 * (1.0 - th * th);
            }
            VectorXd z = logits_unit(model, x);
            const double f = cw_objective(z, target, spec.confidence);
            // a hit needs the full confidence margin, not a marginal argmax
            // flip, or quantization on the 255 grid would undo it
            if (argmax_lowest(z) == target && f <= -spec.confidence + 1e-12) {
                double l2 = 0.0;
                for (int i = 0; i < n; ++i) l2 += (x[i] - x0[i]) * (x[i] - x0[i]);
                l2 = std::sqrt(l2);
                if (l2 < best_l2) {
                    best_l2 = l2;
                    best_x = x;
                }
                found = true;
            }
            // d/dx [ ||x-x0||^2 + c*f ]
            std::vector<double> gx(n);
            for (int i = 0; i < n; ++i) gx[i] = 2.0 * (x[i] - x0[i]);
            if (f > -spec.confidence) {
                int other = -1;
                for (int i = 0; i < C; ++i)
                    if (i != target && (other < 0 || z(i) > z(other))) other = i;
                VectorXd dl = VectorXd::Zero(C);
                dl(other) = c;
                dl(target) = -c;
                auto gf = input_gradient(model, x, dl);
                for (int i = 0; i < n; ++i) gx[i] += gf[i];
            }
            // Adam in w-space
            const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
            const double bc1 = 1.0 - std::pow(b1, it + 1), bc2 = 1.0 - std::pow(b2, it + 1);
            for (int i = 0; i < n; ++i) {
                const double g = gx[i] * dxdw[i];
                m[i] = b1 * m[i] + (1 - b1) * g;
                v[i] = b2 * v[i] + (1 - b2) * g * g;
                w[i] -= spec.cw_lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
            }
        }
        if (found) {
            c_hi = c;
            c = 0.5 * (c_lo + c_hi);
        } else {
            c_lo = c;
            c = c_hi < 0.0 ? c * 10.0 : 0.5 * (c_lo + c_hi);
        }
    }
    if (hit_target) *hit_target = !best_x.empty();
    return best_x.empty() ? x0 : best_x;
}

// ---------------------------------------------------------------- white-box

std::vector<double> whitebox_unit(ClassifierModel& model, GenerativeModel& generator,
                                  const GmmModel& gmm, const WhiteboxContext& ctx,
                                  const std::vector<double>& x0, int label, const AttackSpec& spec,
                                  std::vector<std::vector<double>>* trajectory) {
    check(spec.iterations >= 1, "whitebox: T >= 1 required");
    const double eps01 = spec.epsilon / 255.0;
    const double a01 = step_size01(spec);
    const int C = model.class_count();
    const int n = static_cast<int>(x0.size());

    std::vector<double> x = x0;
    for (int t = 0; t < spec.iterations; ++t) {
        // term 1: cross-entropy w.r.t. the true label (ascent = untargeted)
        auto g = loss_gradient(model, x, label);

        if (spec.alpha_wb != 0.0) {
            // max over k != true of log P(x | y_k); the Reject_1 product keeps
            // the term active only while every other class is still below its
            // benign 5th percentile
            int best_k = -1;
            double best_ll = -std::numeric_limits<double>::infinity();
            bool all_rejected = true;
            for (int k = 0; k < C; ++k) {
                if (k == label) continue;
                const double ll = generator.log_likelihood_unit(x, k, nullptr);
                if (ll >= ctx.loglik_q5[k]) all_rejected = false;
                if (ll > best_ll) {
                    best_ll = ll;
                    best_k = k;
                }
            }
            if (all_rejected && best_k >= 0) {
                std::vector<double> gll;
                generator.log_likelihood_unit(x, best_k, &gll);
                for (int i = 0; i < n; ++i) g[i] += spec.alpha_wb * gll[i];
            }
        }

        if (spec.beta_wb != 0.0) {
            // same structure for the representation density P(h(x) | y_k)
            const auto out = classify_unit(model, x);
            int best_k = -1;
            double best_d = -std::numeric_limits<double>::infinity();
            bool all_rejected = true;
            VectorXd best_grad_h;
            for (int k = 0; k < C; ++k) {
                if (k == label) continue;
                VectorXd gh;
                const double d = gmm.per_class[k].log_density_grad(out.representation, &gh);
                if (d >= ctx.repdens_q5[k]) all_rejected = false;
                if (d > best_d) {
                    best_d = d;
                    best_k = k;
                    best_grad_h = gh;
                }
            }
            if (all_rejected && best_k >= 0) {
                auto gr = representation_gradient(model, x, best_grad_h);
                for (int i = 0; i < n; ++i) g[i] += spec.beta_wb * gr[i];
            }
        }

        for (int i = 0; i < n; ++i) x[i] += a01 * sign(g[i]);
        clip_ball_and_range(x, x0, eps01);
        if (trajectory) trajectory->push_back(x);
    }
    return x;
}

// ---------------------------------------------------------------- wrappers

namespace {

AdversarialRecord make_record(ClassifierModel& model, const AttackSpec& spec,
                              const FlatImage& image, int true_label,
                              const std::vector<double>& x_adv) {
    AdversarialRecord rec;
    rec.original = image;
    rec.true_label = true_label;
    rec.attack_tag = spec.tag();
    rec.perturbed = from_unit(x_adv, image.rows, image.cols, image.channels);

    const bool linf_family = spec.family == AttackFamily::fgsm || spec.family == AttackFamily::pgd ||
                             spec.family == AttackFamily::mim ||
                             spec.family == AttackFamily::whitebox;
    if (linf_family) {
        // rounding cannot push past an integer budget, but the invariant is
        // re-asserted in integer space to keep the archive trustworthy
        const int eps_px = static_cast<int>(std::floor(spec.epsilon));
        for (std::size_t i = 0; i < rec.perturbed.pixels.size(); ++i) {
            const int lo = std::max(0, image.pixels[i] - eps_px);
            const int hi = std::min(255, image.pixels[i] + eps_px);
            rec.perturbed.pixels[i] =
                static_cast<std::uint8_t>(std::min(hi, std::max(lo, static_cast<int>(rec.perturbed.pixels[i]))));
        }
    }

    double linf = 0.0, l2 = 0.0;
    for (std::size_t i = 0; i < rec.perturbed.pixels.size(); ++i) {
        const double d = static_cast<double>(rec.perturbed.pixels[i]) - image.pixels[i];
        linf = std::max(linf, std::abs(d));
        l2 += d * d;
    }
    rec.linf = linf;
    rec.l2 = std::sqrt(l2);

    rec.pred_original = classify(model, rec.original).label;
    rec.pred_perturbed = classify(model, rec.perturbed).label;
    rec.success = rec.pred_original == true_label && rec.pred_perturbed != true_label;
    return rec;
}

}  // namespace

AdversarialRecord run_attack(ClassifierModel& model, const AttackSpec& spec, const FlatImage& image,
                             int true_label, GenerativeModel* generator, const GmmModel* gmm,
                             const WhiteboxContext* ctx) {
    const auto x0 = to_unit(image);
    std::vector<double> x_adv;
    switch (spec.family) {
        case AttackFamily::fgsm: x_adv = fgsm_unit(model, x0, true_label, spec); break;
        case AttackFamily::pgd: x_adv = pgd_unit(model, x0, true_label, spec); break;
        case AttackFamily::mim: x_adv = mim_unit(model, x0, true_label, spec); break;
        case AttackFamily::deepfool: x_adv = deepfool_unit(model, x0, spec); break;
        case AttackFamily::cw: x_adv = cw_unit(model, x0, true_label, spec); break;
        case AttackFamily::whitebox:
            check(generator && gmm && ctx, "whitebox attack needs generator, gmm and thresholds");
            x_adv = whitebox_unit(model, *generator, *gmm, *ctx, x0, true_label, spec);
            break;
    }
    return make_record(model, spec, image, true_label, x_adv);
}

bool is_successful(ClassifierModel& model, const AdversarialRecord& record) {
    const int pred_orig = classify(model, record.original).label;
    if (pred_orig != record.true_label) return false;  // misclassified before the attack
    return classify(model, record.perturbed).label != record.true_label;
}

}  // namespace mvdet
