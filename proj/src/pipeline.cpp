#include "mvdet/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mvdet/plot.hpp"
#include "mvdet/png_io.hpp"

namespace fs = std::filesystem;

namespace mvdet {

namespace {

std::string sanitize_id(const std::string& id) {
    std::string out = id;
    for (auto& c : out)
        if (c == '/' || c == '\\' || c == ' ') c = '_';
    return out;
}

}  // namespace

// ---------------------------------------------------------------- attacks

AttackBatchResult attack_batch(ClassifierModel& model, const AttackSpec& spec,
                               const std::vector<LabeledSample>& samples,
                               GenerativeModel* generator, const GmmModel* gmm,
                               const WhiteboxContext* ctx, bool verbose) {
    AttackBatchResult out;
    int done = 0;
    for (const auto& s : samples) {
        if (classify(model, s.image).label != s.label) {
            ++out.skipped_misclassified;
            continue;
        }
        auto rec = run_attack(model, spec, s.image, s.label, generator, gmm, ctx);
        rec.image_id = s.id;
        ++out.attempted;
        if (rec.success) ++out.successes;
        out.records.push_back(std::move(rec));
        if (verbose && ++done % 50 == 0)
            std::printf("[attack %s] %d sources done, %d successes\n", spec.tag().c_str(), done,
                        out.successes);
    }
    out.success_rate = out.attempted > 0 ? static_cast<double>(out.successes) / out.attempted : 0.0;
    if (verbose)
        std::printf("[attack %s] success rate %.3f (%d/%d, %d skipped as misclassified)\n",
                    spec.tag().c_str(), out.success_rate, out.successes, out.attempted,
                    out.skipped_misclassified);
    return out;
}

void save_adversarial_archive(const AttackBatchResult& batch, const std::string& dir) {
    fs::create_directories(dir);
    std::ofstream mf(dir + "/manifest.tsv");
    check(mf.good(), "save_adversarial_archive: cannot write manifest in " + dir);
    mf << "image_id\ttrue_label\tpred_original\tpred_perturbed\tsuccess\tlinf\tl2\tattack\tfile\n";
    char buf[512];
    for (const auto& r : batch.records) {
        const std::string file = sanitize_id(r.image_id) + ".png";
        write_png(dir + "/" + file, r.perturbed);
        write_png(dir + "/orig_" + file, r.original);
        std::snprintf(buf, sizeof(buf), "%s\t%d\t%d\t%d\t%d\t%.17g\t%.17g\t%s\t%s\n",
                      r.image_id.c_str(), r.true_label, r.pred_original, r.pred_perturbed,
                      r.success ? 1 : 0, r.linf, r.l2, r.attack_tag.c_str(), file.c_str());
        mf << buf;
    }
    json stats{{"attempted", batch.attempted},
               {"successes", batch.successes},
               {"skipped_misclassified", batch.skipped_misclassified},
               {"success_rate", batch.success_rate}};
    std::ofstream sf(dir + "/stats.json");
    sf << stats.dump(2);
}

AttackBatchResult load_adversarial_archive(const std::string& dir) {
    std::ifstream mf(dir + "/manifest.tsv");
    check(mf.good(), "load_adversarial_archive: cannot read manifest in " + dir);
    AttackBatchResult out;
    std::string line;
    std::getline(mf, line);
    while (std::getline(mf, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        AdversarialRecord r;
        std::string tl, po, pp, succ, linf, l2, file;
        std::getline(ss, r.image_id, '\t');
        std::getline(ss, tl, '\t');
        std::getline(ss, po, '\t');
        std::getline(ss, pp, '\t');
        std::getline(ss, succ, '\t');
        std::getline(ss, linf, '\t');
        std::getline(ss, l2, '\t');
        std::getline(ss, r.attack_tag, '\t');
        std::getline(ss, file, '\t');
        r.true_label = std::stoi(tl);
        r.pred_original = std::stoi(po);
        r.pred_perturbed = std::stoi(pp);
        r.success = succ == "1";
        r.linf = std::stod(linf);
        r.l2 = std::stod(l2);
        r.perturbed = read_png(dir + "/" + file);
        r.original = read_png(dir + "/orig_" + file);
        out.records.push_back(std::move(r));
    }
    std::ifstream sf(dir + "/stats.json");
    if (sf.good()) {
        json stats = json::parse(sf);
        out.attempted = stats.value("attempted", 0);
        out.successes = stats.value("successes", 0);
        out.skipped_misclassified = stats.value("skipped_misclassified", 0);
        out.success_rate = stats.value("success_rate", 0.0);
    }
    return out;
}

// ---------------------------------------------------------------- features

std::vector<FeatureWorkItem> items_from_samples(const std::vector<LabeledSample>& samples,
                                                const std::string& split) {
    std::vector<FeatureWorkItem> items;
    items.reserve(samples.size());
    for (const auto& s : samples)
        items.push_back({s.image, s.id, s.label, "benign", split});
    return items;
}

std::vector<FeatureWorkItem> items_from_records(const std::vector<AdversarialRecord>& records,
                                                const std::string& split) {
    std::vector<FeatureWorkItem> items;
    items.reserve(records.size());
    for (const auto& r : records)
        items.push_back({r.perturbed, r.image_id, r.true_label, r.attack_tag, split});
    return items;
}

std::vector<FeatureVector> extract_features_batch(ClassifierModel& classifier,
                                                  GenerativeModel& generator, const GmmModel& gmm,
                                                  const std::vector<FeatureWorkItem>& items,
                                                  std::uint64_t master_seed, bool verbose) {
    std::vector<FeatureVector> out;
    out.reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& it = items[i];
        const std::uint64_t seed = derive_seed(master_seed, splitmix64(i) ^ splitmix64(it.image.size()));
        FeatureVector fv = extract_features(classifier, generator, gmm, it.image, seed);
        fv.image_id = it.image_id;
        fv.true_label = it.true_label;
        fv.attack_tag = it.attack_tag;
        fv.split = it.split;
        out.push_back(std::move(fv));
        if (verbose && (i + 1) % 50 == 0)
            std::printf("[features %s] %zu/%zu\n", it.attack_tag.c_str(), i + 1, items.size());
    }
    return out;
}

WhiteboxContext compute_whitebox_context(ClassifierModel& classifier, GenerativeModel& generator,
                                         const GmmModel& gmm,
                                         const std::vector<LabeledSample>& train, int per_class_cap,
                                         bool verbose) {
    const int C = classifier.class_count();
    std::vector<std::vector<double>> lls(C), dens(C);
    std::vector<int> taken(C, 0);
    for (const auto& s : train) {
        if (taken[s.label] >= per_class_cap) continue;
        ++taken[s.label];
        lls[s.label].push_back(conditional_log_likelihood(generator, s.image, s.label));
        const auto out = classify(classifier, s.image);
        dens[s.label].push_back(gmm.per_class[s.label].log_density(out.representation));
    }
    WhiteboxContext ctx;
    ctx.loglik_q5.resize(C);
    ctx.repdens_q5.resize(C);
    for (int k = 0; k < C; ++k) {
        check(!lls[k].empty(), "compute_whitebox_context: class " + std::to_string(k) + " empty");
        auto q5 = [](std::vector<double> v) {
            std::sort(v.begin(), v.end());
            return v[static_cast<std::size_t>(0.05 * (v.size() - 1))];
        };
        ctx.loglik_q5[k] = q5(lls[k]);
        ctx.repdens_q5[k] = q5(dens[k]);
        if (verbose)
            std::printf("[whitebox ctx] class %d: loglik q5 %.1f, rep density q5 %.2f\n", k,
                        ctx.loglik_q5[k], ctx.repdens_q5[k]);
    }
    return ctx;
}

void save_whitebox_context(const WhiteboxContext& ctx, const std::string& path) {
    json j{{"loglik_q5", ctx.loglik_q5}, {"repdens_q5", ctx.repdens_q5}};
    std::ofstream f(path);
    check(f.good(), "save_whitebox_context: cannot write " + path);
    f << j.dump(2);
}

WhiteboxContext load_whitebox_context(const std::string& path) {
    std::ifstream f(path);
    check(f.good(), "load_whitebox_context: cannot read " + path);
    json j = json::parse(f);
    WhiteboxContext ctx;
    ctx.loglik_q5 = j.at("loglik_q5").get<std::vector<double>>();
    ctx.repdens_q5 = j.at("repdens_q5").get<std::vector<double>>();
    return ctx;
}

GmmModel fit_gmm_from_split(ClassifierModel& classifier, const std::vector<LabeledSample>& train,
                            int components, std::uint64_t seed) {
    std::vector<std::vector<VectorXd>> reps(classifier.class_count());
    for (const auto& s : train)
        reps[s.label].push_back(classify(classifier, s.image).representation);
    return fit_gmm(reps, components, seed);
}

// ---------------------------------------------------------------- evaluation

std::vector<double> detector_scores(const HybridDetector& det,
                                    const std::vector<FeatureVector>& fvs) {
    std::vector<double> out;
    out.reserve(fvs.size());
    for (const auto& fv : fvs) out.push_back(det.combined_score(fv));
    return out;
}

std::vector<double> detector_anomaly_scores(const HybridDetector& det,
                                            const std::vector<FeatureVector>& fvs) {
    std::vector<double> out;
    out.reserve(fvs.size());
    for (const auto& fv : fvs) out.push_back(-det.combined_score(fv));
    return out;
}

namespace {

bool feature_is_successful_attack(const FeatureVector& fv) {
    // attack batches only run on correctly classified sources, so a flipped
    // label on the perturbed image marks a successful attack
    return fv.label_used != fv.true_label;
}

}  // namespace

EvalReport evaluate_system(const EvalInputs& in) {
    check(in.detector != nullptr, "evaluate_system: detector missing");
    check(!in.benign_test.empty(), "evaluate_system: benign test features missing");
    const auto& det = *in.detector;

    EvalReport rep;
    rep.tnr_target = det.config.tnr_target;
    rep.manifest = in.manifest;
    rep.manifest["tau"] = det.tau;
    rep.manifest["detector"] = det.manifest;

    const auto benign_scores = detector_scores(det, in.benign_test);
    const auto benign_anom = detector_anomaly_scores(det, in.benign_test);
    int benign_pass = 0;
    for (const auto& fv : in.benign_test)
        if (det.decide(fv) == 0) ++benign_pass;
    rep.benign_detection_rate = static_cast<double>(benign_pass) / in.benign_test.size();

    for (const auto& [tag, fvs] : in.attack_features) {
        AttackEvalRow row;
        row.tag = tag;
        auto sr = in.success_rates.find(tag);
        row.success_rate = sr != in.success_rates.end() ? sr->second : 0.0;

        std::vector<FeatureVector> successful;
        std::vector<SystemOutcome> outcomes;
        for (const auto& fv : fvs) {
            SystemOutcome o;
            o.dnn_correct = fv.label_used == fv.true_label;
            o.detected = det.decide(fv) == 1;
            outcomes.push_back(o);
            if (feature_is_successful_attack(fv)) successful.push_back(fv);
        }
        row.n_eval = static_cast<int>(successful.size());
        if (!successful.empty()) {
            const auto adv_scores = detector_scores(det, successful);
            const auto adv_anom = detector_anomaly_scores(det, successful);
            row.adr = adr_at_tnr(benign_scores, adv_scores, rep.tnr_target);
            row.auc = auroc(benign_anom, adv_anom);
            rep.rocs[tag] = roc_curve(benign_anom, adv_anom);

            // per-predictor mutual information against the detection label
            std::array<double, 4> mi{};
            for (int d = 0; d < 4; ++d) {
                std::vector<double> vals;
                std::vector<int> labels;
                for (const auto& fv : in.benign_test) {
                    vals.push_back(fv.as_vec()(d));
                    labels.push_back(0);
                }
                for (const auto& fv : successful) {
                    vals.push_back(fv.as_vec()(d));
                    labels.push_back(1);
                }
                mi[d] = mutual_information(vals, labels, 20);
            }
            rep.mutual_info[tag] = mi;
        }
        if (!outcomes.empty()) {
            auto [dnn, sys] = overall_system_accuracy(outcomes);
            row.dnn_only = dnn;
            row.dnn_plus = sys;
        }
        row.severe = row.adr < 0.5;
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

void write_report(const EvalReport& rep, const std::string& dir) {
    fs::create_directories(dir);
    char buf[512];

    std::ofstream tf(dir + "/detection.tsv");
    check(tf.good(), "write_report: cannot write " + dir);
    tf << "attack\tsuccess_rate\tn_eval\tadr@tnr" << "\tauroc\tsevere\n";
    for (const auto& r : rep.rows) {
        std::snprintf(buf, sizeof(buf), "%s\t%.4f\t%d\t%.4f\t%.4f\t%s\n", r.tag.c_str(),
                      r.success_rate, r.n_eval, r.adr, r.auc, r.severe ? "SEVERE" : "-");
        tf << buf;
    }

    std::ofstream of(dir + "/overall_accuracy.tsv");
    of << "attack\tdnn_only\tdnn_plus_detector\n";
    for (const auto& r : rep.rows) {
        std::snprintf(buf, sizeof(buf), "%s\t%.4f\t%.4f\n", r.tag.c_str(), r.dnn_only, r.dnn_plus);
        of << buf;
    }

    std::ofstream mf(dir + "/mutual_information.tsv");
    mf << "attack\tMI_d1\tMI_d2\tMI_d3\tMI_d4\n";
    for (const auto& [tag, mi] : rep.mutual_info) {
        std::snprintf(buf, sizeof(buf), "%s\t%.4f\t%.4f\t%.4f\t%.4f\n", tag.c_str(), mi[0], mi[1],
                      mi[2], mi[3]);
        mf << buf;
    }

    std::vector<Curve> curves;
    for (const auto& [tag, pts] : rep.rocs) {
        std::ofstream rf(dir + "/roc_" + tag + ".tsv");
        rf << "fpr\ttpr\n";
        for (const auto& [x, y] : pts) {
            std::snprintf(buf, sizeof(buf), "%.17g\t%.17g\n", x, y);
            rf << buf;
        }
        curves.push_back({tag, pts});
    }
    if (!curves.empty()) render_curves_png(dir + "/roc_curves.png", curves);

    json summary;
    summary["tnr_target"] = rep.tnr_target;
    summary["benign_detection_rate"] = rep.benign_detection_rate;
    summary["manifest"] = rep.manifest;
    json jrows = json::array();
    for (const auto& r : rep.rows)
        jrows.push_back({{"attack", r.tag},
                         {"success_rate", r.success_rate},
                         {"n_eval", r.n_eval},
                         {"adr", r.adr},
                         {"auroc", r.auc},
                         {"dnn_only", r.dnn_only},
                         {"dnn_plus", r.dnn_plus},
                         {"severe", r.severe}});
    summary["rows"] = jrows;
    std::ofstream jf(dir + "/report.json");
    jf << summary.dump(2);
}

std::map<std::string, double> ablation_run(const std::vector<int>& mask,
                                           const std::vector<FeatureVector>& benign_train,
                                           const std::vector<FeatureVector>& adv_train,
                                           const std::vector<FeatureVector>& benign_test,
                                           const std::map<std::string, std::vector<FeatureVector>>& attacks,
                                           const DetectorConfig& base_config) {
    check(!mask.empty(), "ablation_run: empty predictor mask");
    DetectorConfig cfg = base_config;
    cfg.feature_mask = mask;
    HybridDetector det = train_detector(benign_train, adv_train, cfg);

    const auto benign_anom = detector_anomaly_scores(det, benign_test);
    std::map<std::string, double> out;
    for (const auto& [tag, fvs] : attacks) {
        std::vector<FeatureVector> successful;
        for (const auto& fv : fvs)
            if (feature_is_successful_attack(fv)) successful.push_back(fv);
        if (successful.empty()) continue;
        out[tag] = auroc(benign_anom, detector_anomaly_scores(det, successful));
    }
    return out;
}

MisclassifiedBenignResult misclassified_benign_eval(const HybridDetector& det,
                                                    const std::vector<FeatureVector>& benign_test,
                                                    std::uint64_t seed) {
    std::vector<FeatureVector> missed, correct;
    for (const auto& fv : benign_test)
        (fv.label_used == fv.true_label ? correct : missed).push_back(fv);
    MisclassifiedBenignResult out;
    if (missed.empty() || correct.empty()) return out;  // perfect classifier: not applicable
    out.applicable = true;
    out.auc = auc_with_bootstrap_ci(detector_anomaly_scores(det, correct),
                                    detector_anomaly_scores(det, missed), seed);
    return out;
}

}  // namespace mvdet
