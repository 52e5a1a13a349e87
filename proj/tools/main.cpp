// Batch CLI for the multi-view inconsistency detector. Subcommands cover the
// full pipeline: data splits, model training, attack generation, view dumps,
// feature extraction, detector training, evaluation and reporting.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mvdet/pipeline.hpp"
#include "mvdet/png_io.hpp"

namespace fs = std::filesystem;
using namespace mvdet;

namespace {

json load_config(const std::string& path) {
    std::ifstream f(path);
    check(f.good(), "cannot read config " + path);
    return json::parse(f);
}

DatasetConfig dataset_config(const json& cfg) {
    const auto& d = cfg.at("dataset");
    DatasetConfig dc;
    dc.root = d.at("root");
    dc.name = d.value("name", "dataset");
    dc.class_count = d.value("class_count", 0);
    dc.per_class = d.value("per_class", 0);
    dc.train_frac = d.value("train_frac", 0.8);
    dc.val_frac = d.value("val_frac", 0.1);
    dc.seed = d.value("seed", 7ull);
    return dc;
}

std::vector<LabeledSample>& pick_split(DatasetSplit& ds, const std::string& name) {
    if (name == "train") return ds.train;
    if (name == "val") return ds.val;
    if (name == "test") return ds.test;
    check(false, "unknown split '" + name + "'");
    return ds.test;
}

AttackSpec spec_from_flags(const std::string& family, double eps, int iters, double alpha,
                           double confidence, const json& cfg) {
    AttackSpec spec;
    spec.family = attack_family_from_string(family);
    spec.epsilon = eps;
    spec.iterations = iters;
    spec.alpha = alpha;
    spec.confidence = confidence;
    if (cfg.contains("whitebox")) {
        spec.alpha_wb = cfg["whitebox"].value("alpha", 1.0);
        spec.beta_wb = cfg["whitebox"].value("beta", 1.0);
    }
    return spec;
}

}  // namespace

int main(int argc, char** argv) {
    std::setvbuf(stdout, nullptr, _IOLBF, 0);  // live progress under nohup/tee
    CLI::App app{"multi-view inconsistency detector toolkit"};
    app.require_subcommand(1);

    std::string config_path = "configs/desk_cifar10.json";
    std::uint64_t seed = 0;
    app.add_option("--config", config_path, "pipeline config file (json)")->envname("MVDET_CONFIG");
    app.add_option("--seed", seed, "master seed override");
    app.fallthrough();  // global flags may appear after the subcommand

    // ---- train-classifier
    auto* tc = app.add_subcommand("train-classifier", "train the victim network");
    std::string tc_out = "work/classifier.ckpt";
    tc->add_option("--out", tc_out, "checkpoint path");

    // ---- train-generator
    auto* tg = app.add_subcommand("train-generator", "train the conditional pixel model");
    std::string tg_out = "work/generator.ckpt";
    tg->add_option("--out", tg_out, "checkpoint path");

    // ---- fit-gmm
    auto* fg = app.add_subcommand("fit-gmm", "fit the per-class representation mixture");
    std::string fg_classifier = "work/classifier.ckpt", fg_out = "work/gmm.json";
    fg->add_option("--classifier", fg_classifier);
    fg->add_option("--out", fg_out);

    // ---- attack
    auto* at = app.add_subcommand("attack", "generate an adversarial archive");
    std::string at_family = "pgd", at_split = "test", at_out = "work/attacks/pgd-8";
    std::string at_classifier = "work/classifier.ckpt", at_generator = "work/generator.ckpt";
    std::string at_gmm = "work/gmm.json", at_wbctx = "work/whitebox_ctx.json";
    double at_eps = 8.0, at_alpha = 0.0, at_conf = 0.5;
    int at_iters = 40, at_count = 0, at_offset = 0;
    at->add_option("--family", at_family, "fgsm|pgd|mim|deepfool|cw|whitebox");
    at->add_option("--eps", at_eps, "L-inf budget, 0..255 pixel units");
    at->add_option("--iters", at_iters, "iterations T");
    at->add_option("--alpha", at_alpha, "step size (pixel units, 0 = eps/T)");
    at->add_option("--confidence", at_conf, "C&W confidence k");
    at->add_option("--in", at_split, "source split: train|val|test");
    at->add_option("--count", at_count, "cap on source samples (0 = all)");
    at->add_option("--offset", at_offset, "skip this many source samples");
    at->add_option("--out", at_out, "archive directory");
    at->add_option("--classifier", at_classifier);
    at->add_option("--generator", at_generator, "needed for whitebox");
    at->add_option("--gmm", at_gmm, "needed for whitebox");
    at->add_option("--wb-context", at_wbctx, "needed for whitebox");

    // ---- whitebox-context
    auto* wc = app.add_subcommand("whitebox-context", "per-class benign likelihood thresholds");
    std::string wc_classifier = "work/classifier.ckpt", wc_generator = "work/generator.ckpt";
    std::string wc_gmm = "work/gmm.json", wc_out = "work/whitebox_ctx.json";
    int wc_cap = 50;
    wc->add_option("--classifier", wc_classifier);
    wc->add_option("--generator", wc_generator);
    wc->add_option("--gmm", wc_gmm);
    wc->add_option("--per-class", wc_cap);
    wc->add_option("--out", wc_out);

    // ---- gen-views
    auto* gv = app.add_subcommand("gen-views", "dump the four views of one image");
    std::string gv_image, gv_outdir = "views_out", gv_generator = "work/generator.ckpt";
    std::string gv_classifier;
    int gv_label = -1;
    gv->add_option("--image", gv_image, "input png")->required();
    gv->add_option("--label", gv_label, "conditioning label (omit to use the classifier)");
    gv->add_option("--classifier", gv_classifier, "classifier checkpoint for label prediction");
    gv->add_option("--generator", gv_generator);
    gv->add_option("--out-dir", gv_outdir);

    // ---- sample (debug)
    auto* sp = app.add_subcommand("sample", "generate rows below a seed band (debug)");
    std::string sp_generator = "work/generator.ckpt", sp_image, sp_out = "sample.png";
    int sp_label = 0, sp_seed_rows = 0;
    sp->add_option("--generator", sp_generator);
    sp->add_option("--label", sp_label)->required();
    sp->add_option("--seed-rows", sp_seed_rows, "rows kept from the seed image")->required();
    sp->add_option("--image", sp_image, "seed png (omit for a blank canvas)");
    sp->add_option("--out", sp_out);

    // ---- extract-features
    auto* ef = app.add_subcommand("extract-features", "compute d1..d4 for a sample set");
    std::string ef_classifier = "work/classifier.ckpt", ef_generator = "work/generator.ckpt";
    std::string ef_gmm = "work/gmm.json", ef_split, ef_archive, ef_out = "features.tsv";
    int ef_count = 0, ef_offset = 0;
    ef->add_option("--classifier", ef_classifier);
    ef->add_option("--generator", ef_generator);
    ef->add_option("--gmm", ef_gmm);
    ef->add_option("--split", ef_split, "benign split: train|val|test");
    ef->add_option("--archive", ef_archive, "adversarial archive directory");
    ef->add_option("--count", ef_count, "cap (0 = all)");
    ef->add_option("--offset", ef_offset);
    ef->add_option("--out", ef_out, "feature store (tsv)");

    // ---- train-detector
    auto* td = app.add_subcommand("train-detector", "fit the hybrid RF + IF detector");
    std::string td_benign, td_out = "work/detector.json";
    std::vector<std::string> td_adv;
    double td_tnr = 0.95;
    td->add_option("--benign", td_benign, "benign feature store")->required();
    td->add_option("--adv", td_adv, "adversarial feature store(s)")->required();
    td->add_option("--tnr", td_tnr, "benign pass-rate target for tau");
    td->add_option("--out", td_out);

    // ---- evaluate / report
    auto* ev = app.add_subcommand("evaluate", "detection metrics over feature stores");
    auto* rp = app.add_subcommand("report", "re-render a report from persisted stores");
    std::string ev_detector = "work/detector.json", ev_benign, ev_out = "work/report";
    std::vector<std::string> ev_adv;          // tag=path
    std::vector<std::string> ev_sr;           // tag=rate or tag=archive_dir
    for (auto* cmd : {ev, rp}) {
        cmd->add_option("--detector", ev_detector);
        cmd->add_option("--benign-test", ev_benign)->required();
        cmd->add_option("--adv", ev_adv, "tag=feature_store.tsv (repeatable)");
        cmd->add_option("--stats", ev_sr, "tag=archive_dir for success rates (repeatable)");
        cmd->add_option("--out", ev_out, "report directory");
    }

    // ---- ablate
    auto* ab = app.add_subcommand("ablate", "predictor-subset ablation (AUC per attack)");
    std::string ab_benign_train, ab_benign_test, ab_out = "work/ablation.tsv";
    std::vector<std::string> ab_adv_train, ab_adv_eval, ab_masks = {"1", "2", "3", "4", "1,2,3,4"};
    ab->add_option("--benign-train", ab_benign_train, "benign (validation) features")->required();
    ab->add_option("--adv-train", ab_adv_train, "detector-training adversarial stores")->required();
    ab->add_option("--benign-test", ab_benign_test)->required();
    ab->add_option("--adv", ab_adv_eval, "tag=feature_store.tsv (repeatable)")->required();
    ab->add_option("--mask", ab_masks, "predictor subsets, e.g. 1,3 (repeatable)");
    ab->add_option("--out", ab_out);

    CLI11_PARSE(app, argc, argv);

    try {
        json cfg = load_config(config_path);
        if (seed != 0) cfg["seed"] = seed;

        if (tc->parsed()) {
            auto ds = load_dataset(dataset_config(cfg));
            const auto& c = cfg.at("classifier");
            ClassifierTrainConfig t;
            t.epochs = c.value("epochs", 30);
            t.batch = c.value("batch", 64);
            t.lr = c.value("lr", 3e-3);
            t.weight_decay = c.value("weight_decay", 5e-4);
            t.label_smoothing = c.value("label_smoothing", 0.0);
            t.seed = seed ? seed : c.value("seed", 1ull);
            auto model = train_classifier(ds, c.at("arch"), t);
            fs::create_directories(fs::path(tc_out).parent_path());
            save_classifier(model, tc_out);
            std::printf("saved %s (val acc %.3f, test acc %.3f)\n", tc_out.c_str(),
                        model.meta["val_accuracy"].get<double>(),
                        model.meta["test_accuracy"].get<double>());
        } else if (tg->parsed()) {
            auto ds = load_dataset(dataset_config(cfg));
            const auto& g = cfg.at("generator");
            GeneratorTrainConfig t;
            t.epochs = g.value("epochs", 12);
            t.batch = g.value("batch", 16);
            t.lr = g.value("lr", 2e-3);
            t.seed = seed ? seed : g.value("seed", 2ull);
            auto model = train_generator(ds, g.at("arch"), t);
            fs::create_directories(fs::path(tg_out).parent_path());
            save_generator(model, tg_out);
            std::printf("saved %s (test %.3f bits/dim)\n", tg_out.c_str(),
                        model.meta.value("test_bits_per_dim", 0.0));
        } else if (fg->parsed()) {
            auto ds = load_dataset(dataset_config(cfg));
            auto classifier = load_classifier(fg_classifier);
            const int comps = cfg.contains("gmm") ? cfg["gmm"].value("components", 8) : 8;
            const std::uint64_t s = cfg.contains("gmm") ? cfg["gmm"].value("seed", 5ull) : 5ull;
            auto gmm = fit_gmm_from_split(classifier, ds.train, comps, s);
            save_gmm(gmm, fg_out);
            std::printf("saved %s (%d classes x %d components)\n", fg_out.c_str(),
                        static_cast<int>(gmm.per_class.size()), gmm.components);
        } else if (wc->parsed()) {
            auto ds = load_dataset(dataset_config(cfg));
            auto classifier = load_classifier(wc_classifier);
            auto generator = load_generator(wc_generator);
            auto gmm = load_gmm(wc_gmm);
            auto ctx = compute_whitebox_context(classifier, generator, gmm, ds.train, wc_cap);
            save_whitebox_context(ctx, wc_out);
            std::printf("saved %s\n", wc_out.c_str());
        } else if (at->parsed()) {
            auto ds = load_dataset(dataset_config(cfg));
            auto classifier = load_classifier(at_classifier);
            auto& src = pick_split(ds, at_split);
            std::vector<LabeledSample> samples(
                src.begin() + std::min<std::size_t>(at_offset, src.size()),
                at_count > 0 ? src.begin() + std::min<std::size_t>(at_offset + at_count, src.size())
                             : src.end());
            AttackSpec spec = spec_from_flags(at_family, at_eps, at_iters, at_alpha, at_conf, cfg);
            AttackBatchResult batch;
            if (spec.family == AttackFamily::whitebox) {
                auto generator = load_generator(at_generator);
                auto gmm = load_gmm(at_gmm);
                auto ctx = load_whitebox_context(at_wbctx);
                batch = attack_batch(classifier, spec, samples, &generator, &gmm, &ctx);
            } else {
                batch = attack_batch(classifier, spec, samples);
            }
            save_adversarial_archive(batch, at_out);
            std::printf("archive %s: SR %.3f (%d/%d)\n", at_out.c_str(), batch.success_rate,
                        batch.successes, batch.attempted);
        } else if (gv->parsed()) {
            auto generator = load_generator(gv_generator);
            FlatImage img = read_png(gv_image);
            int label = gv_label;
            if (label < 0) {
                check(!gv_classifier.empty(), "gen-views: give --label or --classifier");
                auto classifier = load_classifier(gv_classifier);
                label = classify(classifier, img).label;
            }
            const std::uint64_t s = seed ? seed : 1234;
            ViewSet vs = generate_views(generator, img, label, s);
            fs::create_directories(gv_outdir);
            write_png(gv_outdir + "/source.png", vs.source);
            write_png(gv_outdir + "/g1.png", vs.g1);
            write_png(gv_outdir + "/g2.png", vs.g2);
            write_png(gv_outdir + "/g3.png", vs.g3);
            write_png(gv_outdir + "/gstar.png", vs.gstar);
            json manifest{{"label_used", vs.label_used},
                          {"master_seed", s},
                          {"rng_seeds", {vs.rng_seeds[0], vs.rng_seeds[1], vs.rng_seeds[2]}}};
            std::ofstream mf(gv_outdir + "/manifest.json");
            mf << manifest.dump(2);
            std::printf("views written to %s (label %d)\n", gv_outdir.c_str(), label);
        } else if (sp->parsed()) {
            auto generator = load_generator(sp_generator);
            FlatImage img;
            if (!sp_image.empty()) {
                img = read_png(sp_image);
            } else {
                img.rows = generator.rows;
                img.cols = generator.cols;
                img.channels = generator.channels;
                img.pixels.assign(static_cast<std::size_t>(img.size()), 128);
            }
            check(sp_seed_rows >= 0 && sp_seed_rows < img.rows, "sample: bad --seed-rows");
            Rng rng(seed ? seed : 99);
            FlatImage out = generate_rows(generator, img, sp_label, sp_seed_rows + 1, img.rows, rng);
            write_png(sp_out, out);
            std::printf("sample written to %s\n", sp_out.c_str());
        } else if (ef->parsed()) {
            auto classifier = load_classifier(ef_classifier);
            auto generator = load_generator(ef_generator);
            auto gmm = load_gmm(ef_gmm);
            std::vector<FeatureWorkItem> items;
            if (!ef_split.empty()) {
                auto ds = load_dataset(dataset_config(cfg));
                items = items_from_samples(pick_split(ds, ef_split), ef_split);
            } else {
                check(!ef_archive.empty(), "extract-features: give --split or --archive");
                auto batch = load_adversarial_archive(ef_archive);
                items = items_from_records(batch.records, "attack");
            }
            if (ef_offset > 0)
                items.erase(items.begin(),
                            items.begin() + std::min<std::size_t>(ef_offset, items.size()));
            if (ef_count > 0 && static_cast<int>(items.size()) > ef_count) items.resize(ef_count);
            const std::uint64_t s = seed ? seed : cfg.value("seed", 1234ull);
            auto fvs = extract_features_batch(classifier, generator, gmm, items, s);
            fs::create_directories(fs::path(ef_out).parent_path());
            save_feature_store(fvs, ef_out);
            std::printf("wrote %zu feature rows to %s\n", fvs.size(), ef_out.c_str());
        } else if (td->parsed()) {
            auto benign = load_feature_store(td_benign);
            std::vector<FeatureVector> adv;
            for (const auto& p : td_adv) {
                auto rows = load_feature_store(p);
                // only successful attacks train the supervised side
                for (auto& r : rows)
                    if (r.label_used != r.true_label) adv.push_back(std::move(r));
            }
            DetectorConfig dc;
            if (cfg.contains("detector")) {
                const auto& d = cfg["detector"];
                dc.rf_trees = d.value("rf_trees", 100);
                dc.if_trees = d.value("if_trees", 100);
                dc.if_psi = d.value("if_psi", 256);
                dc.seed = d.value("seed", 11ull);
                dc.pif_raw_score = d.value("pif_raw_score", false);
            }
            dc.tnr_target = td_tnr;
            auto det = train_detector(benign, adv, dc);
            fs::create_directories(fs::path(td_out).parent_path());
            save_detector(det, td_out);
            std::printf("saved %s (tau %.4f, %zu benign, %zu adversarial)\n", td_out.c_str(),
                        det.tau, benign.size(), adv.size());
        } else if (ev->parsed() || rp->parsed()) {
            EvalInputs in;
            auto det = load_detector(ev_detector);
            in.detector = &det;
            in.benign_test = load_feature_store(ev_benign);
            for (const auto& kv : ev_adv) {
                const auto eq = kv.find('=');
                check(eq != std::string::npos, "--adv expects tag=path");
                in.attack_features[kv.substr(0, eq)] = load_feature_store(kv.substr(eq + 1));
            }
            for (const auto& kv : ev_sr) {
                const auto eq = kv.find('=');
                check(eq != std::string::npos, "--stats expects tag=archive_dir");
                std::ifstream sf(kv.substr(eq + 1) + "/stats.json");
                check(sf.good(), "cannot read stats for " + kv);
                in.success_rates[kv.substr(0, eq)] = json::parse(sf).value("success_rate", 0.0);
            }
            in.manifest = json{{"benign_store", ev_benign}, {"detector", ev_detector}};
            auto report = evaluate_system(in);
            write_report(report, ev_out);
            std::printf("report written to %s (BDR %.3f at TNR target %.2f)\n", ev_out.c_str(),
                        report.benign_detection_rate, report.tnr_target);
        } else if (ab->parsed()) {
            auto benign_train = load_feature_store(ab_benign_train);
            auto benign_test = load_feature_store(ab_benign_test);
            std::vector<FeatureVector> adv_train;
            for (const auto& p : ab_adv_train) {
                auto rows = load_feature_store(p);
                for (auto& r : rows)
                    if (r.label_used != r.true_label) adv_train.push_back(std::move(r));
            }
            std::map<std::string, std::vector<FeatureVector>> attacks;
            for (const auto& kv : ab_adv_eval) {
                const auto eq = kv.find('=');
                check(eq != std::string::npos, "--adv expects tag=path");
                attacks[kv.substr(0, eq)] = load_feature_store(kv.substr(eq + 1));
            }
            DetectorConfig dc;
            if (cfg.contains("detector")) {
                dc.seed = cfg["detector"].value("seed", 11ull);
                dc.tnr_target = cfg["detector"].value("tnr", 0.95);
            }
            std::ofstream out(ab_out);
            check(out.good(), "ablate: cannot write " + ab_out);
            out << "mask";
            std::vector<std::string> tags;
            for (const auto& [tag, _] : attacks) {
                out << "\t" << tag;
                tags.push_back(tag);
            }
            out << "\n";
            for (const auto& mask_str : ab_masks) {
                std::vector<int> mask;
                std::istringstream ms(mask_str);
                std::string tok;
                while (std::getline(ms, tok, ',')) mask.push_back(std::stoi(tok) - 1);
                auto aucs = ablation_run(mask, benign_train, adv_train, benign_test, attacks, dc);
                out << mask_str;
                char buf[64];
                for (const auto& tag : tags) {
                    std::snprintf(buf, sizeof(buf), "\t%.4f", aucs.count(tag) ? aucs[tag] : 0.0);
                    out << buf;
                }
                out << "\n";
            }
            std::printf("ablation table written to %s\n", ab_out.c_str());
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
