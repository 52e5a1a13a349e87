// Python bindings for the main operations: data handling, the two models,
// view generation, predictors, the hybrid detector, attacks and metrics.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mvdet/pipeline.hpp"
#include "mvdet/png_io.hpp"

namespace py = pybind11;
using namespace mvdet;

namespace {

FlatImage image_from_array(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
    FlatImage img;
    if (a.ndim() == 2) {
        img.rows = static_cast<int>(a.shape(0));
        img.cols = static_cast<int>(a.shape(1));
        img.channels = 1;
    } else if (a.ndim() == 3) {
        img.rows = static_cast<int>(a.shape(0));
        img.cols = static_cast<int>(a.shape(1));
        img.channels = static_cast<int>(a.shape(2));
    } else {
        throw std::runtime_error("expected a (H,W) or (H,W,C) uint8 array");
    }
    img.pixels.assign(a.data(), a.data() + a.size());
    return img;
}

py::array_t<std::uint8_t> image_to_array(const FlatImage& img) {
    py::array_t<std::uint8_t> a({img.rows, img.cols, img.channels});
    std::copy(img.pixels.begin(), img.pixels.end(), a.mutable_data());
    return a;
}

std::vector<double> doubles_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    return std::vector<double>(a.data(), a.data() + a.size());
}

py::array_t<double> doubles_to_array(const std::vector<double>& v) {
    py::array_t<double> a(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), a.mutable_data());
    return a;
}

VectorXd vec_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    return Eigen::Map<const VectorXd>(a.data(), a.size());
}

py::array_t<double> vec_to_array(const VectorXd& v) {
    py::array_t<double> a(static_cast<py::ssize_t>(v.size()));
    std::copy(v.data(), v.data() + v.size(), a.mutable_data());
    return a;
}

AttackSpec spec_from_kwargs(const std::string& family, double epsilon, int iterations, double alpha,
                            double confidence, double overshoot, double alpha_wb, double beta_wb) {
    AttackSpec s;
    s.family = attack_family_from_string(family);
    s.epsilon = epsilon;
    s.iterations = iterations;
    s.alpha = alpha;
    s.confidence = confidence;
    s.overshoot = overshoot;
    s.alpha_wb = alpha_wb;
    s.beta_wb = beta_wb;
    return s;
}

py::dict record_to_dict(const AdversarialRecord& rec) {
    py::dict d;
    d["original"] = image_to_array(rec.original);
    d["perturbed"] = image_to_array(rec.perturbed);
    d["true_label"] = rec.true_label;
    d["pred_original"] = rec.pred_original;
    d["pred_perturbed"] = rec.pred_perturbed;
    d["success"] = rec.success;
    d["linf"] = rec.linf;
    d["l2"] = rec.l2;
    d["attack_tag"] = rec.attack_tag;
    return d;
}

FeatureVector fv_from_tuple(const py::sequence& t) {
    FeatureVector fv;
    fv.d1 = t[0].cast<double>();
    fv.d2 = t[1].cast<double>();
    fv.d3 = t[2].cast<double>();
    fv.d4 = t[3].cast<double>();
    if (py::len(t) > 4) fv.label_used = t[4].cast<int>();
    if (py::len(t) > 5) fv.true_label = t[5].cast<int>();
    return fv;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "multi-view inconsistency detector core";

    // ---------------- data
    m.def("flatten_raster", [](const std::vector<std::vector<std::vector<int>>>& grid) {
        FlatImage img = flatten_raster(grid);
        py::dict d;
        d["pixels"] = py::bytes(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
        d["rows"] = img.rows;
        d["cols"] = img.cols;
        d["channels"] = img.channels;
        return d;
    });
    m.def("unflatten", [](const py::array_t<std::uint8_t, py::array::c_style>& a) {
        return unflatten(image_from_array(a));
    });
    m.def("row_band", [](const py::array_t<std::uint8_t, py::array::c_style>& a, int r0, int r1) {
        auto band = row_band(image_from_array(a), r0, r1);
        return py::bytes(reinterpret_cast<const char*>(band.data()), band.size());
    });
    m.def("read_png", [](const std::string& path) { return image_to_array(read_png(path)); });
    m.def("write_png", [](const std::string& path, const py::array_t<std::uint8_t, py::array::c_style>& a) {
        write_png(path, image_from_array(a));
    });
    m.def("band_plan", [](int rows) {
        auto plan = band_plan(rows);
        py::list out;
        for (const auto& b : plan.bands)
            out.append(py::make_tuple(b.k, b.seed_rows, b.r_start, b.r_end));
        return out;
    });

    // ---------------- classifier
    py::class_<ClassifierModel>(m, "Classifier")
        .def_static("load", &load_classifier)
        .def("save", [](const ClassifierModel& self, const std::string& p) { save_classifier(self, p); })
        .def_property_readonly("class_count", &ClassifierModel::class_count)
        .def_property_readonly("rep_dim", &ClassifierModel::rep_dim)
        .def_property_readonly("meta", [](const ClassifierModel& self) { return self.meta.dump(); })
        .def("classify",
             [](ClassifierModel& self, const py::array_t<std::uint8_t, py::array::c_style>& a) {
                 auto out = classify(self, image_from_array(a));
                 py::dict d;
                 d["probs"] = vec_to_array(out.probs);
                 d["representation"] = vec_to_array(out.representation);
                 d["label"] = out.label;
                 return d;
             })
        .def("loss_gradient",
             [](ClassifierModel& self, const py::array_t<double, py::array::c_style>& x, int label) {
                 return doubles_to_array(loss_gradient(self, doubles_from_array(x), label));
             })
        .def("logits", [](ClassifierModel& self, const py::array_t<double, py::array::c_style>& x) {
            return vec_to_array(logits_unit(self, doubles_from_array(x)));
        });

    m.def("train_classifier",
          [](const std::string& dataset_root, const std::string& arch_json, int epochs, int batch,
             double lr, double weight_decay, std::uint64_t seed, int class_count, int per_class,
             double train_frac, double val_frac, std::uint64_t split_seed) {
              DatasetConfig dc;
              dc.root = dataset_root;
              dc.class_count = class_count;
              dc.per_class = per_class;
              dc.train_frac = train_frac;
              dc.val_frac = val_frac;
              dc.seed = split_seed;
              auto ds = load_dataset(dc);
              ClassifierTrainConfig cfg;
              cfg.epochs = epochs;
              cfg.batch = batch;
              cfg.lr = lr;
              cfg.weight_decay = weight_decay;
              cfg.seed = seed;
              return train_classifier(ds, json::parse(arch_json), cfg);
          },
          py::arg("dataset_root"), py::arg("arch_json"), py::arg("epochs") = 30,
          py::arg("batch") = 64, py::arg("lr") = 3e-3, py::arg("weight_decay") = 5e-4,
          py::arg("seed") = 1, py::arg("class_count") = 0, py::arg("per_class") = 0,
          py::arg("train_frac") = 0.8, py::arg("val_frac") = 0.1, py::arg("split_seed") = 7);

    // ---------------- generator
    py::class_<GenerativeModel>(m, "Generator")
        .def(py::init([](const std::string& arch_json, std::uint64_t seed) {
                 return GenerativeModel(json::parse(arch_json), seed);
             }),
             py::arg("arch_json"), py::arg("seed") = 0)
        .def_static("load", &load_generator)
        .def("save", [](const GenerativeModel& self, const std::string& p) { save_generator(self, p); })
        .def_property_readonly("meta", [](const GenerativeModel& self) { return self.meta.dump(); })
        .def("log_likelihood",
             [](GenerativeModel& self, const py::array_t<std::uint8_t, py::array::c_style>& a,
                int label) { return self.log_likelihood(image_from_array(a), label); })
        .def("conditional_at",
             [](GenerativeModel& self, const py::array_t<std::uint8_t, py::array::c_style>& a,
                int label, int r, int c, int ch) {
                 return vec_to_array(self.conditional_at(image_from_array(a), label, r, c, ch));
             })
        .def("sample_pixel",
             [](GenerativeModel& self, const py::array_t<std::uint8_t, py::array::c_style>& a,
                int label, int i, std::uint64_t seed) {
                 Rng rng(seed);
                 return sample_pixel(self, image_from_array(a), label, i, rng);
             })
        .def("generate_rows",
             [](GenerativeModel& self, const py::array_t<std::uint8_t, py::array::c_style>& a,
                int label, int r_start, int r_end, std::uint64_t seed) {
                 Rng rng(seed);
                 return image_to_array(
                     generate_rows(self, image_from_array(a), label, r_start, r_end, rng));
             })
        .def("generate_views",
             [](GenerativeModel& self, const py::array_t<std::uint8_t, py::array::c_style>& a,
                int label, std::uint64_t master_seed) {
                 ViewSet vs = generate_views(self, image_from_array(a), label, master_seed);
                 py::dict d;
                 d["g1"] = image_to_array(vs.g1);
                 d["g2"] = image_to_array(vs.g2);
                 d["g3"] = image_to_array(vs.g3);
                 d["gstar"] = image_to_array(vs.gstar);
                 d["label_used"] = vs.label_used;
                 d["rng_seeds"] = py::make_tuple(vs.rng_seeds[0], vs.rng_seeds[1], vs.rng_seeds[2]);
                 return d;
             });

    // ---------------- predictors / gmm
    m.def("kl_divergence", [](const py::array_t<double, py::array::c_style>& p,
                              const py::array_t<double, py::array::c_style>& q) {
        return kl_divergence(vec_from_array(p), vec_from_array(q));
    });

    py::class_<GmmModel>(m, "Gmm")
        .def_static("load", &load_gmm)
        .def("save", [](const GmmModel& self, const std::string& p) { save_gmm(self, p); })
        .def("log_density",
             [](const GmmModel& self, int cls, const py::array_t<double, py::array::c_style>& x) {
                 return self.per_class.at(cls).log_density(vec_from_array(x));
             })
        .def_property_readonly("class_count",
                               [](const GmmModel& self) { return self.per_class.size(); });

    m.def("fit_gmm",
          [](const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>& per_class,
             int components, std::uint64_t seed) {
              std::vector<std::vector<VectorXd>> data;
              for (const auto& arr : per_class) {
                  std::vector<VectorXd> rows;
                  const auto n = arr.shape(0);
                  const auto d = arr.ndim() > 1 ? arr.shape(1) : 1;
                  for (py::ssize_t i = 0; i < n; ++i)
                      rows.push_back(Eigen::Map<const VectorXd>(arr.data() + i * d, d));
                  data.push_back(std::move(rows));
              }
              return fit_gmm(data, components, seed);
          },
          py::arg("per_class"), py::arg("components") = 8, py::arg("seed") = 5);

    m.def("extract_features",
          [](ClassifierModel& classifier, GenerativeModel& generator, const GmmModel& gmm,
             const py::array_t<std::uint8_t, py::array::c_style>& a, std::uint64_t seed) {
              auto fv = extract_features(classifier, generator, gmm, image_from_array(a), seed);
              py::dict d;
              d["d1"] = fv.d1;
              d["d2"] = fv.d2;
              d["d3"] = fv.d3;
              d["d4"] = fv.d4;
              d["label_used"] = fv.label_used;
              d["seed"] = fv.seed;
              return d;
          });

    // ---------------- detector
    py::class_<HybridDetector>(m, "Detector")
        .def_static("load", &load_detector)
        .def("save", [](const HybridDetector& self, const std::string& p) { save_detector(self, p); })
        .def_property_readonly("tau", [](const HybridDetector& self) { return self.tau; })
        .def("p_rf", [](const HybridDetector& self, const py::sequence& t) { return self.p_rf(fv_from_tuple(t)); })
        .def("p_if", [](const HybridDetector& self, const py::sequence& t) { return self.p_if(fv_from_tuple(t)); })
        .def("score", [](const HybridDetector& self, const py::sequence& t) {
            return self.combined_score(fv_from_tuple(t));
        })
        .def("decide", [](const HybridDetector& self, const py::sequence& t) {
            return self.decide(fv_from_tuple(t));
        });

    m.def("train_detector",
          [](const std::vector<py::sequence>& benign, const std::vector<py::sequence>& adversarial,
             double tnr, int rf_trees, int if_trees, int if_psi, std::vector<int> feature_mask,
             bool pif_raw_score, std::uint64_t seed) {
              std::vector<FeatureVector> b, a;
              for (const auto& t : benign) b.push_back(fv_from_tuple(t));
              for (const auto& t : adversarial) a.push_back(fv_from_tuple(t));
              DetectorConfig cfg;
              cfg.tnr_target = tnr;
              cfg.rf_trees = rf_trees;
              cfg.if_trees = if_trees;
              cfg.if_psi = if_psi;
              cfg.feature_mask = std::move(feature_mask);
              cfg.pif_raw_score = pif_raw_score;
              cfg.seed = seed;
              return train_detector(b, a, cfg);
          },
          py::arg("benign"), py::arg("adversarial"), py::arg("tnr") = 0.95,
          py::arg("rf_trees") = 100, py::arg("if_trees") = 100, py::arg("if_psi") = 256,
          py::arg("feature_mask") = std::vector<int>{0, 1, 2, 3}, py::arg("pif_raw_score") = false,
          py::arg("seed") = 11);

    m.def("calibrate_tau", &calibrate_tau, py::arg("benign_scores"), py::arg("tnr_target"));

    // ---------------- attacks
    m.def("run_attack",
          [](ClassifierModel& model, const py::array_t<std::uint8_t, py::array::c_style>& a,
             int true_label, const std::string& family, double epsilon, int iterations, double alpha,
             double confidence, double overshoot) {
              AttackSpec spec =
                  spec_from_kwargs(family, epsilon, iterations, alpha, confidence, overshoot, 1, 1);
              return record_to_dict(run_attack(model, spec, image_from_array(a), true_label));
          },
          py::arg("model"), py::arg("image"), py::arg("true_label"), py::arg("family"),
          py::arg("epsilon") = 8.0, py::arg("iterations") = 40, py::arg("alpha") = 0.0,
          py::arg("confidence") = 0.5, py::arg("overshoot") = 0.02);

    m.def("cw_objective", [](const py::array_t<double, py::array::c_style>& logits, int target,
                             double k) { return cw_objective(vec_from_array(logits), target, k); });

    // ---------------- metrics
    m.def("adr_at_tnr", &adr_at_tnr, py::arg("benign_scores"), py::arg("adv_scores"), py::arg("tnr"));
    m.def("auroc", &auroc, py::arg("benign_anomaly"), py::arg("adv_anomaly"));
    m.def("roc_curve", &roc_curve, py::arg("benign_anomaly"), py::arg("adv_anomaly"));
    m.def("mutual_information", &mutual_information, py::arg("predictor"), py::arg("labels"),
          py::arg("bins") = 20);
}
