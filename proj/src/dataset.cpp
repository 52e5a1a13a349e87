#include "mvdet/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "mvdet/png_io.hpp"
#include "mvdet/rng.hpp"

namespace fs = std::filesystem;

namespace mvdet {

namespace {

struct ClassDir {
    std::string name;
    std::vector<std::string> files;  // sorted file names
};

std::vector<ClassDir> scan_classes(const DatasetConfig& cfg) {
    check(fs::is_directory(cfg.root), "load_dataset: not a directory: " + cfg.root);
    std::vector<ClassDir> classes;
    for (const auto& e : fs::directory_iterator(cfg.root)) {
        if (!e.is_directory()) continue;
        ClassDir cd;
        cd.name = e.path().filename().string();
        for (const auto& f : fs::directory_iterator(e.path())) {
            if (f.path().extension() == ".png") cd.files.push_back(f.path().filename().string());
        }
        std::sort(cd.files.begin(), cd.files.end());
        classes.push_back(std::move(cd));
    }
    std::sort(classes.begin(), classes.end(),
              [](const ClassDir& a, const ClassDir& b) { return a.name < b.name; });
    if (cfg.class_count > 0) {
        check(static_cast<int>(classes.size()) >= cfg.class_count,
              "load_dataset: expected " + std::to_string(cfg.class_count) + " classes, found " +
                  std::to_string(classes.size()) + " under " + cfg.root +
                  (classes.empty() ? "" : " (first missing index >= " + std::to_string(classes.size()) + ")"));
        classes.resize(cfg.class_count);
    }
    check(!classes.empty(), "load_dataset: no class directories under " + cfg.root);
    for (const auto& cd : classes)
        check(!cd.files.empty(), "load_dataset: class directory '" + cd.name + "' has no png images");
    return classes;
}

LabeledSample load_sample(const DatasetConfig& cfg, const std::string& cls, int label,
                          const std::string& file, int& rows, int& cols, int& channels) {
    LabeledSample s;
    s.image = read_png(cfg.root + "/" + cls + "/" + file);
    s.label = label;
    s.id = cls + "/" + file;
    if (rows == 0) {
        rows = s.image.rows;
        cols = s.image.cols;
        channels = s.image.channels;
        check(rows % 4 == 0, "load_dataset: rows must be divisible by 4, got " +
                                 std::to_string(rows) + " in " + s.id);
    } else {
        check(s.image.rows == rows && s.image.cols == cols && s.image.channels == channels,
              "load_dataset: non-uniform image dimensions at " + s.id);
    }
    return s;
}

}  // namespace

DatasetSplit load_dataset(const DatasetConfig& cfg) {
    check(cfg.train_frac > 0.0 && cfg.val_frac >= 0.0 && cfg.train_frac + cfg.val_frac <= 1.0,
          "load_dataset: bad split fractions");
    auto classes = scan_classes(cfg);

    DatasetSplit out;
    out.name = cfg.name;
    out.class_count = static_cast<int>(classes.size());
    for (const auto& cd : classes) out.class_names.push_back(cd.name);

    int rows = 0, cols = 0, channels = 0;
    for (int label = 0; label < out.class_count; ++label) {
        auto& cd = classes[label];
        // per-class shuffle under a per-class derived stream keeps the split
        // independent of how many classes precede it
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(label)));
        std::vector<std::string> files = cd.files;
        rng.shuffle(files);
        int take = cfg.per_class > 0 ? std::min<int>(cfg.per_class, files.size())
                                     : static_cast<int>(files.size());
        int n_train = static_cast<int>(take * cfg.train_frac + 0.5);
        int n_val = static_cast<int>(take * cfg.val_frac + 0.5);
        if (n_train + n_val > take) n_val = take - n_train;
        for (int i = 0; i < take; ++i) {
            auto s = load_sample(cfg, cd.name, label, files[i], rows, cols, channels);
            if (i < n_train)
                out.train.push_back(std::move(s));
            else if (i < n_train + n_val)
                out.val.push_back(std::move(s));
            else
                out.test.push_back(std::move(s));
        }
    }
    return out;
}

void save_split_manifest(const DatasetSplit& split, const std::string& path) {
    std::ofstream f(path);
    check(f.good(), "save_split_manifest: cannot write " + path);
    f << "sample_id\tsplit\n";
    for (const auto& s : split.train) f << s.id << "\ttrain\n";
    for (const auto& s : split.val) f << s.id << "\tval\n";
    for (const auto& s : split.test) f << s.id << "\ttest\n";
}

std::map<std::string, std::string> load_split_manifest(const std::string& path) {
    std::ifstream f(path);
    check(f.good(), "load_split_manifest: cannot read " + path);
    std::map<std::string, std::string> m;
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        auto tab = line.find('\t');
        if (tab == std::string::npos) continue;
        m[line.substr(0, tab)] = line.substr(tab + 1);
    }
    return m;
}

DatasetSplit load_dataset_with_manifest(const DatasetConfig& cfg, const std::string& manifest_path) {
    auto assignment = load_split_manifest(manifest_path);
    auto classes = scan_classes(cfg);

    DatasetSplit out;
    out.name = cfg.name;
    out.class_count = static_cast<int>(classes.size());
    for (const auto& cd : classes) out.class_names.push_back(cd.name);

    int rows = 0, cols = 0, channels = 0;
    for (int label = 0; label < out.class_count; ++label) {
        for (const auto& file : classes[label].files) {
            auto it = assignment.find(classes[label].name + "/" + file);
            if (it == assignment.end()) continue;
            auto s = load_sample(cfg, classes[label].name, label, file, rows, cols, channels);
            if (it->second == "train")
                out.train.push_back(std::move(s));
            else if (it->second == "val")
                out.val.push_back(std::move(s));
            else if (it->second == "test")
                out.test.push_back(std::move(s));
            else
                check(false, "load_dataset_with_manifest: unknown split '" + it->second + "'");
        }
    }
    return out;
}

}  // namespace mvdet
