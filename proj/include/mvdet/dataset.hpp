#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "mvdet/image.hpp"

namespace mvdet {

struct DatasetConfig {
    std::string root;          // directory with one sub-directory per class
    int class_count = 0;       // expected number of classes (0 = take what is there)
    int per_class = 0;         // cap per class before splitting (0 = all)
    double train_frac = 0.8;
    double val_frac = 0.1;     // test gets the remainder
    std::uint64_t seed = 7;
    std::string name = "dataset";
};

// Per-class directories of PNG images -> deterministic train/val/test split.
// Same config + seed reloads byte-identically. Rejects non-uniform image
// dimensions, rows not divisible by 4, and missing class directories.
DatasetSplit load_dataset(const DatasetConfig& cfg);

// text table: sample-id <TAB> split
void save_split_manifest(const DatasetSplit& split, const std::string& path);

// map sample-id -> "train"/"val"/"test"
std::map<std::string, std::string> load_split_manifest(const std::string& path);

// as load_dataset but assignments come from an explicit manifest
DatasetSplit load_dataset_with_manifest(const DatasetConfig& cfg, const std::string& manifest_path);

}  // namespace mvdet
