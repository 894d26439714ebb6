#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "partco/errors.hpp"

namespace partco {

struct ManifestEntry {
    std::string image_id;
    int class_id = -1;  // -1 only valid for unlabeled rows (truth withheld)
    bool labeled = false;
};

// Dataset split description. Row i corresponds to image index i of the
// matching FeatureSet. Old classes are those with at least one labeled entry.
struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::set<int> old_classes;
    std::set<int> new_classes;

    std::size_t size() const { return entries.size(); }
    std::size_t num_labeled() const;
    // Distinct known classes, |old ∪ new|.
    std::size_t num_classes() const { return old_classes.size() + new_classes.size(); }

    // Recomputes the Old/New partitions and validates entries.
    void finalize();
};

// CSV with header `image_id,class_id,labeled`, UTF-8, LF line endings.
DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Deterministically picks `per_class` labeled image ids from every old class.
std::vector<std::string> sample_label_subset(const DatasetManifest& manifest,
                                             std::size_t per_class, std::uint64_t seed);

// Row indices of the given image ids, in the order given.
std::vector<std::size_t> manifest_indices(const DatasetManifest& manifest,
                                          const std::vector<std::string>& image_ids);

}  // namespace partco
