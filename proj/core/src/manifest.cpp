#include "partco/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "partco/rng.hpp"

namespace partco {

std::size_t DatasetManifest::num_labeled() const {
    std::size_t n = 0;
    for (const auto& e : entries)
        if (e.labeled) ++n;
    return n;
}

void DatasetManifest::finalize() {
    old_classes.clear();
    new_classes.clear();
    std::unordered_set<std::string> seen;
    seen.reserve(entries.size());
    for (const auto& e : entries) {
        if (!seen.insert(e.image_id).second)
            throw ValidationError("manifest: duplicate image_id '" + e.image_id + "'");
        if (e.labeled && e.class_id < 0)
            throw ValidationError("manifest: labeled row '" + e.image_id +
                                  "' has no class id");
        if (e.class_id < -1)
            throw ValidationError("manifest: class_id below -1 for '" + e.image_id + "'");
        if (e.labeled) old_classes.insert(e.class_id);
    }
    for (const auto& e : entries)
        if (e.class_id >= 0 && !old_classes.count(e.class_id)) new_classes.insert(e.class_id);
    if (entries.empty()) throw ValidationError("manifest: no data rows");
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("load_manifest: cannot open " + path.string());

    std::string line;
    if (!std::getline(is, line)) throw ValidationError("manifest: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "image_id,class_id,labeled")
        throw ValidationError("manifest: bad header '" + line + "'");

    DatasetManifest m;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        ManifestEntry e;
        std::string class_field, labeled_field;
        if (!std::getline(ss, e.image_id, ',') || !std::getline(ss, class_field, ',') ||
            !std::getline(ss, labeled_field))
            throw ValidationError("manifest: malformed row at line " + std::to_string(lineno));
        try {
            e.class_id = std::stoi(class_field);
            const int lab = std::stoi(labeled_field);
            if (lab != 0 && lab != 1)
                throw ValidationError("manifest: labeled flag must be 0 or 1 at line " +
                                      std::to_string(lineno));
            e.labeled = lab == 1;
        } catch (const std::invalid_argument&) {
            throw ValidationError("manifest: non-numeric field at line " + std::to_string(lineno));
        } catch (const std::out_of_range&) {
            throw ValidationError("manifest: numeric overflow at line " + std::to_string(lineno));
        }
        m.entries.push_back(std::move(e));
    }
    m.finalize();
    return m;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("write_manifest: cannot open " + path.string());
    os << "image_id,class_id,labeled\n";
    for (const auto& e : manifest.entries)
        os << e.image_id << ',' << e.class_id << ',' << (e.labeled ? 1 : 0) << '\n';
    if (!os) throw IoError("write_manifest: write failed for " + path.string());
}

std::vector<std::string> sample_label_subset(const DatasetManifest& manifest,
                                             std::size_t per_class, std::uint64_t seed) {
    if (per_class == 0) throw ArgumentError("sample_label_subset: per_class must be >= 1");

    // Labeled row indices per old class, in row order; std::map fixes the
    // class iteration order independent of hashing.
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const auto& e = manifest.entries[i];
        if (e.labeled) by_class[e.class_id].push_back(i);
    }

    std::mt19937_64 rng = make_rng(mix_seed(seed, 0x7375627365ULL));
    std::vector<std::string> ids;
    for (const auto& [cls, rows] : by_class) {
        if (rows.size() < per_class)
            throw ValidationError("sample_label_subset: class " + std::to_string(cls) +
                                  " has only " + std::to_string(rows.size()) +
                                  " labeled images, need " + std::to_string(per_class));
        std::vector<std::size_t> pool = rows;
        for (std::size_t j = 0; j < per_class; ++j) {
            std::uniform_int_distribution<std::size_t> pick(j, pool.size() - 1);
            std::swap(pool[j], pool[pick(rng)]);
            ids.push_back(manifest.entries[pool[j]].image_id);
        }
    }
    return ids;
}

std::vector<std::size_t> manifest_indices(const DatasetManifest& manifest,
                                          const std::vector<std::string>& image_ids) {
    std::unordered_map<std::string, std::size_t> index;
    index.reserve(manifest.entries.size());
    for (std::size_t i = 0; i < manifest.entries.size(); ++i)
        index.emplace(manifest.entries[i].image_id, i);
    std::vector<std::size_t> rows;
    rows.reserve(image_ids.size());
    for (const auto& id : image_ids) {
        auto it = index.find(id);
        if (it == index.end())
            throw ValidationError("manifest_indices: unknown image_id '" + id + "'");
        rows.push_back(it->second);
    }
    return rows;
}

}  // namespace partco
