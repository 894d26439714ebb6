#include "partco/part_labels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>

#include "partco/kmeans.hpp"
#include "partco/pca.hpp"
#include "partco/rng.hpp"

namespace partco {

namespace {

constexpr char kMagic[4] = {'P', 'L', 'B', 'L'};
constexpr std::uint32_t kVersion = 1;

DenseMatrix flatten_patches(const FeatureSet& fs) {
    DenseMatrix m(fs.num_images * fs.patches_per_image, fs.dim);
    std::memcpy(m.data().data(), fs.data.data(), fs.data.size() * sizeof(double));
    return m;
}

template <typename Fn>
auto run_stage(const char* stage, Fn&& fn) {
    try {
        return fn();
    } catch (const DegenerateDataError& e) {
        throw DegenerateDataError(std::string(stage) + ": " + e.what());
    } catch (const ArgumentError& e) {
        throw ArgumentError(std::string(stage) + ": " + e.what());
    } catch (const ValidationError& e) {
        throw ValidationError(std::string(stage) + ": " + e.what());
    }
}

}  // namespace

double ObjectProjection::normalized_score(std::span<const double> patch) const {
    const double range = score_max - score_min;
    const double s = (oriented_score(patch) - score_min) / range;
    return std::clamp(s, 0.0, 1.0);
}

void PartLabelStore::validate() const {
    for (const auto& level : levels) {
        if (level.labels.size() != static_cast<std::size_t>(num_images) * patches_per_image)
            throw ValidationError("PartLabelStore: label array length mismatch");
        for (std::uint16_t l : level.labels)
            if (l > level.label_count)
                throw ValidationError("PartLabelStore: label id exceeds label_count");
        if (level.order == 2) {
            if (level.parent_of.size() != level.label_count)
                throw ValidationError("PartLabelStore: parent_of length mismatch");
            for (std::uint32_t p : level.parent_of)
                if (p == 0) throw ValidationError("PartLabelStore: child without parent");
        }
    }
}

ObjectProjection fit_object_projection(const FeatureSet& subset) {
    if (subset.num_images * subset.patches_per_image < 2)
        throw ArgumentError("fit_object_projection: need at least 2 patches");
    const DenseMatrix flat = flatten_patches(subset);

    const PcaResult pca = pca_top_components(flat, 1, /*centered=*/false);

    ObjectProjection proj;
    proj.w_obj.resize(subset.dim);
    for (std::size_t j = 0; j < subset.dim; ++j) proj.w_obj[j] = pca.components(j, 0);

    // Raw projections; orientation picked so the distribution skews positive
    // (foreground is the small high-scoring tail).
    const std::size_t n = flat.rows();
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i)
        scores[i] = dot(flat.row(i), std::span<const double>(proj.w_obj));

    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= static_cast<double>(n);
    double m2 = 0.0, m3 = 0.0;
    for (double s : scores) {
        const double c = s - mean;
        m2 += c * c;
        m3 += c * c * c;
    }
    proj.orientation_sign = (m3 < 0.0) ? -1.0 : 1.0;

    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double s : scores) {
        const double o = proj.orientation_sign * s;
        lo = std::min(lo, o);
        hi = std::max(hi, o);
    }
    proj.score_min = lo;
    proj.score_max = hi;

    const double scale = std::max(std::abs(lo), std::abs(hi));
    if (!(hi - lo > std::max(scale, 1.0) * 1e-12) || m2 == 0.0)
        throw DegenerateDataError("fit_object_projection: projections carry no variation");
    return proj;
}

PatchMasks objectness_mask(const FeatureSet& fs, const ObjectProjection& proj, double tau_obj) {
    if (fs.dim != proj.w_obj.size())
        throw DimensionError("objectness_mask: feature dim does not match projection");
    PatchMasks masks(fs.num_images, std::vector<std::uint8_t>(fs.patches_per_image, 0));
    for (std::size_t i = 0; i < fs.num_images; ++i)
        for (std::size_t p = 0; p < fs.patches_per_image; ++p)
            masks[i][p] = proj.normalized_score(fs.patch(i, p)) > tau_obj ? 1 : 0;
    return masks;
}

FineProjection fit_finegrained_projection(const FeatureSet& fs, const PatchMasks& masks) {
    std::size_t fg = 0;
    for (const auto& m : masks)
        for (std::uint8_t b : m) fg += b;
    if (fg < 4)
        throw DegenerateDataError("fit_finegrained_projection: only " + std::to_string(fg) +
                                  " foreground patches, need at least 4");

    DenseMatrix x(fg, fs.dim);
    std::size_t r = 0;
    for (std::size_t i = 0; i < fs.num_images; ++i)
        for (std::size_t p = 0; p < fs.patches_per_image; ++p) {
            if (!masks[i][p]) continue;
            auto src = fs.patch(i, p);
            auto dst = x.row(r++);
            std::copy(src.begin(), src.end(), dst.begin());
        }

    const PcaResult pca = pca_top_components(x, 3, /*centered=*/true);
    FineProjection out;
    out.w_fg = pca.components;
    out.rank_deficient = pca.rank_deficient;
    return out;
}

DenseMatrix finegrained_vectors(const FeatureSet& fs, const PatchMasks& masks,
                                const FineProjection& proj) {
    const std::size_t q = proj.w_fg.cols();
    DenseMatrix out(fs.num_images * fs.patches_per_image, q);
    for (std::size_t i = 0; i < fs.num_images; ++i)
        for (std::size_t p = 0; p < fs.patches_per_image; ++p) {
            if (!masks[i][p]) continue;  // background stays zero
            auto patch = fs.patch(i, p);
            auto row = out.row(i * fs.patches_per_image + p);
            for (std::size_t j = 0; j < q; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < fs.dim; ++c) s += patch[c] * proj.w_fg(c, j);
                row[j] = s;
            }
            normalize_inplace(row);
        }
    return out;
}

namespace {

double clustering_score(const KMeansResult& km) {
    const std::size_t k = km.centroids.rows();
    double min_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j)
            min_dist = std::min(min_dist,
                                std::sqrt(squared_distance(km.centroids.row(i),
                                                           km.centroids.row(j))));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t a : km.assignments) ++counts[a];
    const auto [mn, mx] = std::minmax_element(counts.begin(), counts.end());
    if (*mx == 0) return 0.0;
    const double balance = static_cast<double>(*mn) / static_cast<double>(*mx);
    return min_dist * balance;
}

}  // namespace

KSelection select_k(const DenseMatrix& points, const std::vector<std::size_t>& candidates,
                    std::uint64_t seed) {
    if (candidates.empty()) throw ArgumentError("select_k: empty candidate list");
    for (std::size_t k : candidates) {
        if (k < 2) throw ArgumentError("select_k: candidates must be >= 2");
        if (k > points.rows())
            throw ArgumentError("select_k: candidate k=" + std::to_string(k) +
                                " exceeds point count " + std::to_string(points.rows()));
    }

    KSelection sel;
    sel.scores.reserve(candidates.size());
    double best = -1.0;
    for (std::size_t idx = 0; idx < candidates.size(); ++idx) {
        const KMeansResult km = kmeans(points, candidates[idx], seed);
        const double score = clustering_score(km);
        sel.scores.push_back(score);
        // Strict > keeps the smallest candidate on ties.
        if (score > best) {
            best = score;
            sel.k_star = candidates[idx];
        }
    }
    if (best <= 0.0)
        throw DegenerateDataError("select_k: every candidate scored zero");
    return sel;
}

std::vector<std::uint16_t> assign_part_labels(const DenseMatrix& fg_normalized,
                                              const DenseMatrix& centroids,
                                              const PatchMasks& masks) {
    std::vector<std::uint16_t> labels(fg_normalized.rows(), 0);
    std::size_t row = 0;
    for (const auto& mask : masks)
        for (std::uint8_t bit : mask) {
            if (bit)
                labels[row] = static_cast<std::uint16_t>(
                    1 + nearest_centroid(fg_normalized.row(row), centroids));
            ++row;
        }
    return labels;
}

PartLabelStore refine_second_order(const FeatureSet& fs, const PatchMasks& /*masks*/,
                                   const PartLabelStore& first_order,
                                   const LabelBuildConfig& config, std::uint64_t seed) {
    const PartLevel* parent = first_order.level(1);
    if (!parent) throw ArgumentError("refine_second_order: store lacks a first-order level");

    const std::size_t total = fs.num_images * fs.patches_per_image;
    PartLevel child;
    child.order = 2;
    child.labels.assign(total, 0);

    std::vector<std::vector<double>> child_centroids;  // rows of the merged centroid table

    for (std::uint32_t part = 1; part <= parent->label_count; ++part) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < total; ++i)
            if (parent->labels[i] == part) members.push_back(i);

        auto emit_single_child = [&]() {
            const std::uint32_t id = static_cast<std::uint32_t>(child_centroids.size() + 1);
            child_centroids.push_back(std::vector<double>(3, 0.0));
            child.parent_of.push_back(part);
            for (std::size_t i : members) child.labels[i] = static_cast<std::uint16_t>(id);
        };

        std::vector<std::size_t> cands;
        for (std::size_t k : config.k_candidates_second)
            if (k >= 2 && k <= members.size()) cands.push_back(k);
        if (members.size() < config.min_cluster_split || cands.empty()) {
            emit_single_child();
            continue;
        }

        // Fresh centered PCA on the raw features of this cluster's members.
        DenseMatrix raw(members.size(), fs.dim);
        for (std::size_t r = 0; r < members.size(); ++r) {
            const std::size_t img = members[r] / fs.patches_per_image;
            const std::size_t patch = members[r] % fs.patches_per_image;
            auto src = fs.patch(img, patch);
            std::copy(src.begin(), src.end(), raw.row(r).begin());
        }

        try {
            const PcaResult pca = pca_top_components(raw, 3, /*centered=*/true);
            DenseMatrix proj(members.size(), 3);
            for (std::size_t r = 0; r < members.size(); ++r) {
                for (std::size_t j = 0; j < 3; ++j) {
                    double s = 0.0;
                    for (std::size_t c = 0; c < fs.dim; ++c)
                        s += raw(r, c) * pca.components(c, j);
                    proj(r, j) = s;
                }
                normalize_inplace(proj.row(r));
            }

            const std::uint64_t sub_seed = mix_seed(seed, 0x327264ULL, part);
            const KSelection sel = select_k(proj, cands, sub_seed);
            const KMeansResult km = kmeans(proj, sel.k_star, sub_seed);

            const std::uint32_t base = static_cast<std::uint32_t>(child_centroids.size());
            for (std::size_t c = 0; c < km.centroids.rows(); ++c) {
                std::vector<double> row(km.centroids.row(c).begin(), km.centroids.row(c).end());
                child_centroids.push_back(std::move(row));
                child.parent_of.push_back(part);
            }
            for (std::size_t r = 0; r < members.size(); ++r)
                child.labels[members[r]] =
                    static_cast<std::uint16_t>(base + 1 + km.assignments[r]);
        } catch (const DegenerateDataError&) {
            // No usable sub-structure in this cluster: keep it whole.
            emit_single_child();
        }
    }

    child.label_count = static_cast<std::uint32_t>(child_centroids.size());
    child.centroids = DenseMatrix(child_centroids.size(), 3);
    for (std::size_t r = 0; r < child_centroids.size(); ++r)
        std::copy(child_centroids[r].begin(), child_centroids[r].end(),
                  child.centroids.row(r).begin());

    PartLabelStore out;
    out.order = LabelOrder::Second;
    out.num_images = first_order.num_images;
    out.patches_per_image = first_order.patches_per_image;
    out.levels.push_back(child);
    return out;
}

PartLabelStore build_labels(const FeatureSet& fs, const DatasetManifest& manifest,
                            LabelOrder order, const LabelBuildConfig& config,
                            std::uint64_t seed,
                            const std::optional<std::filesystem::path>& out_path) {
    fs.validate();
    if (manifest.size() != fs.num_images)
        throw ValidationError("build_labels: manifest rows (" +
                              std::to_string(manifest.size()) + ") != feature images (" +
                              std::to_string(fs.num_images) + ")");
    if (config.k_candidates.empty())
        throw ArgumentError("build_labels: empty k candidate list");

    const auto subset_ids = run_stage("sample_label_subset", [&] {
        return sample_label_subset(manifest, config.per_class, seed);
    });
    const auto subset_rows = manifest_indices(manifest, subset_ids);

    FeatureSet subset(subset_rows.size(), fs.patches_per_image, fs.dim);
    for (std::size_t r = 0; r < subset_rows.size(); ++r)
        std::memcpy(subset.data.data() + r * fs.patches_per_image * fs.dim,
                    fs.data.data() + subset_rows[r] * fs.patches_per_image * fs.dim,
                    fs.patches_per_image * fs.dim * sizeof(double));

    const ObjectProjection obj = run_stage("fit_object_projection", [&] {
        return fit_object_projection(subset);
    });
    const PatchMasks masks = run_stage("objectness_mask", [&] {
        return objectness_mask(fs, obj, config.tau_obj);
    });
    const FineProjection fine = run_stage("fit_finegrained_projection", [&] {
        return fit_finegrained_projection(fs, masks);
    });
    const DenseMatrix fg = finegrained_vectors(fs, masks, fine);

    // Cluster only foreground rows; background rows are all-zero and would
    // otherwise form a giant fake cluster.
    std::vector<std::size_t> fg_rows;
    for (std::size_t i = 0; i < fs.num_images; ++i)
        for (std::size_t p = 0; p < fs.patches_per_image; ++p)
            if (masks[i][p]) fg_rows.push_back(i * fs.patches_per_image + p);
    DenseMatrix fg_only(fg_rows.size(), 3);
    for (std::size_t r = 0; r < fg_rows.size(); ++r)
        std::copy(fg.row(fg_rows[r]).begin(), fg.row(fg_rows[r]).end(),
                  fg_only.row(r).begin());

    std::vector<std::size_t> cands;
    for (std::size_t k : config.k_candidates)
        if (k >= 2 && k <= fg_only.rows()) cands.push_back(k);
    if (cands.empty())
        throw DegenerateDataError("select_k: too few foreground patches for any candidate");

    const KSelection sel = run_stage("select_k", [&] { return select_k(fg_only, cands, seed); });
    const KMeansResult km = kmeans(fg_only, sel.k_star, seed);

    PartLevel first;
    first.order = 1;
    first.label_count = static_cast<std::uint32_t>(sel.k_star);
    first.centroids = km.centroids;
    first.labels = assign_part_labels(fg, km.centroids, masks);

    PartLabelStore store;
    store.order = order;
    store.num_images = static_cast<std::uint32_t>(fs.num_images);
    store.patches_per_image = static_cast<std::uint32_t>(fs.patches_per_image);

    if (order == LabelOrder::First || order == LabelOrder::Both)
        store.levels.push_back(first);
    if (order == LabelOrder::Second || order == LabelOrder::Both) {
        PartLabelStore first_store;
        first_store.order = LabelOrder::First;
        first_store.num_images = store.num_images;
        first_store.patches_per_image = store.patches_per_image;
        first_store.levels.push_back(first);
        const PartLabelStore second = run_stage("refine_second_order", [&] {
            return refine_second_order(fs, masks, first_store, config, seed);
        });
        store.levels.push_back(second.levels.front());
    }

    store.validate();
    if (out_path) write_part_labels(store, *out_path);
    return store;
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

std::uint32_t get_u32(std::istream& is, std::size_t& offset, const char* what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (is.gcount() != 4)
        throw FormatError(std::string("truncated while reading ") + what, offset);
    offset += 4;
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t get_u16(std::istream& is, std::size_t& offset, const char* what) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    if (is.gcount() != 2)
        throw FormatError(std::string("truncated while reading ") + what, offset);
    offset += 2;
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

}  // namespace

void write_part_labels(const PartLabelStore& store, const std::filesystem::path& path) {
    store.validate();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("write_part_labels: cannot open " + path.string());
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(store.order));
    put_u32(os, store.num_images);
    put_u32(os, store.patches_per_image);
    put_u32(os, static_cast<std::uint32_t>(store.levels.size()));
    for (const auto& level : store.levels) {
        put_u32(os, level.order);
        put_u32(os, level.label_count);
        put_u32(os, static_cast<std::uint32_t>(level.centroids.cols()));
        for (double v : level.centroids.data()) put_f32(os, static_cast<float>(v));
        if (level.order == 2)
            for (std::uint32_t p : level.parent_of) put_u32(os, p);
    }
    for (const auto& level : store.levels)
        for (std::uint16_t l : level.labels) put_u16(os, l);
    if (!os) throw IoError("write_part_labels: write failed for " + path.string());
}

PartLabelStore read_part_labels(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("read_part_labels: cannot open " + path.string());

    std::size_t offset = 0;
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4) throw FormatError("truncated magic", offset);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad magic, expected PLBL", 0);
    offset += 4;

    const std::uint32_t version = get_u32(is, offset, "version");
    if (version != kVersion)
        throw FormatError("unsupported version " + std::to_string(version), offset - 4);

    PartLabelStore store;
    store.order = static_cast<LabelOrder>(get_u32(is, offset, "order"));
    store.num_images = get_u32(is, offset, "num_images");
    store.patches_per_image = get_u32(is, offset, "patches_per_image");
    const std::uint32_t num_levels = get_u32(is, offset, "level count");

    store.levels.resize(num_levels);
    for (auto& level : store.levels) {
        level.order = get_u32(is, offset, "level order");
        level.label_count = get_u32(is, offset, "label_count");
        const std::uint32_t dim = get_u32(is, offset, "centroid dim");
        level.centroids = DenseMatrix(level.label_count, dim);
        for (double& v : level.centroids.data()) {
            const std::uint32_t bits = get_u32(is, offset, "centroid payload");
            float f;
            std::memcpy(&f, &bits, 4);
            v = static_cast<double>(f);
        }
        if (level.order == 2) {
            level.parent_of.resize(level.label_count);
            for (auto& p : level.parent_of) p = get_u32(is, offset, "parent_of");
        }
    }
    const std::size_t total =
        static_cast<std::size_t>(store.num_images) * store.patches_per_image;
    for (auto& level : store.levels) {
        level.labels.resize(total);
        for (auto& l : level.labels) l = get_u16(is, offset, "label payload");
    }
    store.validate();
    return store;
}

}  // namespace partco
