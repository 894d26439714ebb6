#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "partco/feature_set.hpp"
#include "partco/manifest.hpp"
#include "partco/matrix.hpp"

namespace partco {

// Top uncentered principal direction of the fitting subset, oriented so that
// foreground (the high-scoring minority tail) projects positively, plus the
// subset score range used for min-max normalization at assignment time.
struct ObjectProjection {
    std::vector<double> w_obj;  // unit norm, length d
    double orientation_sign = 1.0;
    double score_min = 0.0;
    double score_max = 0.0;

    double oriented_score(std::span<const double> patch) const {
        return orientation_sign * dot(patch, std::span<const double>(w_obj));
    }
    double normalized_score(std::span<const double> patch) const;
};

// Top-3 centered principal components of the foreground patches.
struct FineProjection {
    DenseMatrix w_fg;  // d x 3, orthonormal columns
    bool rank_deficient = false;
};

enum class LabelOrder : std::uint32_t { First = 1, Second = 2, Both = 3 };

// One granularity level of part labels over the whole dataset.
struct PartLevel {
    std::uint32_t order = 1;   // 1 or 2
    std::uint32_t label_count = 0;  // number of part ids at this level (k*)
    DenseMatrix centroids;     // label_count x dim of the clustering space
    std::vector<std::uint16_t> labels;  // num_images * N, 0 = background
    std::vector<std::uint32_t> parent_of;  // child id (1-based) -> parent id; level 2 only
};

struct PartLabelStore {
    LabelOrder order = LabelOrder::First;
    std::uint32_t num_images = 0;
    std::uint32_t patches_per_image = 0;
    std::vector<PartLevel> levels;  // ascending order

    const PartLevel* level(std::uint32_t order_wanted) const {
        for (const auto& l : levels)
            if (l.order == order_wanted) return &l;
        return nullptr;
    }
    void validate() const;
};

struct LabelBuildConfig {
    std::size_t per_class = 1;       // labeled images per old class for PCA fitting
    double tau_obj = 0.6;            // objectness threshold on normalized scores
    std::vector<std::size_t> k_candidates{2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::vector<std::size_t> k_candidates_second{2, 3, 4, 5, 6};
    std::size_t min_cluster_split = 8;  // first-order clusters below this keep one child
};

using PatchMasks = std::vector<std::vector<std::uint8_t>>;  // per image, N flags

ObjectProjection fit_object_projection(const FeatureSet& subset);
PatchMasks objectness_mask(const FeatureSet& fs, const ObjectProjection& proj, double tau_obj);
FineProjection fit_finegrained_projection(const FeatureSet& fs, const PatchMasks& masks);

// Masked features projected to the fine-grained space and l2-normalized per
// patch; background rows are zero. Rows are image-major, patch-major.
DenseMatrix finegrained_vectors(const FeatureSet& fs, const PatchMasks& masks,
                                const FineProjection& proj);

struct KSelection {
    std::size_t k_star = 0;
    std::vector<double> scores;  // aligned with the candidate list
};

// Sweeps k over candidates, scoring each clustering by
// (min pairwise centroid distance) x (smallest cluster / largest cluster).
KSelection select_k(const DenseMatrix& points, const std::vector<std::size_t>& candidates,
                    std::uint64_t seed);

// 1 + nearest-centroid index for foreground patches; 0 for background.
std::vector<std::uint16_t> assign_part_labels(const DenseMatrix& fg_normalized,
                                              const DenseMatrix& centroids,
                                              const PatchMasks& masks);

PartLabelStore refine_second_order(const FeatureSet& fs, const PatchMasks& masks,
                                   const PartLabelStore& first_order,
                                   const LabelBuildConfig& config, std::uint64_t seed);

// Full pipeline: subset sampling, projections, k selection, label assignment,
// optional second-order refinement. Stage failures are rethrown with the
// stage name prefixed. Persists to `out_path` when given.
PartLabelStore build_labels(const FeatureSet& fs, const DatasetManifest& manifest,
                            LabelOrder order, const LabelBuildConfig& config,
                            std::uint64_t seed,
                            const std::optional<std::filesystem::path>& out_path = {});

// Binary `.plm` container: magic "PLBL", u32 version=1, u32 order code,
// u32 num_images, u32 patches_per_image, u32 level count, then per level
// (u32 order, u32 label_count, u32 dim, f32 centroids, u32 parent_of if
// order 2), then per level u16 little-endian label arrays.
void write_part_labels(const PartLabelStore& store, const std::filesystem::path& path);
PartLabelStore read_part_labels(const std::filesystem::path& path);

}  // namespace partco
