#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "partco/feature_set.hpp"
#include "partco/manifest.hpp"
#include "partco/part_labels.hpp"

namespace partco {

// Planted-structure feature generator: a shared object direction u marks
// foreground; part prototypes live in the subspace orthogonal to u with
// class offsets and subpart offsets small enough that the same part stays
// near-identical across classes.
struct SynthConfig {
    std::size_t num_classes = 20;
    std::size_t old_classes = 10;
    std::size_t images_per_class = 30;
    std::size_t grid = 16;  // patch grid side, N = grid*grid
    std::size_t dim = 64;
    std::size_t parts_per_class = 4;
    std::size_t part_vocab_size = 4;
    std::size_t subparts_per_part = 2;
    double noise_sigma = 0.0;
    double occlusion_prob = 0.0;
    double scale_jitter = 0.0;      // part block side scales by 1 +/- jitter per image
    double foreground_fraction = 0.35;
    std::uint64_t seed = 0;

    // Geometry scales. object_strength sizes the +c*u foreground component so
    // the top uncentered principal component aligns with u; offset scales obey
    // class_offset_scale + subpart_scale < 0.5 to keep same-part spread under
    // half the minimum inter-prototype distance.
    double object_strength = 4.0;
    double class_offset_scale = 0.25;
    double subpart_scale = 0.1;

    void validate() const;
};

struct PlantedTruth {
    std::vector<int> class_ids;              // per image
    std::vector<std::uint16_t> part_ids;     // num_images*N, 0 = background
    std::vector<std::uint16_t> subpart_ids;  // global subpart ids, 0 = background
    std::size_t part_vocab = 0;
    std::size_t subpart_vocab = 0;
};

struct SynthOutput {
    FeatureSet features;
    DatasetManifest manifest;
    PlantedTruth truth;
};

SynthOutput generate(const SynthConfig& config);

// fine_grained: one superclass, full part overlap, subtle subparts.
// generic: disjoint part compositions per superclass, strong subparts.
SynthConfig preset(const std::string& name);

// Truth serialized in the `.plm` envelope: level 1 = part ids, level 2 =
// subpart ids with parent_of linking subparts to parts.
PartLabelStore truth_to_store(const PlantedTruth& truth, std::size_t num_images,
                              std::size_t patches_per_image);

}  // namespace partco
