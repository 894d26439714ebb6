#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "partco/errors.hpp"
#include "partco/matrix.hpp"

namespace partco {

// Dense per-image patch-token features, image-major then patch-major then
// channel. Values live as float64 in memory and float32 on disk.
struct FeatureSet {
    std::size_t num_images = 0;
    std::size_t patches_per_image = 0;  // must be a perfect square (patch grid)
    std::size_t dim = 0;
    std::vector<double> data;  // num_images * patches_per_image * dim

    FeatureSet() = default;
    FeatureSet(std::size_t m, std::size_t n, std::size_t d)
        : num_images(m), patches_per_image(n), dim(d), data(m * n * d, 0.0) {}

    std::span<double> patch(std::size_t image, std::size_t patch_idx) {
        return {data.data() + (image * patches_per_image + patch_idx) * dim, dim};
    }
    std::span<const double> patch(std::size_t image, std::size_t patch_idx) const {
        return {data.data() + (image * patches_per_image + patch_idx) * dim, dim};
    }

    // All patches of one image as an N x d matrix view copy.
    DenseMatrix image_matrix(std::size_t image) const;

    void validate() const;
};

// Binary `.ptcf` container: magic "PTCF", u32 version=1, u32 num_images,
// u32 patches_per_image, u32 dim, then little-endian float32 payload in
// declared order.
void write_features(const FeatureSet& fs, const std::filesystem::path& path);
FeatureSet read_features(const std::filesystem::path& path);

}  // namespace partco
