#pragma once

#include <cstdint>

#include "partco/matrix.hpp"

namespace partco {

struct ViewPair {
    DenseMatrix a, b;
};

// Feature-space augmentation: per-view Gaussian noise with sigma =
// strength * per-dim std of the input rows, plus independent per-view patch
// dropout at rate 0.1 (dropped rows become the input's row mean). A strength
// of exactly 0 returns two untouched copies.
ViewPair augment_views(const DenseMatrix& features, double strength, std::uint64_t seed);

inline constexpr double kPatchDropoutRate = 0.1;

}  // namespace partco
