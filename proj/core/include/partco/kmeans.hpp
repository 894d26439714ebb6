#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "partco/matrix.hpp"

namespace partco {

struct KMeansResult {
    DenseMatrix centroids;             // k x dim
    std::vector<std::size_t> assignments;  // per row, in [0, k)
    double inertia = 0.0;              // sum of squared distances to assigned centroid
    std::size_t iterations = 0;
    std::vector<double> inertia_history;  // inertia after each Lloyd update
};

struct KMeansParams {
    std::size_t max_iter = 300;
    double tol = 1e-6;  // max centroid shift below which Lloyd stops
};

// Lloyd's algorithm with k-means++ seeding. Deterministic given (x, k, seed):
// the seed drives the k-means++ stream exclusively. Equidistant points go to
// the lowest-index centroid; clusters that empty out are re-seeded to the
// point currently farthest from its assigned centroid.
KMeansResult kmeans(const DenseMatrix& x, std::size_t k, std::uint64_t seed,
                    const KMeansParams& params = {});

// Index of the nearest centroid row (ties to the lowest index).
std::size_t nearest_centroid(std::span<const double> point, const DenseMatrix& centroids);

}  // namespace partco
