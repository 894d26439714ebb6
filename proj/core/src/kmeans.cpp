#include "partco/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "partco/rng.hpp"

namespace partco {

std::size_t nearest_centroid(std::span<const double> point, const DenseMatrix& centroids) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
        const double d = squared_distance(point, centroids.row(c));
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

namespace {

// k-means++ seeding: first center uniform, then D^2-weighted draws. When all
// remaining squared distances are zero (duplicate-heavy data) the first
// not-yet-chosen row is taken.
DenseMatrix plus_plus_init(const DenseMatrix& x, std::size_t k, std::mt19937_64& rng) {
    const std::size_t n = x.rows();
    const std::size_t dim = x.cols();
    DenseMatrix centers(k, dim);
    std::vector<bool> chosen(n, false);

    std::uniform_int_distribution<std::size_t> uni(0, n - 1);
    std::size_t first = uni(rng);
    chosen[first] = true;
    for (std::size_t j = 0; j < dim; ++j) centers(0, j) = x(first, j);

    std::vector<double> dist2(n);
    for (std::size_t i = 0; i < n; ++i) dist2[i] = squared_distance(x.row(i), centers.row(0));

    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (!chosen[i]) total += dist2[i];

        std::size_t pick = n;
        if (total > 0.0) {
            std::uniform_real_distribution<double> ureal(0.0, total);
            double target = ureal(rng);
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (chosen[i]) continue;
                acc += dist2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
            if (pick == n) {  // float accumulation slack: take the last candidate
                for (std::size_t i = n; i-- > 0;)
                    if (!chosen[i]) {
                        pick = i;
                        break;
                    }
            }
        } else {
            for (std::size_t i = 0; i < n; ++i)
                if (!chosen[i]) {
                    pick = i;
                    break;
                }
        }
        chosen[pick] = true;
        for (std::size_t j = 0; j < dim; ++j) centers(c, j) = x(pick, j);
        for (std::size_t i = 0; i < n; ++i)
            dist2[i] = std::min(dist2[i], squared_distance(x.row(i), centers.row(c)));
    }
    return centers;
}

}  // namespace

KMeansResult kmeans(const DenseMatrix& x, std::size_t k, std::uint64_t seed,
                    const KMeansParams& params) {
    const std::size_t n = x.rows();
    const std::size_t dim = x.cols();
    if (k == 0) throw ArgumentError("kmeans: k must be at least 1");
    if (k > n)
        throw ArgumentError("kmeans: k=" + std::to_string(k) + " exceeds row count " +
                            std::to_string(n));
    x.require_finite("kmeans");

    std::mt19937_64 rng = make_rng(seed);
    KMeansResult result;
    result.centroids = plus_plus_init(x, k, rng);
    result.assignments.assign(n, 0);

    std::vector<double> dist_to_assigned(n, 0.0);
    std::vector<std::size_t> counts(k, 0);
    DenseMatrix sums(k, dim);

    for (std::size_t iter = 0; iter < params.max_iter; ++iter) {
        result.iterations = iter + 1;

        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = nearest_centroid(x.row(i), result.centroids);
            result.assignments[i] = c;
            dist_to_assigned[i] = squared_distance(x.row(i), result.centroids.row(c));
            inertia += dist_to_assigned[i];
        }
        result.inertia = inertia;
        result.inertia_history.push_back(inertia);

        std::fill(counts.begin(), counts.end(), 0);
        std::fill(sums.data().begin(), sums.data().end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = result.assignments[i];
            ++counts[c];
            auto r = x.row(i);
            for (std::size_t j = 0; j < dim; ++j) sums(c, j) += r[j];
        }

        // Re-seed empty clusters from the worst-served points, one point each.
        std::vector<bool> taken(n, false);
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (taken[i]) continue;
                if (dist_to_assigned[i] > far_d) {
                    far_d = dist_to_assigned[i];
                    far = i;
                }
            }
            taken[far] = true;
            counts[c] = 1;
            auto r = x.row(far);
            for (std::size_t j = 0; j < dim; ++j) sums(c, j) = r[j];
        }

        double max_shift2 = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            double shift2 = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                const double nc = sums(c, j) / static_cast<double>(counts[c]);
                const double dj = nc - result.centroids(c, j);
                shift2 += dj * dj;
                result.centroids(c, j) = nc;
            }
            max_shift2 = std::max(max_shift2, shift2);
        }
        if (std::sqrt(max_shift2) < params.tol) break;
    }

    // Final assignment pass against the converged centroids.
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = nearest_centroid(x.row(i), result.centroids);
        result.assignments[i] = c;
        inertia += squared_distance(x.row(i), result.centroids.row(c));
    }
    result.inertia = inertia;
    result.inertia_history.push_back(inertia);
    return result;
}

}  // namespace partco
