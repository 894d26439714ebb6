#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "partco/hungarian.hpp"
#include "partco/kmeans.hpp"
#include "partco/pca.hpp"
#include "partco/schedule.hpp"

using namespace partco;

namespace {

DenseMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                          double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, scale);
    DenseMatrix m(rows, cols);
    for (double& v : m.data()) v = gauss(rng);
    return m;
}

// Independent eigensolver oracle: power iteration with deflation on the
// uncentered Gram matrix (different algorithm family from the implementation).
struct PowerOracle {
    std::vector<double> eigenvalues;
    DenseMatrix vectors;  // d x q
};

PowerOracle power_iteration_oracle(const DenseMatrix& x, std::size_t q, bool centered) {
    const std::size_t n = x.rows(), d = x.cols();
    std::vector<double> mean(d, 0.0);
    if (centered) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) mean[j] += x(i, j);
        for (double& m : mean) m /= static_cast<double>(n);
    }
    DenseMatrix gram(d, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b)
                gram(a, b) += (x(i, a) - mean[a]) * (x(i, b) - mean[b]);
    for (double& v : gram.data()) v /= static_cast<double>(n);

    PowerOracle out;
    out.vectors = DenseMatrix(d, q);
    std::mt19937_64 rng(12345);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t k = 0; k < q; ++k) {
        std::vector<double> v(d);
        for (double& e : v) e = gauss(rng);
        normalize_inplace(v);
        double lambda = 0.0;
        for (int iter = 0; iter < 20000; ++iter) {
            std::vector<double> w(d, 0.0);
            for (std::size_t a = 0; a < d; ++a)
                for (std::size_t b = 0; b < d; ++b) w[a] += gram(a, b) * v[b];
            lambda = norm2(w);
            if (lambda == 0.0) break;
            for (std::size_t a = 0; a < d; ++a) v[a] = w[a] / lambda;
        }
        out.eigenvalues.push_back(lambda);
        for (std::size_t a = 0; a < d; ++a) out.vectors(a, k) = v[a];
        // Deflate: gram -= lambda v v^T
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) gram(a, b) -= lambda * v[a] * v[b];
    }
    return out;
}

Assignment brute_force_assignment(const DenseMatrix& profit) {
    const std::size_t n = profit.rows();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Assignment best;
    best.total_profit = -1e300;
    do {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += profit(i, perm[i]);
        if (total > best.total_profit) {
            best.total_profit = total;
            best.permutation = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

}  // namespace

TEST_CASE("pca uncentered matches hand eigendecomposition") {
    const DenseMatrix x = DenseMatrix::from_rows({{1, 0}, {-1, 0}, {2, 0}, {-2, 0}});
    const PcaResult r = pca_top_components(x, 1, false);
    CHECK(r.eigenvalues[0] == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(std::abs(r.components(0, 0)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(r.components(1, 0)) < 1e-10);
}

TEST_CASE("pca centered on constant rows gives zero eigenvalue") {
    const DenseMatrix x = DenseMatrix::from_rows({{3, 4}, {3, 4}, {3, 4}});
    const PcaResult r = pca_top_components(x, 1, true);
    CHECK(r.eigenvalues[0] == 0.0);
    CHECK(r.rank_deficient);
}

TEST_CASE("pca matches power-iteration oracle on random matrices") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const DenseMatrix x = random_matrix(50, 6, seed);
        for (bool centered : {false, true}) {
            const PcaResult r = pca_top_components(x, 3, centered);
            const PowerOracle oracle = power_iteration_oracle(x, 3, centered);
            for (std::size_t j = 0; j < 3; ++j) {
                double cos = 0.0;
                for (std::size_t a = 0; a < 6; ++a) cos += r.components(a, j) * oracle.vectors(a, j);
                CHECK(std::abs(cos) > 1.0 - 1e-10);
                CHECK(r.eigenvalues[j] ==
                      doctest::Approx(oracle.eigenvalues[j]).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("pca components are orthonormal and eigenvalues nonincreasing") {
    const DenseMatrix x = random_matrix(40, 8, 7);
    const PcaResult r = pca_top_components(x, 5, true);
    for (std::size_t a = 0; a < 5; ++a) {
        for (std::size_t b = 0; b < 5; ++b) {
            double d = 0.0;
            for (std::size_t i = 0; i < 8; ++i) d += r.components(i, a) * r.components(i, b);
            CHECK(std::abs(d - (a == b ? 1.0 : 0.0)) < 1e-10);
        }
    }
    for (std::size_t j = 1; j < 5; ++j) CHECK(r.eigenvalues[j] <= r.eigenvalues[j - 1] + 1e-12);
}

TEST_CASE("pca reconstruction error never increases with q") {
    const DenseMatrix x = random_matrix(30, 6, 11);
    double prev = 1e300;
    for (std::size_t q = 1; q <= 6; ++q) {
        const PcaResult r = pca_top_components(x, q, true);
        std::vector<double> mean(6, 0.0);
        for (std::size_t i = 0; i < 30; ++i)
            for (std::size_t j = 0; j < 6; ++j) mean[j] += x(i, j) / 30.0;
        double err = 0.0;
        for (std::size_t i = 0; i < 30; ++i) {
            std::vector<double> c(6), rec(6, 0.0);
            for (std::size_t j = 0; j < 6; ++j) c[j] = x(i, j) - mean[j];
            for (std::size_t k = 0; k < q; ++k) {
                double proj = 0.0;
                for (std::size_t j = 0; j < 6; ++j) proj += c[j] * r.components(j, k);
                for (std::size_t j = 0; j < 6; ++j) rec[j] += proj * r.components(j, k);
            }
            for (std::size_t j = 0; j < 6; ++j) err += (c[j] - rec[j]) * (c[j] - rec[j]);
        }
        CHECK(err <= prev + 1e-9);
        prev = err;
    }
}

TEST_CASE("pca uses the row Gram path when n < d") {
    const DenseMatrix x = random_matrix(5, 12, 21);
    const PcaResult r = pca_top_components(x, 2, false);
    const PowerOracle oracle = power_iteration_oracle(x, 2, false);
    for (std::size_t j = 0; j < 2; ++j) {
        double cos = 0.0;
        for (std::size_t a = 0; a < 12; ++a) cos += r.components(a, j) * oracle.vectors(a, j);
        CHECK(std::abs(cos) > 1.0 - 1e-9);
    }
}

TEST_CASE("pca rejects bad arguments") {
    const DenseMatrix x = random_matrix(4, 3, 1);
    CHECK_THROWS_AS(pca_top_components(x, 4, false), DimensionError);
    CHECK_THROWS_AS(pca_top_components(DenseMatrix(1, 3, 1.0), 1, false), ArgumentError);
}

TEST_CASE("kmeans with k=1 returns the column mean") {
    const DenseMatrix x = random_matrix(17, 4, 3);
    const KMeansResult r = kmeans(x, 1, 42);
    for (std::size_t j = 0; j < 4; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < 17; ++i) mean += x(i, j) / 17.0;
        CHECK(r.centroids(0, j) == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("kmeans separates two blobs exactly") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> gauss(0.0, 0.3);
    DenseMatrix x(40, 2);
    for (std::size_t i = 0; i < 20; ++i) {
        x(i, 0) = gauss(rng);
        x(i, 1) = gauss(rng);
        x(20 + i, 0) = 10.0 + gauss(rng);
        x(20 + i, 1) = 10.0 + gauss(rng);
    }
    const KMeansResult r = kmeans(x, 2, 9);
    for (std::size_t i = 1; i < 20; ++i) CHECK(r.assignments[i] == r.assignments[0]);
    for (std::size_t i = 21; i < 40; ++i) CHECK(r.assignments[i] == r.assignments[20]);
    CHECK(r.assignments[0] != r.assignments[20]);

    // Within-blob sum of squares, independently accumulated.
    double expected = 0.0;
    for (std::size_t blob = 0; blob < 2; ++blob) {
        std::vector<double> mean(2, 0.0);
        for (std::size_t i = 0; i < 20; ++i)
            for (std::size_t j = 0; j < 2; ++j) mean[j] += x(blob * 20 + i, j) / 20.0;
        for (std::size_t i = 0; i < 20; ++i)
            for (std::size_t j = 0; j < 2; ++j) {
                const double dlt = x(blob * 20 + i, j) - mean[j];
                expected += dlt * dlt;
            }
    }
    CHECK(r.inertia == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("kmeans with k equal to rows is a perfect fit") {
    const DenseMatrix x = random_matrix(9, 3, 77);
    const KMeansResult r = kmeans(x, 9, 1);
    CHECK(r.inertia == doctest::Approx(0.0).epsilon(1e-18));
    std::vector<bool> used(9, false);
    for (std::size_t a : r.assignments) used[a] = true;
    CHECK(std::all_of(used.begin(), used.end(), [](bool b) { return b; }));
}

TEST_CASE("kmeans assignments are exactly nearest-centroid") {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
        const DenseMatrix x = random_matrix(60, 5, seed * 13);
        const KMeansResult r = kmeans(x, 6, seed);
        for (std::size_t i = 0; i < x.rows(); ++i)
            CHECK(r.assignments[i] == nearest_centroid(x.row(i), r.centroids));
    }
}

TEST_CASE("kmeans inertia is nonincreasing across Lloyd iterations") {
    const DenseMatrix x = random_matrix(80, 4, 99);
    const KMeansResult r = kmeans(x, 5, 3);
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
        CHECK(r.inertia_history[i] <= r.inertia_history[i - 1] + 1e-9);
}

TEST_CASE("kmeans is deterministic and validates k") {
    const DenseMatrix x = random_matrix(20, 3, 8);
    const KMeansResult a = kmeans(x, 4, 5);
    const KMeansResult b = kmeans(x, 4, 5);
    CHECK(a.assignments == b.assignments);
    CHECK(a.centroids == b.centroids);
    CHECK(a.inertia == b.inertia);
    CHECK_THROWS_AS(kmeans(x, 21, 5), ArgumentError);
    CHECK_THROWS_AS(kmeans(x, 0, 5), ArgumentError);
}

TEST_CASE("hungarian identity profit matrix") {
    DenseMatrix profit(4, 4);
    for (std::size_t i = 0; i < 4; ++i) profit(i, i) = 1.0;
    const Assignment a = hungarian_max(profit);
    CHECK(a.total_profit == doctest::Approx(4.0));
    for (std::size_t i = 0; i < 4; ++i) CHECK(a.permutation[i] == i);
}

TEST_CASE("hungarian 2x2 enumerated case") {
    const DenseMatrix profit = DenseMatrix::from_rows({{2, 1}, {1, 3}});
    const Assignment a = hungarian_max(profit);
    CHECK(a.total_profit == doctest::Approx(5.0));
    CHECK(a.permutation[0] == 0);
    CHECK(a.permutation[1] == 1);
}

TEST_CASE("hungarian matches factorial brute force on random matrices") {
    std::mt19937_64 rng(1234);
    std::uniform_int_distribution<int> val(0, 50);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 2 + trial % 6;  // up to 7x7
        DenseMatrix profit(n, n);
        for (double& v : profit.data()) v = static_cast<double>(val(rng));
        const Assignment fast = hungarian_max(profit);
        const Assignment brute = brute_force_assignment(profit);
        CHECK(fast.total_profit == doctest::Approx(brute.total_profit).epsilon(1e-12));
        // Optimal value must also be achieved by the returned permutation.
        double check = 0.0;
        for (std::size_t i = 0; i < n; ++i) check += profit(i, fast.permutation[i]);
        CHECK(check == doctest::Approx(fast.total_profit));
    }
}

TEST_CASE("hungarian rejects non-square input") {
    CHECK_THROWS_AS(hungarian_max(DenseMatrix(2, 3, 1.0)), DimensionError);
}

TEST_CASE("cosine_lr endpoints and midpoint") {
    CHECK(cosine_lr(0, 100, 0.1, 0.001) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(cosine_lr(100, 100, 0.1, 0.001) == doctest::Approx(0.001).epsilon(1e-12));
    CHECK(cosine_lr(50, 100, 0.1, 0.001) == doctest::Approx(0.0505).epsilon(1e-12));
}

TEST_CASE("cosine_lr is monotone nonincreasing") {
    double prev = 1e300;
    for (std::size_t s = 0; s <= 200; ++s) {
        const double lr = cosine_lr(s, 200, 0.1, 0.001);
        CHECK(lr <= prev + 1e-15);
        prev = lr;
    }
}

TEST_CASE("cosine_lr argument errors") {
    CHECK_THROWS_AS(cosine_lr(0, 0, 0.1, 0.001), ArgumentError);
    CHECK_THROWS_AS(cosine_lr(5, 4, 0.1, 0.001), ArgumentError);
    CHECK_THROWS_AS(cosine_lr(0, 10, 0.001, 0.1), ArgumentError);
}
