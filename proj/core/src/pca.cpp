#include "partco/pca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace partco {

namespace {

// One cyclic sweep over all off-diagonal pairs; returns the largest
// off-diagonal magnitude seen before rotation.
double jacobi_sweep(DenseMatrix& a, DenseMatrix& v) {
    const std::size_t n = a.rows();
    double max_off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
        for (std::size_t q = p + 1; q < n; ++q) {
            const double apq = a(p, q);
            max_off = std::max(max_off, std::abs(apq));
            if (apq == 0.0) continue;
            const double app = a(p, p);
            const double aqq = a(q, q);
            const double theta = (aqq - app) / (2.0 * apq);
            // Smaller-angle root of t^2 + 2t*theta - 1 = 0.
            const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                             (std::abs(theta) + std::sqrt(theta * theta + 1.0));
            const double c = 1.0 / std::sqrt(t * t + 1.0);
            const double s = t * c;

            for (std::size_t k = 0; k < n; ++k) {
                const double akp = a(k, p);
                const double akq = a(k, q);
                a(k, p) = c * akp - s * akq;
                a(k, q) = s * akp + c * akq;
            }
            for (std::size_t k = 0; k < n; ++k) {
                const double apk = a(p, k);
                const double aqk = a(q, k);
                a(p, k) = c * apk - s * aqk;
                a(q, k) = s * apk + c * aqk;
            }
            for (std::size_t k = 0; k < n; ++k) {
                const double vkp = v(k, p);
                const double vkq = v(k, q);
                v(k, p) = c * vkp - s * vkq;
                v(k, q) = s * vkp + c * vkq;
            }
        }
    }
    return max_off;
}

double frobenius_scale(const DenseMatrix& a) {
    double s = 0.0;
    for (double x : a.data()) s += x * x;
    return std::sqrt(s);
}

}  // namespace

SymmetricEigen jacobi_eigen_symmetric(const DenseMatrix& a_in) {
    if (a_in.rows() != a_in.cols())
        throw DimensionError("jacobi_eigen_symmetric: matrix must be square");
    const std::size_t n = a_in.rows();

    DenseMatrix a = a_in;
    DenseMatrix v(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

    const double scale = frobenius_scale(a);
    const double tol = (scale > 0.0 ? scale : 1.0) * 1e-15;
    constexpr int kMaxSweeps = 64;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        if (jacobi_sweep(a, v) <= tol) break;
    }

    SymmetricEigen out;
    out.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.values[i] = a(i, i);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return out.values[i] > out.values[j]; });

    SymmetricEigen sorted;
    sorted.values.resize(n);
    sorted.vectors = DenseMatrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        sorted.values[j] = out.values[order[j]];
        for (std::size_t i = 0; i < n; ++i) sorted.vectors(i, j) = v(i, order[j]);
    }
    return sorted;
}

PcaResult pca_top_components(const DenseMatrix& x, std::size_t q, bool centered) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    if (n < 2) throw ArgumentError("pca_top_components: need at least 2 rows");
    if (q == 0) throw ArgumentError("pca_top_components: q must be positive");
    if (q > d) throw DimensionError("pca_top_components: q exceeds column count");
    x.require_finite("pca_top_components");

    std::vector<double> mean(d, 0.0);
    if (centered) {
        for (std::size_t i = 0; i < n; ++i) {
            auto r = x.row(i);
            for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
        }
        for (double& m : mean) m /= static_cast<double>(n);
    }
    auto entry = [&](std::size_t i, std::size_t j) {
        return centered ? x(i, j) - mean[j] : x(i, j);
    };

    PcaResult result;
    result.eigenvalues.resize(q);
    result.components = DenseMatrix(d, q);

    SymmetricEigen eig;
    const bool via_rows = n < d;  // diagonalize the smaller Gram matrix
    if (!via_rows) {
        DenseMatrix gram(d, d);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t a = 0; a < d; ++a) {
                const double xa = entry(i, a);
                if (xa == 0.0) continue;
                for (std::size_t b = a; b < d; ++b) gram(a, b) += xa * entry(i, b);
            }
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < a; ++b) gram(a, b) = gram(b, a);
        for (double& v : gram.data()) v /= static_cast<double>(n);
        eig = jacobi_eigen_symmetric(gram);
        for (std::size_t j = 0; j < q; ++j)
            for (std::size_t i = 0; i < d; ++i) result.components(i, j) = eig.vectors(i, j);
    } else {
        DenseMatrix gram(n, n);
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = a; b < n; ++b) {
                double s = 0.0;
                for (std::size_t j = 0; j < d; ++j) s += entry(a, j) * entry(b, j);
                gram(a, b) = s / static_cast<double>(n);
                gram(b, a) = gram(a, b);
            }
        eig = jacobi_eigen_symmetric(gram);
        // Eigenvector v of (1/n) X X^T maps to X^T v of (1/n) X^T X, same eigenvalue.
        for (std::size_t j = 0; j < q; ++j) {
            std::vector<double> w(d, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                const double vi = eig.vectors(i, j);
                if (vi == 0.0) continue;
                for (std::size_t c = 0; c < d; ++c) w[c] += vi * entry(i, c);
            }
            const double nrm = norm2(w);
            if (nrm > 0.0)
                for (std::size_t c = 0; c < d; ++c) result.components(c, j) = w[c] / nrm;
            // zero column here means a null direction; completed below
        }
    }

    const double lead = eig.values.empty() ? 0.0 : std::max(eig.values[0], 0.0);
    const double rank_tol = std::max(lead, 1.0) * 1e-12;
    for (std::size_t j = 0; j < q; ++j) {
        double ev = (j < eig.values.size()) ? eig.values[j] : 0.0;
        if (ev < rank_tol) {
            ev = 0.0;
            result.rank_deficient = true;
        }
        result.eigenvalues[j] = ev;
    }

    // Replace null columns with an orthonormal completion (Gram-Schmidt of
    // coordinate axes against the columns already in place).
    for (std::size_t j = 0; j < q; ++j) {
        std::vector<double> col(d);
        for (std::size_t i = 0; i < d; ++i) col[i] = result.components(i, j);
        if (norm2(col) > 0.5) continue;  // valid unit column
        for (std::size_t axis = 0; axis < d; ++axis) {
            std::fill(col.begin(), col.end(), 0.0);
            col[axis] = 1.0;
            for (std::size_t k = 0; k < q; ++k) {
                if (k == j) continue;
                double proj = 0.0;
                for (std::size_t i = 0; i < d; ++i) proj += col[i] * result.components(i, k);
                for (std::size_t i = 0; i < d; ++i) col[i] -= proj * result.components(i, k);
            }
            if (norm2(col) > 1e-6) break;
        }
        normalize_inplace(col);
        for (std::size_t i = 0; i < d; ++i) result.components(i, j) = col[i];
        result.rank_deficient = true;
    }

    return result;
}

}  // namespace partco
