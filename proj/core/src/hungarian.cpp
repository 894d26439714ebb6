#include "partco/hungarian.hpp"

#include <limits>

namespace partco {

// Potential-based shortest augmenting path formulation on the negated
// profits (minimum cost == maximum profit).
Assignment hungarian_max(const DenseMatrix& profit) {
    if (profit.rows() != profit.cols())
        throw DimensionError("hungarian_max: profit matrix must be square");
    profit.require_finite("hungarian_max");
    const std::size_t n = profit.rows();

    Assignment out;
    if (n == 0) return out;

    const double inf = std::numeric_limits<double>::infinity();
    auto cost = [&](std::size_t i, std::size_t j) { return -profit(i, j); };

    // 1-based arrays; p[j] = row matched to column j.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    std::vector<bool> used(n + 1, false);

    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    out.permutation.assign(n, 0);
    for (std::size_t j = 1; j <= n; ++j) out.permutation[p[j] - 1] = j - 1;
    for (std::size_t i = 0; i < n; ++i) out.total_profit += profit(i, out.permutation[i]);
    return out;
}

}  // namespace partco
