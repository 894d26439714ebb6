#pragma once

#include <cstddef>
#include <vector>

#include "partco/matrix.hpp"

namespace partco {

struct Assignment {
    std::vector<std::size_t> permutation;  // row i -> column permutation[i]
    double total_profit = 0.0;
};

// Maximum-profit perfect matching on a square profit matrix, O(K^3).
Assignment hungarian_max(const DenseMatrix& profit);

}  // namespace partco
