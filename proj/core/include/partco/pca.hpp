#pragma once

#include <cstddef>
#include <vector>

#include "partco/matrix.hpp"

namespace partco {

struct PcaResult {
    DenseMatrix components;           // d x q, orthonormal columns
    std::vector<double> eigenvalues;  // q, nonincreasing
    // True when fewer than q directions carry variation; the missing columns
    // are an arbitrary orthonormal completion with zero eigenvalues.
    bool rank_deficient = false;
};

// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// Returns eigenvalues in nonincreasing order with matching eigenvector
// columns. Deterministic for identical inputs.
struct SymmetricEigen {
    std::vector<double> values;  // n, nonincreasing
    DenseMatrix vectors;         // n x n, column j pairs with values[j]
};
SymmetricEigen jacobi_eigen_symmetric(const DenseMatrix& a);

// Top-q principal components of X (rows are samples).
//
// Uncentered mode diagonalizes (1/n) X^T X, so eigenvalue j is the mean
// squared projection onto component j; centered mode first subtracts the
// column mean (population covariance, 1/n). Works on whichever Gram matrix
// is smaller (d x d or n x n).
PcaResult pca_top_components(const DenseMatrix& x, std::size_t q, bool centered);

}  // namespace partco
