#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "partco/matrix.hpp"

namespace partco {

// y = silu(x) = x * sigmoid(x)
double silu(double x);
double silu_derivative(double x);

struct LinearLayer {
    DenseMatrix w;  // out x in
    std::vector<double> b;
};

// 3-layer perceptron in -> hidden -> hidden -> out with silu gating after the
// first two layers. Downstream consumers l2-normalize the raw output.
struct Mlp {
    LinearLayer l1, l2, l3;

    static Mlp make(std::size_t in, std::size_t hidden, std::size_t out, std::uint64_t seed);

    std::size_t in_dim() const { return l1.w.cols(); }
    std::size_t out_dim() const { return l3.w.rows(); }

    struct Cache {
        DenseMatrix input;       // B x in
        DenseMatrix pre1, act1;  // B x hidden
        DenseMatrix pre2, act2;  // B x hidden
        DenseMatrix output;      // B x out
    };

    Cache forward(const DenseMatrix& x) const;
    // Accumulates parameter gradients; writes dL/dinput when dinput != nullptr.
    void backward(const Cache& cache, const DenseMatrix& dout, Mlp& grads,
                  DenseMatrix* dinput) const;

    static Mlp zeros_like(const Mlp& other);
};

// Residual linear adapter y = x + W x with W initialized to zero, the
// trainable stand-in for a fine-tuned final backbone block. Linear, so
// applying it to a mean of patches equals the mean of per-patch applications.
struct TrunkAdapter {
    DenseMatrix w;  // d x d

    static TrunkAdapter make(std::size_t dim) { return {DenseMatrix(dim, dim, 0.0)}; }

    DenseMatrix forward(const DenseMatrix& x) const;
    // dW += dY^T X; writes dL/dX when dinput != nullptr.
    void backward(const DenseMatrix& x, const DenseMatrix& dy, TrunkAdapter& grads,
                  DenseMatrix* dinput) const;
};

// Every trainable tensor of the model.
struct HeadParams {
    TrunkAdapter trunk;     // d x d residual adapter shared by all paths
    Mlp psi;                // d -> rep_dim representation head
    Mlp psi_p;              // d -> part_dim part projection head
    DenseMatrix prototypes; // K x d, rows unit norm

    static HeadParams make(std::size_t feature_dim, std::size_t rep_dim, std::size_t part_dim,
                           std::size_t num_classes, std::uint64_t seed);

    void renormalize_prototypes();

    struct TensorRef {
        std::string name;
        std::size_t rows, cols;
        double* data;
    };
    struct ConstTensorRef {
        std::string name;
        std::size_t rows, cols;
        const double* data;
    };
    std::vector<TensorRef> tensors();
    std::vector<ConstTensorRef> tensors() const;

    bool all_finite() const;
};

// Checkpoint container: magic "PCKP", u32 version=1, u32 tensor count, per
// tensor (u32 name length, name bytes, u32 rows, u32 cols), then float64
// little-endian payloads in table order.
void write_checkpoint(const HeadParams& params, const std::filesystem::path& path);
HeadParams read_checkpoint(const std::filesystem::path& path);

// l2 row normalization with backward: y = v/||v||, dv = (dy - y (y.dy))/||v||.
DenseMatrix normalize_rows(const DenseMatrix& v);
DenseMatrix normalize_rows_backward(const DenseMatrix& v, const DenseMatrix& y,
                                    const DenseMatrix& dy);

}  // namespace partco
