#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "partco/matrix.hpp"

namespace partco {

enum class TrainMode { Parametric, NonParametric };

// Scalar values of every loss component for one batch. The *_total fields
// satisfy x_total = (1-lambda_b)*x_unsup + lambda_b*x_sup exactly, and
// grand_total = gcd_total + pc_total.
struct LossReport {
    double rep_unsup = 0.0, rep_sup = 0.0, rep_total = 0.0;
    double cls_unsup = 0.0, cls_sup = 0.0, cls_total = 0.0;
    double pc_sup = 0.0, pc_unsup = 0.0, pc_total = 0.0;
    double gcd_total = 0.0, grand_total = 0.0;
    double mean_entropy = 0.0;

    bool all_finite() const;
    // Name of the first non-finite component, or nullptr.
    const char* first_non_finite() const;
};

struct LossComponents {
    double rep_unsup = 0.0, rep_sup = 0.0;
    double cls_unsup = 0.0, cls_sup = 0.0;
    double pc_sup = 0.0, pc_unsup = 0.0;
    double mean_entropy = 0.0;
};

LossReport total_loss(const LossComponents& c, double lambda_b, TrainMode mode);

// ---- Representation contrastive losses (Eq. 1) ----

struct RepUnsupResult {
    double value = 0.0;
    DenseMatrix dz, dz_prime;
};
// Cross-view InfoNCE where the positive pair is absent from the denominator:
// mean_i of -log[ exp(z_i.z'_i/tau) / sum_{j != i} exp(z_i.z'_j/tau) ].
RepUnsupResult rep_contrastive_unsup(const DenseMatrix& z, const DenseMatrix& z_prime,
                                     double tau);

struct RepSupResult {
    double value = 0.0;
    bool empty = false;  // no anchor had a positive
    DenseMatrix dz;
};
// Supervised contrastive over labeled anchors; positives share the class,
// the denominator runs over every other sample in the batch.
RepSupResult rep_contrastive_sup(const DenseMatrix& z,
                                 const std::vector<std::optional<int>>& labels, double tau);

// ---- Prototype classifier (Eq. 3) and classification losses ----

// Row-wise softmax of (o . l_k) / tau over K prototypes.
DenseMatrix classifier_probs(const DenseMatrix& o, const DenseMatrix& prototypes, double tau);

// Backprop through the softmax: given dL/dprobs, accumulate dL/dprototypes
// and optionally produce dL/do.
void classifier_backward(const DenseMatrix& o, const DenseMatrix& probs,
                         const DenseMatrix& prototypes, double tau, const DenseMatrix& dprobs,
                         DenseMatrix& dprototypes, DenseMatrix* dout_o);

struct ClsUnsupResult {
    double value = 0.0;
    double mean_entropy = 0.0;  // H(p_bar) over both views
    DenseMatrix dp, dp_prime;
};
// Cross-view self-distillation: mean of ce(teacher, student) over the 2|B|
// view pairings minus xi * H(p_bar). Teachers carry no gradient.
ClsUnsupResult cls_loss_unsup(const DenseMatrix& p, const DenseMatrix& p_prime,
                              const DenseMatrix& teacher_q, const DenseMatrix& teacher_q_prime,
                              double xi);

struct ClsSupResult {
    double value = 0.0;
    bool empty = false;
    DenseMatrix dp;
};
// Mean cross-entropy over labeled rows.
ClsSupResult cls_loss_sup(const DenseMatrix& p, const std::vector<std::optional<int>>& labels);

// ---- Part pooling and part contrastive losses (Eq. 6, 7) ----

// Mean of patch rows per nonzero part label; absent parts yield no entry.
std::map<std::uint16_t, std::vector<double>> pool_parts(const DenseMatrix& patch_features,
                                                        const std::vector<std::uint16_t>& labels);

// One pooled (sample, part) pool entry. `group` drives anchoring: entries
// with a group act as anchors and positives (same group AND same part);
// group-less entries only serve as denominator negatives.
struct PartKey {
    std::size_t sample = 0;
    std::uint32_t part = 0;
    std::optional<int> group;
};

struct PartLossResult {
    double value = 0.0;
    bool empty = false;  // no anchor produced a valid term
    DenseMatrix dh;
};

// Shared engine for Eq. 6 / Eq. 7: outer mean over samples with a valid
// term, inner mean over that sample's anchorable parts, innermost mean over
// positives; the denominator pools every entry outside the positive set,
// anchor excluded.
PartLossResult part_contrastive(const DenseMatrix& h, const std::vector<PartKey>& keys,
                                double tau);

// Eq. 6: groups are class labels of labeled samples.
PartLossResult part_contrastive_sup(const DenseMatrix& h, const std::vector<PartKey>& keys,
                                    double tau);

// Eq. 7: groups are pseudo-labels; entries whose sample confidence falls
// below the threshold lose anchor/positive status but stay in the pool.
PartLossResult part_contrastive_unsup(const DenseMatrix& h, std::vector<PartKey> keys,
                                      const std::vector<double>& confidence, double threshold,
                                      double tau);

}  // namespace partco
