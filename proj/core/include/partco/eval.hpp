#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "partco/feature_set.hpp"
#include "partco/heads.hpp"
#include "partco/hungarian.hpp"
#include "partco/losses.hpp"

namespace partco {

struct AccReport {
    double acc_all = 0.0, acc_old = 0.0, acc_new = 0.0;
    Assignment matching;  // predicted cluster id -> class id
    std::size_t n_all = 0, n_old = 0, n_new = 0;
};

// Hungarian-matched clustering accuracy: one joint matching over all samples,
// then per-split reporting. Old = samples whose true class is in old_classes.
AccReport clustering_accuracy(const std::vector<std::size_t>& pred,
                              const std::vector<int>& truth, const std::set<int>& old_classes);

// Hungarian-matched per-patch agreement over the planted foreground
// (planted label > 0); a background prediction there counts as a miss.
double part_label_agreement(const std::vector<std::uint16_t>& pred,
                            const std::vector<std::uint16_t>& planted);

// Cluster ids for every image. Parametric: argmax over prototype logits of
// the adapted, normalized global feature. Nonparametric: seeded k-means with
// k = num_classes on the psi outputs.
std::vector<std::size_t> assign_clusters(const HeadParams& params, const FeatureSet& fs,
                                         TrainMode mode, std::size_t num_classes,
                                         std::uint64_t seed);

}  // namespace partco
