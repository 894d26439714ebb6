#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "partco/feature_set.hpp"
#include "partco/heads.hpp"
#include "partco/losses.hpp"
#include "partco/manifest.hpp"
#include "partco/part_labels.hpp"

namespace partco {

enum class PartLossOrder { Off, First, Second, Both };

struct TrainOptions {
    std::size_t epochs = 200;
    std::size_t batch_size = 128;
    double lr0 = 0.1;
    double lr_min = 0.001;
    double momentum = 0.9;
    double lambda_b = 0.35;
    double tau_r = 0.07;
    double tau_s = 0.1;
    double tau_t = 0.05;
    double xi = 1.0;
    std::size_t rep_dim = 128;
    std::size_t part_dim = 128;  // d' of the part projection head
    double aug_strength = 0.5;
    double confidence_threshold = 0.0;
    TrainMode mode = TrainMode::Parametric;
    PartLossOrder part_order = PartLossOrder::First;
    std::size_t num_classes = 0;  // 0 = derive K from the manifest
    std::size_t eval_every = 0;   // 0 = no hooks
};

struct BatchRecord {
    std::size_t epoch = 0;
    std::size_t batch = 0;
    LossReport report;
};

struct TrainResult {
    HeadParams params;
    std::vector<BatchRecord> history;
};

using EvalHook = std::function<void(std::size_t epoch, const HeadParams& params)>;

// SGD with momentum over cosine-annealed learning rates; deterministic given
// (inputs, options, seed). `labels` may be null when part losses are off.
TrainResult train(const FeatureSet& fs, const DatasetManifest& manifest,
                  const PartLabelStore* labels, const TrainOptions& opts, std::uint64_t seed,
                  const EvalHook& hook = {});

}  // namespace partco
