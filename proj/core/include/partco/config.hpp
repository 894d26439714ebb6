#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "partco/part_labels.hpp"
#include "partco/train.hpp"

namespace partco {

// Whole-pipeline tunables as key=value text. Unknown keys are rejected;
// defaults follow the reported training recipe (lambda_b=0.35, part_dim=128,
// epochs=200, batch=128, lr 0.1 -> 0.001, tau_obj=0.6).
struct RunConfig {
    TrainOptions train;
    double tau_obj = 0.6;
    std::size_t per_class = 1;
    std::uint64_t seed = 0;
    std::string order = "1";  // 1 | 2 | both | off

    // Optional paths, usable from config files as well as flags.
    std::string features_path, manifest_path, labels_path, out_path;

    static RunConfig defaults() { return RunConfig{}; }

    // Applies `key=value`; throws ValidationError on unknown keys or bad values.
    void set(const std::string& key, const std::string& value);

    PartLossOrder part_order() const;
    LabelOrder label_order() const;
};

// Parses a key=value file ('#' starts a comment, blank lines ignored).
RunConfig load_run_config(const std::filesystem::path& path);
void apply_config_text(RunConfig& config, const std::string& text);

}  // namespace partco
