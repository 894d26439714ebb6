#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>

#include "partco/errors.hpp"

namespace partco {

// Cosine annealing from lr0 down to lr_min over total_steps.
inline double cosine_lr(std::size_t step, std::size_t total_steps, double lr0, double lr_min) {
    if (total_steps == 0) throw ArgumentError("cosine_lr: total_steps must be positive");
    if (step > total_steps) throw ArgumentError("cosine_lr: step exceeds total_steps");
    if (!(lr0 >= lr_min) || !(lr_min >= 0.0))
        throw ArgumentError("cosine_lr: need lr0 >= lr_min >= 0");
    const double t = static_cast<double>(step) / static_cast<double>(total_steps);
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace partco
