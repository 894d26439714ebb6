#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace partco {

// Worst relative error between an analytic gradient and central finite
// differences of f at x, step h.
double max_rel_error_fd(const std::function<double(const std::vector<double>&)>& f,
                        std::vector<double> x, const std::vector<double>& analytic, double h);

// Names accepted by grad_check.
std::vector<std::string> grad_check_loss_names();

// Builds a random float64 instance of the named loss, evaluates its analytic
// gradient against central finite differences over every input coordinate,
// and reports the worst relative error.
double grad_check(const std::string& loss_name, std::uint64_t seed, double h);

}  // namespace partco
