#include "partco/augment.hpp"

#include <cmath>
#include <random>

#include "partco/errors.hpp"
#include "partco/rng.hpp"

namespace partco {

ViewPair augment_views(const DenseMatrix& features, double strength, std::uint64_t seed) {
    if (strength < 0.0) throw ArgumentError("augment_views: strength must be nonnegative");
    ViewPair views{features, features};
    if (strength == 0.0) return views;

    const std::size_t n = features.rows(), d = features.cols();
    std::vector<double> mean(d, 0.0), sd(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = features.row(i);
        for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
    }
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = features.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double c = r[j] - mean[j];
            sd[j] += c * c;
        }
    }
    for (double& v : sd) v = std::sqrt(v / static_cast<double>(n));

    std::mt19937_64 rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    for (DenseMatrix* view : {&views.a, &views.b}) {
        for (std::size_t i = 0; i < n; ++i) {
            auto r = view->row(i);
            for (std::size_t j = 0; j < d; ++j) r[j] += strength * sd[j] * gauss(rng);
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (uni(rng) < kPatchDropoutRate) {
                auto r = view->row(i);
                for (std::size_t j = 0; j < d; ++j) r[j] = mean[j];
            }
        }
    }
    return views;
}

}  // namespace partco
