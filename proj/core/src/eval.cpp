#include "partco/eval.hpp"

#include <algorithm>

#include "partco/kmeans.hpp"

namespace partco {

AccReport clustering_accuracy(const std::vector<std::size_t>& pred,
                              const std::vector<int>& truth, const std::set<int>& old_classes) {
    if (pred.size() != truth.size())
        throw ArgumentError("clustering_accuracy: pred and truth lengths differ");
    if (pred.empty()) throw ArgumentError("clustering_accuracy: empty inputs");

    std::size_t side = 0;
    for (std::size_t p : pred) side = std::max(side, p + 1);
    for (int t : truth) {
        if (t < 0) throw ValidationError("clustering_accuracy: truth class below 0");
        side = std::max(side, static_cast<std::size_t>(t) + 1);
    }

    DenseMatrix contingency(side, side, 0.0);
    for (std::size_t i = 0; i < pred.size(); ++i)
        contingency(pred[i], static_cast<std::size_t>(truth[i])) += 1.0;

    AccReport report;
    report.matching = hungarian_max(contingency);

    std::size_t hit_all = 0, hit_old = 0, hit_new = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool is_old = old_classes.count(truth[i]) > 0;
        const bool hit =
            report.matching.permutation[pred[i]] == static_cast<std::size_t>(truth[i]);
        ++report.n_all;
        if (is_old)
            ++report.n_old;
        else
            ++report.n_new;
        if (hit) {
            ++hit_all;
            if (is_old)
                ++hit_old;
            else
                ++hit_new;
        }
    }
    report.acc_all = static_cast<double>(hit_all) / static_cast<double>(report.n_all);
    report.acc_old =
        report.n_old ? static_cast<double>(hit_old) / static_cast<double>(report.n_old) : 0.0;
    report.acc_new =
        report.n_new ? static_cast<double>(hit_new) / static_cast<double>(report.n_new) : 0.0;
    return report;
}

double part_label_agreement(const std::vector<std::uint16_t>& pred,
                            const std::vector<std::uint16_t>& planted) {
    if (pred.size() != planted.size())
        throw ArgumentError("part_label_agreement: shape mismatch");

    std::size_t foreground = 0;
    std::uint16_t max_pred = 0, max_true = 0;
    for (std::size_t i = 0; i < planted.size(); ++i) {
        if (planted[i] == 0) continue;
        ++foreground;
        max_true = std::max(max_true, planted[i]);
        max_pred = std::max(max_pred, pred[i]);
    }
    if (foreground == 0) return 1.0;  // vacuously perfect: nothing to match

    const std::size_t side = std::max<std::size_t>(max_pred, max_true);
    DenseMatrix contingency(side, side, 0.0);
    for (std::size_t i = 0; i < planted.size(); ++i) {
        if (planted[i] == 0 || pred[i] == 0) continue;
        contingency(pred[i] - 1, planted[i] - 1) += 1.0;
    }
    const Assignment match = hungarian_max(contingency);
    return match.total_profit / static_cast<double>(foreground);
}

std::vector<std::size_t> assign_clusters(const HeadParams& params, const FeatureSet& fs,
                                         TrainMode mode, std::size_t num_classes,
                                         std::uint64_t seed) {
    const std::size_t n = fs.num_images, d = fs.dim;

    DenseMatrix g(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        auto gi = g.row(i);
        for (std::size_t p = 0; p < fs.patches_per_image; ++p) {
            auto patch = fs.patch(i, p);
            for (std::size_t j = 0; j < d; ++j) gi[j] += patch[j];
        }
        for (std::size_t j = 0; j < d; ++j) gi[j] /= static_cast<double>(fs.patches_per_image);
    }
    const DenseMatrix adapted = params.trunk.forward(g);

    std::vector<std::size_t> out(n, 0);
    if (mode == TrainMode::Parametric) {
        const DenseMatrix o = normalize_rows(adapted);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_dot = -1e300;
            for (std::size_t k = 0; k < params.prototypes.rows(); ++k) {
                const double s = dot(o.row(i), params.prototypes.row(k));
                if (s > best_dot) {
                    best_dot = s;
                    best = k;
                }
            }
            out[i] = best;
        }
    } else {
        const auto cache = params.psi.forward(adapted);
        const DenseMatrix z = normalize_rows(cache.output);
        const KMeansResult km = kmeans(z, num_classes, seed);
        out = km.assignments;
    }
    return out;
}

}  // namespace partco
