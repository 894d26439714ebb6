#include "partco/grad_check.hpp"

#include <cmath>
#include <random>

#include "partco/errors.hpp"
#include "partco/losses.hpp"
#include "partco/rng.hpp"

namespace partco {

double max_rel_error_fd(const std::function<double(const std::vector<double>&)>& f,
                        std::vector<double> x, const std::vector<double>& analytic, double h) {
    if (x.size() != analytic.size())
        throw ArgumentError("max_rel_error_fd: gradient length mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double fp = f(x);
        x[i] = saved - h;
        const double fm = f(x);
        x[i] = saved;
        const double fd = (fp - fm) / (2.0 * h);
        const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
        worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
    }
    return worst;
}

namespace {

DenseMatrix random_unit_rows(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    DenseMatrix m(rows, cols);
    for (double& v : m.data()) v = gauss(rng);
    for (std::size_t i = 0; i < rows; ++i) normalize_inplace(m.row(i));
    return m;
}

DenseMatrix random_distributions(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    DenseMatrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        double mx = -1e300;
        for (std::size_t c = 0; c < cols; ++c) {
            m(i, c) = gauss(rng);
            mx = std::max(mx, m(i, c));
        }
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            m(i, c) = std::exp(m(i, c) - mx);
            z += m(i, c);
        }
        for (std::size_t c = 0; c < cols; ++c) m(i, c) /= z;
    }
    return m;
}

std::vector<double> concat(const DenseMatrix& a, const DenseMatrix& b) {
    std::vector<double> out = a.data();
    out.insert(out.end(), b.data().begin(), b.data().end());
    return out;
}

DenseMatrix slice(const std::vector<double>& x, std::size_t offset, std::size_t rows,
                  std::size_t cols) {
    return DenseMatrix(rows, cols,
                       std::vector<double>(x.begin() + offset, x.begin() + offset + rows * cols));
}

constexpr double kTauR = 0.07;

std::vector<PartKey> part_instance_keys() {
    // 4 samples x 2 parts; samples 0..2 grouped (two share group 0), sample 3
    // pool-only. Gives anchors with positives plus plain negatives.
    std::vector<PartKey> keys;
    keys.push_back({0, 1, 0});
    keys.push_back({0, 2, 0});
    keys.push_back({1, 1, 0});
    keys.push_back({1, 2, 0});
    keys.push_back({2, 1, 1});
    keys.push_back({2, 2, 1});
    keys.push_back({3, 1, std::nullopt});
    keys.push_back({3, 2, std::nullopt});
    return keys;
}

}  // namespace

std::vector<std::string> grad_check_loss_names() {
    return {"rep_unsup", "rep_sup", "cls_unsup", "cls_sup", "pc_sup", "pc_unsup", "linear_probe"};
}

double grad_check(const std::string& loss_name, std::uint64_t seed, double h) {
    std::mt19937_64 rng = make_rng(mix_seed(seed, 0x67636bULL));

    if (loss_name == "rep_unsup") {
        const std::size_t b = 6, d = 8;
        const DenseMatrix z = random_unit_rows(b, d, rng);
        const DenseMatrix zp = random_unit_rows(b, d, rng);
        const auto res = rep_contrastive_unsup(z, zp, kTauR);
        auto f = [b, d](const std::vector<double>& x) {
            return rep_contrastive_unsup(slice(x, 0, b, d), slice(x, b * d, b, d), kTauR).value;
        };
        return max_rel_error_fd(f, concat(z, zp), concat(res.dz, res.dz_prime), h);
    }
    if (loss_name == "rep_sup") {
        const std::size_t b = 6, d = 8;
        const DenseMatrix z = random_unit_rows(b, d, rng);
        const std::vector<std::optional<int>> labels = {0, 0, 1, 1, 2, std::nullopt};
        const auto res = rep_contrastive_sup(z, labels, kTauR);
        auto f = [b, d, labels](const std::vector<double>& x) {
            return rep_contrastive_sup(slice(x, 0, b, d), labels, kTauR).value;
        };
        return max_rel_error_fd(f, z.data(), res.dz.data(), h);
    }
    if (loss_name == "cls_unsup") {
        const std::size_t b = 5, k = 4;
        const DenseMatrix p = random_distributions(b, k, rng);
        const DenseMatrix pp = random_distributions(b, k, rng);
        const DenseMatrix q = random_distributions(b, k, rng);
        const DenseMatrix qp = random_distributions(b, k, rng);
        const double xi = 1.0;
        const auto res = cls_loss_unsup(p, pp, q, qp, xi);
        auto f = [=](const std::vector<double>& x) {
            return cls_loss_unsup(slice(x, 0, b, k), slice(x, b * k, b, k), q, qp, xi).value;
        };
        return max_rel_error_fd(f, concat(p, pp), concat(res.dp, res.dp_prime), h);
    }
    if (loss_name == "cls_sup") {
        const std::size_t b = 5, k = 6;
        const DenseMatrix p = random_distributions(b, k, rng);
        const std::vector<std::optional<int>> labels = {2, std::nullopt, 0, 5, std::nullopt};
        const auto res = cls_loss_sup(p, labels);
        auto f = [b, k, labels](const std::vector<double>& x) {
            return cls_loss_sup(slice(x, 0, b, k), labels).value;
        };
        return max_rel_error_fd(f, p.data(), res.dp.data(), h);
    }
    if (loss_name == "pc_sup") {
        const auto keys = part_instance_keys();
        const std::size_t e = keys.size(), d = 8;
        const DenseMatrix hh = random_unit_rows(e, d, rng);
        const auto res = part_contrastive_sup(hh, keys, kTauR);
        auto f = [e, d, keys](const std::vector<double>& x) {
            return part_contrastive_sup(slice(x, 0, e, d), keys, kTauR).value;
        };
        return max_rel_error_fd(f, hh.data(), res.dh.data(), h);
    }
    if (loss_name == "pc_unsup") {
        const auto keys = part_instance_keys();
        const std::size_t e = keys.size(), d = 8;
        const DenseMatrix hh = random_unit_rows(e, d, rng);
        const std::vector<double> confidence = {0.9, 0.8, 0.7, 0.2};
        const double threshold = 0.5;
        const auto res = part_contrastive_unsup(hh, keys, confidence, threshold, kTauR);
        auto f = [e, d, keys, confidence, threshold](const std::vector<double>& x) {
            return part_contrastive_unsup(slice(x, 0, e, d), keys, confidence, threshold, kTauR)
                .value;
        };
        return max_rel_error_fd(f, hh.data(), res.dh.data(), h);
    }
    if (loss_name == "linear_probe") {
        const std::size_t n = 16;
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::vector<double> c(n), x(n);
        for (auto& v : c) v = gauss(rng);
        for (auto& v : x) v = gauss(rng);
        auto f = [c](const std::vector<double>& v) {
            double s = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i) s += c[i] * v[i];
            return s;
        };
        return max_rel_error_fd(f, x, c, h);
    }
    throw ArgumentError("grad_check: unknown loss '" + loss_name + "'");
}

}  // namespace partco
