#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "partco/losses.hpp"

using namespace partco;

namespace {

DenseMatrix random_unit_rows(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    DenseMatrix m(rows, cols);
    for (double& v : m.data()) v = gauss(rng);
    for (std::size_t i = 0; i < rows; ++i) normalize_inplace(m.row(i));
    return m;
}

DenseMatrix random_distributions(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    DenseMatrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            m(i, c) = std::exp(gauss(rng));
            z += m(i, c);
        }
        for (std::size_t c = 0; c < cols; ++c) m(i, c) /= z;
    }
    return m;
}

template <typename Fn>
void check_batch_permutation_invariance(Fn&& eval, std::size_t b, std::uint64_t seed) {
    std::vector<std::size_t> perm(b);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    eval(perm);
}

}  // namespace

TEST_CASE("rep_contrastive_unsup with identical embeddings gives log(B-1)") {
    DenseMatrix z(4, 3);
    for (std::size_t i = 0; i < 4; ++i) z(i, 0) = 1.0;
    const auto r = rep_contrastive_unsup(z, z, 0.07);
    CHECK(r.value == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("rep_contrastive_unsup hand-computed two-sample case") {
    // z_i.z'_i = 1, cross-similarities -1, tau = 1 -> loss = -2
    const DenseMatrix z = DenseMatrix::from_rows({{1, 0}, {-1, 0}});
    const DenseMatrix zp = DenseMatrix::from_rows({{1, 0}, {-1, 0}});
    const auto r = rep_contrastive_unsup(z, zp, 1.0);
    CHECK(r.value == doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("rep_contrastive_unsup rejects a batch of one") {
    CHECK_THROWS_AS(rep_contrastive_unsup(DenseMatrix(1, 3, 1.0), DenseMatrix(1, 3, 1.0), 0.07),
                    ArgumentError);
}

TEST_CASE("rep_contrastive_unsup is permutation invariant") {
    const DenseMatrix z = random_unit_rows(6, 5, 1);
    const DenseMatrix zp = random_unit_rows(6, 5, 2);
    const double base = rep_contrastive_unsup(z, zp, 0.07).value;
    check_batch_permutation_invariance(
        [&](const std::vector<std::size_t>& perm) {
            DenseMatrix z2(6, 5), zp2(6, 5);
            for (std::size_t i = 0; i < 6; ++i) {
                std::copy(z.row(perm[i]).begin(), z.row(perm[i]).end(), z2.row(i).begin());
                std::copy(zp.row(perm[i]).begin(), zp.row(perm[i]).end(), zp2.row(i).begin());
            }
            CHECK(std::abs(rep_contrastive_unsup(z2, zp2, 0.07).value - base) <= 1e-12);
        },
        6, 99);
}

TEST_CASE("rep_contrastive_sup: two identical same-class samples give zero") {
    DenseMatrix z(2, 3);
    z(0, 0) = 1.0;
    z(1, 0) = 1.0;
    const std::vector<std::optional<int>> labels = {5, 5};
    const auto r = rep_contrastive_sup(z, labels, 0.07);
    CHECK(!r.empty);
    CHECK(r.value == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("rep_contrastive_sup flags all-singleton batches") {
    const DenseMatrix z = random_unit_rows(4, 3, 3);
    const std::vector<std::optional<int>> labels = {0, 1, 2, 3};
    const auto r = rep_contrastive_sup(z, labels, 0.07);
    CHECK(r.empty);
    CHECK(r.value == 0.0);
}

TEST_CASE("classifier_probs hand case and uniform case") {
    const DenseMatrix prototypes = DenseMatrix::from_rows({{1, 0}, {0, 1}});
    DenseMatrix o(1, 2);
    o(0, 0) = 1.0;
    const DenseMatrix p = classifier_probs(o, prototypes, 1.0);
    CHECK(p(0, 0) == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-12));
    CHECK(p(0, 1) == doctest::Approx(1.0 / (std::exp(1.0) + 1.0)).epsilon(1e-12));

    // orthogonal to all prototypes -> uniform
    DenseMatrix o2(1, 3);
    o2(0, 2) = 1.0;
    const DenseMatrix protos3 = DenseMatrix::from_rows({{1, 0, 0}, {0, 1, 0}});
    const DenseMatrix p2 = classifier_probs(o2, protos3, 0.3);
    CHECK(p2(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p2(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("classifier_probs sharpens monotonically as tau shrinks") {
    const DenseMatrix prototypes = random_unit_rows(4, 6, 8);
    const DenseMatrix o = random_unit_rows(3, 6, 9);
    double prev_mass = 0.0;
    for (double tau : {1.0, 0.1, 0.01}) {
        const DenseMatrix p = classifier_probs(o, prototypes, tau);
        double mass = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
            double mx = 0.0;
            for (std::size_t c = 0; c < 4; ++c) mx = std::max(mx, p(i, c));
            mass += mx;
        }
        CHECK(mass >= prev_mass - 1e-12);
        prev_mass = mass;
        // rows sum to one
        for (std::size_t i = 0; i < 3; ++i) {
            double s = 0.0;
            for (std::size_t c = 0; c < 4; ++c) s += p(i, c);
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("cls_loss_unsup uniform teacher and student") {
    const std::size_t b = 3, k = 4;
    DenseMatrix uniform(b, k, 1.0 / k);
    for (double xi : {0.0, 0.5, 1.0}) {
        const auto r = cls_loss_unsup(uniform, uniform, uniform, uniform, xi);
        CHECK(r.value == doctest::Approx((1.0 - xi) * std::log(4.0)).epsilon(1e-12));
        CHECK(r.mean_entropy == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    }
}

TEST_CASE("cls_loss_sup perfect and uniform predictions") {
    DenseMatrix p(2, 10, 1e-12);
    p(0, 3) = 1.0;
    p(1, 7) = 1.0;
    const std::vector<std::optional<int>> labels = {3, 7};
    CHECK(cls_loss_sup(p, labels).value == doctest::Approx(0.0).epsilon(1e-9));

    DenseMatrix uniform(2, 10, 0.1);
    CHECK(cls_loss_sup(uniform, labels).value ==
          doctest::Approx(std::log(10.0)).epsilon(1e-12));

    const std::vector<std::optional<int>> none = {std::nullopt, std::nullopt};
    const auto empty = cls_loss_sup(uniform, none);
    CHECK(empty.empty);
    CHECK(empty.value == 0.0);
}

TEST_CASE("pool_parts definitional means, background dropped") {
    const DenseMatrix patches = DenseMatrix::from_rows({{1, 2}, {3, 4}, {10, 20}, {7, 7}});
    const std::vector<std::uint16_t> labels = {1, 1, 2, 0};
    const auto pooled = pool_parts(patches, labels);
    REQUIRE(pooled.size() == 2);
    CHECK(pooled.at(1) == std::vector<double>{2.0, 3.0});
    CHECK(pooled.at(2) == std::vector<double>{10.0, 20.0});

    const std::vector<std::uint16_t> all_bg = {0, 0, 0, 0};
    CHECK(pool_parts(patches, all_bg).empty());
}

TEST_CASE("pool_parts matches an independent accumulation oracle") {
    std::mt19937_64 rng(55);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> lab(0, 4);
    DenseMatrix patches(24, 5);
    for (double& v : patches.data()) v = gauss(rng);
    std::vector<std::uint16_t> labels(24);
    for (auto& l : labels) l = static_cast<std::uint16_t>(lab(rng));

    const auto pooled = pool_parts(patches, labels);
    for (std::uint16_t part = 1; part <= 4; ++part) {
        std::vector<double> sum(5, 0.0);
        std::size_t count = 0;
        for (std::size_t i = 0; i < 24; ++i) {
            if (labels[i] != part) continue;
            ++count;
            for (std::size_t j = 0; j < 5; ++j) sum[j] += patches(i, j);
        }
        if (count == 0) {
            CHECK(pooled.find(part) == pooled.end());
            continue;
        }
        const auto& mean = pooled.at(part);
        for (std::size_t j = 0; j < 5; ++j)
            CHECK(mean[j] == doctest::Approx(sum[j] / count).epsilon(1e-12));
    }
}

TEST_CASE("part_contrastive_sup hand-computed single-anchor terms") {
    // Anchor + positive with similarity 1; three pool-only negatives with
    // similarity 0; tau = 1. Each anchor term: -log(e / 3) = -1 + ln 3.
    DenseMatrix h(5, 4);
    h(0, 0) = 1.0;  // anchor (sample 0, part 1, class 0)
    h(1, 0) = 1.0;  // positive (sample 1, part 1, class 0)
    h(2, 1) = 1.0;
    h(3, 2) = 1.0;
    h(4, 3) = 1.0;
    std::vector<PartKey> keys = {
        {0, 1, 0}, {1, 1, 0}, {2, 5, std::nullopt}, {3, 6, std::nullopt}, {4, 7, std::nullopt}};
    const auto r = part_contrastive_sup(h, keys, 1.0);
    CHECK(!r.empty);
    // both samples anchor symmetric terms
    CHECK(r.value == doctest::Approx(-1.0 + std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("part_contrastive_sup identical features give log(n_neg)") {
    // one class, one part, 2 grouped samples + n_neg pool-only entries, all
    // features identical: term = log(n_neg) independent of tau.
    for (std::size_t n_neg : {1u, 3u, 5u}) {
        const std::size_t e = 2 + n_neg;
        DenseMatrix h(e, 3);
        for (std::size_t i = 0; i < e; ++i) h(i, 0) = 1.0;
        std::vector<PartKey> keys;
        keys.push_back({0, 1, 7});
        keys.push_back({1, 1, 7});
        for (std::size_t i = 0; i < n_neg; ++i)
            keys.push_back({2 + i, 40 + static_cast<std::uint32_t>(i), std::nullopt});
        const auto r = part_contrastive_sup(h, keys, 0.07);
        CHECK(r.value ==
              doctest::Approx(std::log(static_cast<double>(n_neg))).epsilon(1e-10));
    }
}

TEST_CASE("part_contrastive_unsup: distinct pseudo-labels flag empty") {
    const DenseMatrix h = random_unit_rows(4, 3, 21);
    std::vector<PartKey> keys = {{0, 1, 0}, {1, 1, 1}, {2, 1, 2}, {3, 1, 3}};
    const std::vector<double> conf = {1, 1, 1, 1};
    const auto r = part_contrastive_unsup(h, keys, conf, 0.0, 0.07);
    CHECK(r.empty);
    CHECK(r.value == 0.0);
}

TEST_CASE("part_contrastive_unsup equals sup when pseudo-labels are true labels") {
    const DenseMatrix h = random_unit_rows(8, 6, 31);
    std::vector<PartKey> keys;
    for (std::size_t s = 0; s < 4; ++s) {
        keys.push_back({s, 1, static_cast<int>(s % 2)});
        keys.push_back({s, 2, static_cast<int>(s % 2)});
    }
    const auto sup = part_contrastive_sup(h, keys, 0.07);
    const std::vector<double> conf(4, 1.0);
    const auto unsup = part_contrastive_unsup(h, keys, conf, 0.5, 0.07);
    CHECK(sup.value == doctest::Approx(unsup.value).epsilon(1e-15));
    CHECK(sup.dh == unsup.dh);
}

TEST_CASE("part_contrastive_unsup confidence threshold removes anchors but keeps negatives") {
    const DenseMatrix h = random_unit_rows(6, 4, 41);
    std::vector<PartKey> keys = {{0, 1, 0}, {1, 1, 0}, {2, 1, 0},
                                 {3, 2, 1}, {4, 2, 1}, {5, 3, std::nullopt}};
    const std::vector<double> conf = {0.9, 0.9, 0.1, 0.9, 0.9, 0.0};
    const auto r = part_contrastive_unsup(h, keys, conf, 0.5, 0.07);
    CHECK(!r.empty);
    // sample 2 lost its anchor status: replicate by resetting its group
    std::vector<PartKey> manual = keys;
    manual[2].group.reset();
    const auto expected = part_contrastive(h, manual, 0.07);
    CHECK(r.value == doctest::Approx(expected.value).epsilon(1e-15));
}

TEST_CASE("part losses are permutation invariant over pool order") {
    const DenseMatrix h = random_unit_rows(8, 5, 61);
    std::vector<PartKey> keys;
    for (std::size_t s = 0; s < 4; ++s) {
        keys.push_back({s, 1, static_cast<int>(s % 2)});
        keys.push_back({s, 2, static_cast<int>(s / 2)});
    }
    const double base = part_contrastive_sup(h, keys, 0.07).value;
    std::vector<std::size_t> perm(8);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(5);
    std::shuffle(perm.begin(), perm.end(), rng);
    DenseMatrix h2(8, 5);
    std::vector<PartKey> keys2(8);
    for (std::size_t i = 0; i < 8; ++i) {
        std::copy(h.row(perm[i]).begin(), h.row(perm[i]).end(), h2.row(i).begin());
        keys2[i] = keys[perm[i]];
    }
    CHECK(std::abs(part_contrastive_sup(h2, keys2, 0.07).value - base) <= 1e-12);
}

TEST_CASE("total_loss identities and modes") {
    LossComponents c;
    c.rep_unsup = 0.8;
    c.rep_sup = 0.3;
    c.cls_unsup = 1.2;
    c.cls_sup = 0.4;
    c.pc_sup = 0.6;
    c.pc_unsup = 0.9;
    c.mean_entropy = 1.1;

    const double lambda = 0.35;
    const LossReport r = total_loss(c, lambda, TrainMode::Parametric);
    CHECK(r.rep_total == (1 - lambda) * c.rep_unsup + lambda * c.rep_sup);
    CHECK(r.cls_total == (1 - lambda) * c.cls_unsup + lambda * c.cls_sup);
    CHECK(r.pc_total == (1 - lambda) * c.pc_unsup + lambda * c.pc_sup);
    CHECK(r.gcd_total == r.cls_total + r.rep_total);
    CHECK(r.grand_total == r.gcd_total + r.pc_total);

    // lambda_b = 1 collapses pc to the supervised term exactly
    const LossReport r1 = total_loss(c, 1.0, TrainMode::Parametric);
    CHECK(r1.pc_total == c.pc_sup);

    // all part losses zero -> grand = gcd
    LossComponents no_pc = c;
    no_pc.pc_sup = no_pc.pc_unsup = 0.0;
    const LossReport r2 = total_loss(no_pc, lambda, TrainMode::Parametric);
    CHECK(r2.grand_total == r2.gcd_total);

    // nonparametric: gcd = rep only, pc = lambda * pc_sup, cls zeroed
    const LossReport rn = total_loss(c, lambda, TrainMode::NonParametric);
    CHECK(rn.cls_total == 0.0);
    CHECK(rn.cls_unsup == 0.0);
    CHECK(rn.pc_unsup == 0.0);
    CHECK(rn.gcd_total == rn.rep_total);
    CHECK(rn.pc_total == lambda * c.pc_sup);
    CHECK(rn.pc_total == (1 - lambda) * rn.pc_unsup + lambda * rn.pc_sup);
}

TEST_CASE("loss report flags non-finite components") {
    LossReport r;
    CHECK(r.all_finite());
    r.pc_total = std::numeric_limits<double>::quiet_NaN();
    CHECK(std::string(r.first_non_finite()) == "pc_total");
}

TEST_CASE("cls_loss_unsup is permutation invariant") {
    const std::size_t b = 5, k = 4;
    const DenseMatrix p = random_distributions(b, k, 1);
    const DenseMatrix pp = random_distributions(b, k, 2);
    const DenseMatrix q = random_distributions(b, k, 3);
    const DenseMatrix qp = random_distributions(b, k, 4);
    const double base = cls_loss_unsup(p, pp, q, qp, 1.0).value;
    std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    DenseMatrix p2(b, k), pp2(b, k), q2(b, k), qp2(b, k);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t c = 0; c < k; ++c) {
            p2(i, c) = p(perm[i], c);
            pp2(i, c) = pp(perm[i], c);
            q2(i, c) = q(perm[i], c);
            qp2(i, c) = qp(perm[i], c);
        }
    CHECK(std::abs(cls_loss_unsup(p2, pp2, q2, qp2, 1.0).value - base) <= 1e-12);
}

TEST_CASE("rep_contrastive_sup is permutation invariant") {
    const DenseMatrix z = random_unit_rows(6, 5, 71);
    const std::vector<std::optional<int>> labels = {0, 1, 0, 1, 2, std::nullopt};
    const double base = rep_contrastive_sup(z, labels, 0.07).value;
    const std::vector<std::size_t> perm = {4, 2, 0, 5, 1, 3};
    DenseMatrix z2(6, 5);
    std::vector<std::optional<int>> labels2(6);
    for (std::size_t i = 0; i < 6; ++i) {
        std::copy(z.row(perm[i]).begin(), z.row(perm[i]).end(), z2.row(i).begin());
        labels2[i] = labels[perm[i]];
    }
    CHECK(std::abs(rep_contrastive_sup(z2, labels2, 0.07).value - base) <= 1e-12);
}

TEST_CASE("similarities of normalized embeddings stay within [-1, 1]") {
    const DenseMatrix z = random_unit_rows(12, 7, 81);
    for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t j = 0; j < z.rows(); ++j)
            CHECK(std::abs(dot(z.row(i), z.row(j))) <= 1.0 + 1e-12);
}
