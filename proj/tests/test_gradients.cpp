#include <doctest.h>

#include <cmath>
#include <random>

#include "partco/grad_check.hpp"
#include "partco/heads.hpp"
#include "partco/losses.hpp"

using namespace partco;

namespace {

DenseMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                          double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, scale);
    DenseMatrix m(rows, cols);
    for (double& v : m.data()) v = gauss(rng);
    return m;
}

std::vector<double> flatten_mlp(const Mlp& m) {
    std::vector<double> x;
    for (const auto* l : {&m.l1, &m.l2, &m.l3}) {
        x.insert(x.end(), l->w.data().begin(), l->w.data().end());
        x.insert(x.end(), l->b.begin(), l->b.end());
    }
    return x;
}

void unflatten_mlp(Mlp& m, const std::vector<double>& x) {
    std::size_t at = 0;
    for (auto* l : {&m.l1, &m.l2, &m.l3}) {
        std::copy_n(x.begin() + at, l->w.data().size(), l->w.data().begin());
        at += l->w.data().size();
        std::copy_n(x.begin() + at, l->b.size(), l->b.begin());
        at += l->b.size();
    }
}

}  // namespace

TEST_CASE("every named loss passes the finite-difference check") {
    for (const auto& name : grad_check_loss_names()) {
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 10; ++seed)
            worst = std::max(worst, grad_check(name, seed, 1e-5));
        INFO("loss ", name, " worst rel err ", worst);
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("linear probe is exact to machine epsilon scale") {
    CHECK(grad_check("linear_probe", 3, 1e-5) < 1e-9);
}

TEST_CASE("grad_check rejects unknown losses") {
    CHECK_THROWS_AS(grad_check("nope", 0, 1e-5), ArgumentError);
}

TEST_CASE("a deliberately corrupted gradient is detected") {
    const DenseMatrix z = random_matrix(4, 5, 10);
    const DenseMatrix zp = random_matrix(4, 5, 11);
    auto res = rep_contrastive_unsup(z, zp, 0.5);
    std::vector<double> grad = res.dz.data();
    grad.insert(grad.end(), res.dz_prime.data().begin(), res.dz_prime.data().end());
    grad[3] += 0.1;  // corruption
    auto f = [](const std::vector<double>& x) {
        DenseMatrix a(4, 5, std::vector<double>(x.begin(), x.begin() + 20));
        DenseMatrix b(4, 5, std::vector<double>(x.begin() + 20, x.end()));
        return rep_contrastive_unsup(a, b, 0.5).value;
    };
    std::vector<double> x = z.data();
    x.insert(x.end(), zp.data().begin(), zp.data().end());
    CHECK(max_rel_error_fd(f, x, grad, 1e-5) > 1e-2);
}

TEST_CASE("mlp backward matches finite differences through weights and input") {
    const std::size_t in = 4, hidden = 6, out = 3, b = 3;
    const Mlp mlp = Mlp::make(in, hidden, out, 7);
    const DenseMatrix x = random_matrix(b, in, 13);
    const DenseMatrix dout = random_matrix(b, out, 17);

    // scalar objective: sum(dout .* mlp(x))
    auto objective = [&](const Mlp& m, const DenseMatrix& input) {
        const auto cache = m.forward(input);
        double s = 0.0;
        for (std::size_t i = 0; i < cache.output.data().size(); ++i)
            s += dout.data()[i] * cache.output.data()[i];
        return s;
    };

    Mlp grads = Mlp::zeros_like(mlp);
    DenseMatrix dinput;
    const auto cache = mlp.forward(x);
    mlp.backward(cache, dout, grads, &dinput);

    auto f_params = [&](const std::vector<double>& p) {
        Mlp m = mlp;
        unflatten_mlp(m, p);
        return objective(m, x);
    };
    CHECK(max_rel_error_fd(f_params, flatten_mlp(mlp), flatten_mlp(grads), 1e-6) < 1e-5);

    auto f_input = [&](const std::vector<double>& xi) {
        return objective(mlp, DenseMatrix(b, in, xi));
    };
    CHECK(max_rel_error_fd(f_input, x.data(), dinput.data(), 1e-6) < 1e-5);
}

TEST_CASE("trunk adapter backward matches finite differences") {
    const std::size_t d = 5, b = 4;
    TrunkAdapter trunk{random_matrix(d, d, 3, 0.2)};
    const DenseMatrix x = random_matrix(b, d, 5);
    const DenseMatrix dy = random_matrix(b, d, 6);

    auto objective = [&](const TrunkAdapter& t, const DenseMatrix& input) {
        const DenseMatrix y = t.forward(input);
        double s = 0.0;
        for (std::size_t i = 0; i < y.data().size(); ++i) s += dy.data()[i] * y.data()[i];
        return s;
    };

    TrunkAdapter grads{DenseMatrix(d, d)};
    DenseMatrix dinput;
    trunk.backward(x, dy, grads, &dinput);

    auto f_w = [&](const std::vector<double>& w) {
        TrunkAdapter t{DenseMatrix(d, d, w)};
        return objective(t, x);
    };
    CHECK(max_rel_error_fd(f_w, trunk.w.data(), grads.w.data(), 1e-6) < 1e-6);

    auto f_x = [&](const std::vector<double>& xi) {
        return objective(trunk, DenseMatrix(b, d, xi));
    };
    CHECK(max_rel_error_fd(f_x, x.data(), dinput.data(), 1e-6) < 1e-6);
}

TEST_CASE("row normalization backward matches finite differences") {
    const std::size_t b = 4, d = 5;
    const DenseMatrix v = random_matrix(b, d, 19);
    const DenseMatrix dy = random_matrix(b, d, 23);

    auto objective = [&](const DenseMatrix& input) {
        const DenseMatrix y = normalize_rows(input);
        double s = 0.0;
        for (std::size_t i = 0; i < y.data().size(); ++i) s += dy.data()[i] * y.data()[i];
        return s;
    };
    const DenseMatrix y = normalize_rows(v);
    const DenseMatrix dv = normalize_rows_backward(v, y, dy);
    auto f = [&](const std::vector<double>& x) { return objective(DenseMatrix(b, d, x)); };
    CHECK(max_rel_error_fd(f, v.data(), dv.data(), 1e-6) < 1e-6);
}

TEST_CASE("classifier prototype path matches finite differences") {
    const std::size_t b = 4, d = 6, k = 5;
    DenseMatrix o = random_matrix(b, d, 29);
    for (std::size_t i = 0; i < b; ++i) normalize_inplace(o.row(i));
    DenseMatrix prototypes = random_matrix(k, d, 31);
    for (std::size_t i = 0; i < k; ++i) normalize_inplace(prototypes.row(i));
    const DenseMatrix dprobs = random_matrix(b, k, 37);
    const double tau = 0.1;

    auto objective = [&](const DenseMatrix& protos, const DenseMatrix& features) {
        const DenseMatrix p = classifier_probs(features, protos, tau);
        double s = 0.0;
        for (std::size_t i = 0; i < p.data().size(); ++i) s += dprobs.data()[i] * p.data()[i];
        return s;
    };

    const DenseMatrix probs = classifier_probs(o, prototypes, tau);
    DenseMatrix dprototypes(k, d), dout_o(b, d);
    classifier_backward(o, probs, prototypes, tau, dprobs, dprototypes, &dout_o);

    auto f_protos = [&](const std::vector<double>& p) {
        return objective(DenseMatrix(k, d, p), o);
    };
    CHECK(max_rel_error_fd(f_protos, prototypes.data(), dprototypes.data(), 1e-6) < 1e-5);

    auto f_o = [&](const std::vector<double>& x) {
        return objective(prototypes, DenseMatrix(b, d, x));
    };
    CHECK(max_rel_error_fd(f_o, o.data(), dout_o.data(), 1e-6) < 1e-5);
}

TEST_CASE("silu derivative matches finite differences") {
    for (double x : {-3.0, -0.5, 0.0, 0.7, 2.5}) {
        const double h = 1e-6;
        const double fd = (silu(x + h) - silu(x - h)) / (2 * h);
        CHECK(silu_derivative(x) == doctest::Approx(fd).epsilon(1e-7));
    }
}
