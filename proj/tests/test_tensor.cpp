#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "ciftts/tensor.hpp"
#include "doctest.h"

using namespace ciftts;

TEST_CASE("matmul identity and hand arithmetic") {
    Tensor I = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor A = Tensor::from({2, 2}, {3, -1, 2, 5});
    Tensor r = matmul(I, A);
    for (int64_t i = 0; i < 4; ++i) CHECK(r.values()[i] == A.values()[i]);

    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from({2, 1}, {1, 1});
    Tensor c = matmul(a, b);
    CHECK(c.at(0, 0) == doctest::Approx(3));
    CHECK(c.at(1, 0) == doctest::Approx(7));

    Tensor z = matmul(Tensor::zeros({3, 4}), Tensor::full({4, 2}, 7.0));
    CHECK(z.shape() == std::vector<int64_t>{3, 2});
    for (double v : z.values()) CHECK(v == 0.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b),
                         doctest::Contains("[2,3]"), std::invalid_argument);
}

TEST_CASE("conv1d examples") {
    // identity kernel K=1, value 1
    Tensor x = Tensor::from({1, 3}, {1, 2, 3});
    Tensor k = Tensor::from({1, 1, 1}, {1.0});
    Tensor y = conv1d(x, k, Tensor(), 1, 0, 0);
    CHECK(y.values() == std::vector<double>{1, 2, 3});

    // K=2 kernel [1,1], stride 2, no pad
    Tensor x2 = Tensor::from({1, 4}, {1, 1, 1, 1});
    Tensor k2 = Tensor::from({1, 1, 2}, {1, 1});
    Tensor y2 = conv1d(x2, k2, Tensor(), 2, 0, 0);
    CHECK(y2.values() == std::vector<double>{2, 2});

    // length formula: stride 2, K=4, W=8, no pad -> W' = 3
    Tensor x3 = Tensor::zeros({1, 8});
    Tensor k3 = Tensor::zeros({1, 1, 4});
    CHECK(conv1d(x3, k3, Tensor(), 2, 0, 0).dim(1) == 3);

    // kernel wider than padded input
    CHECK_THROWS_AS(conv1d(Tensor::zeros({1, 2}), k3, Tensor(), 1, 0, 0), std::invalid_argument);
}

TEST_CASE("elementwise definitions") {
    CHECK(relu(Tensor::scalar(-3)).item() == 0.0);
    CHECK(elu(Tensor::scalar(0)).item() == 0.0);
    CHECK(elu(Tensor::scalar(-30)).item() == doctest::Approx(-1.0).epsilon(1e-9));
    Tensor s = softmax(Tensor::from({2}, {0, 0}), 0);
    CHECK(s.values()[0] == doctest::Approx(0.5));
    CHECK(s.values()[1] == doctest::Approx(0.5));
    CHECK_THROWS_AS(ciftts::log(Tensor::scalar(-1)), std::domain_error);
}

TEST_CASE("softmax is a probability vector") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-5, 5);
    std::vector<double> v(24);
    for (auto& x : v) x = u(rng);
    Tensor s = softmax(Tensor::from({4, 6}, v), 1);
    for (int64_t r = 0; r < 4; ++r) {
        double sum = 0;
        for (int64_t c = 0; c < 6; ++c) {
            CHECK(s.at(r, c) >= 0.0);
            sum += s.at(r, c);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("moments examples") {
    auto [m, v] = moments(Tensor::from({3}, {1, 2, 3}), 0);
    CHECK(m.item() == doctest::Approx(2.0));
    CHECK(v.item() == doctest::Approx(2.0 / 3.0));

    auto [mc, vc] = moments(Tensor::full({5}, 4.2), 0);
    CHECK(vc.item() == doctest::Approx(0.0));

    auto [m2, v2] = moments(Tensor::from({2}, {0, 2}), 0);
    CHECK(m2.item() == doctest::Approx(1.0));
    CHECK(v2.item() == doctest::Approx(1.0));
}

TEST_CASE("backward basics") {
    Tensor x = Tensor::from({3}, {1, 2, 3}, true);
    backward(sum(x));
    for (double g : x.grad()) CHECK(g == 1.0);

    Tensor y = Tensor::from({2}, {1, 2}, true);
    backward(sum(mul(y, y)));
    CHECK(y.grad()[0] == doctest::Approx(2));
    CHECK(y.grad()[1] == doctest::Approx(4));

    CHECK_THROWS_AS(backward(Tensor::from({2}, {1, 2}, true)), std::invalid_argument);
}

TEST_CASE("backward twice yields identical gradients (documented idempotence)") {
    Tensor x = Tensor::from({4}, {0.3, -1.2, 2.0, 0.7}, true);
    Tensor l = sum(mul(ciftts::exp(x), tanh(x)));
    backward(l);
    std::vector<double> first = x.grad();
    backward(l);
    CHECK(x.grad() == first);
}

TEST_CASE("grad_check on simple functions") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<double> v(6);
        for (auto& x : v) x = u(rng);
        double err = grad_check([](const Tensor& t) { return sum(square(t)); },
                                Tensor::from({2, 3}, v), 1e-5);
        CHECK(err < 1e-6);
    }
}

TEST_CASE("broadcasting is restricted to leading singleton dims") {
    Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor row = Tensor::from({1, 3}, {10, 20, 30});
    Tensor r = add(a, row);
    CHECK(r.at(1, 2) == doctest::Approx(36));
    // a column vector is not a trailing suffix of [2,3]
    CHECK_THROWS_AS(add(a, Tensor::from({2, 1}, {1, 2})), std::invalid_argument);
}

TEST_CASE("gradient accumulates at fan-out") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    Tensor l = add(sum(x), sum(mul(x, x)));
    backward(l);
    CHECK(x.grad()[0] == doctest::Approx(1 + 2));
    CHECK(x.grad()[1] == doctest::Approx(1 + 4));
}

TEST_CASE("reshape, concat, slice, gather, scale_rows") {
    Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(reshape(a, {3, 2}).at(2, 1) == 6);
    Tensor c0 = concat({a, a}, 0);
    CHECK(c0.shape() == std::vector<int64_t>{4, 3});
    Tensor c1 = concat({a, a}, 1);
    CHECK(c1.shape() == std::vector<int64_t>{2, 6});
    CHECK(slice_cols(a, 1, 2).at(0, 0) == 2);
    Tensor g = gather_rows(a, {1, 0, 1});
    CHECK(g.at(0, 0) == 4);
    CHECK(g.dim(0) == 3);
    Tensor sr = scale_rows(a, Tensor::from({2, 1}, {2.0, 0.5}));
    CHECK(sr.at(0, 2) == doctest::Approx(6));
    CHECK(sr.at(1, 0) == doctest::Approx(2));
}

TEST_CASE("normalize matches moments") {
    Tensor x = Tensor::from({2, 4}, {1, 2, 3, 4, -1, 0, 1, 2});
    Tensor y = normalize(x, 1, 1e-12);
    auto [m, v] = moments(y, 1);
    for (double mm : m.values()) CHECK(std::fabs(mm) < 1e-12);
    for (double vv : v.values()) CHECK(vv == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("avg_pool1d and dropout") {
    Tensor x = Tensor::from({1, 4}, {1, 2, 3, 4});
    Tensor p = avg_pool1d(x, 2, 2);
    CHECK(p.values() == std::vector<double>{1.5, 3.5});

    std::mt19937_64 rng(3);
    Tensor d = dropout(Tensor::full({100}, 1.0), 0.5, rng, false);
    for (double v : d.values()) CHECK(v == 1.0);  // inference mode is identity
}
