#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mole/tensor.hpp"
#include "oracles.hpp"

using namespace mole;

TEST_CASE("matmul identity and hand-expanded cases") {
    Tensor2D eye(2, 2);
    eye.at(0, 0) = eye.at(1, 1) = 1.0;
    Tensor2D m(2, 2);
    m.at(0, 0) = 1;
    m.at(0, 1) = 2;
    m.at(1, 0) = 3;
    m.at(1, 1) = 4;
    const Tensor2D r = matmul(eye, m);
    CHECK(r == m);

    Tensor2D a(1, 2);
    a.at(0, 0) = 1;
    a.at(0, 1) = 2;
    Tensor2D b(2, 1);
    b.at(0, 0) = 3;
    b.at(1, 0) = 4;
    const Tensor2D c = matmul(a, b);
    CHECK(c.rows == 1);
    CHECK(c.cols == 1);
    CHECK(c.at(0, 0) == 11.0); // 1*3 + 2*4, checked against the ijk oracle below too
    CHECK(c.at(0, 0) == oracle::matmul_ijk(a, b).at(0, 0));
}

TEST_CASE("matmul shape error names both shapes") {
    Tensor2D a(3, 4), b(5, 2);
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("3x4"), ShapeError);
    try {
        matmul(a, b);
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("5x2") != std::string::npos);
    }
}

TEST_CASE("matmul equals scalar triple-loop oracle exactly on random small shapes") {
    Rng rng(1234);
    for (int trial = 0; trial < 200; ++trial) {
        const int m = rng.uniform_int(1, 8);
        const int k = rng.uniform_int(1, 8);
        const int n = rng.uniform_int(1, 8);
        const Tensor2D a = Tensor2D::random_uniform(m, k, -2.0, 2.0, rng);
        const Tensor2D b = Tensor2D::random_uniform(k, n, -2.0, 2.0, rng);
        const Tensor2D got = matmul(a, b);
        const Tensor2D want = oracle::matmul_ijk(a, b);
        REQUIRE(got.rows == want.rows);
        REQUIRE(got.cols == want.cols);
        for (std::size_t i = 0; i < got.data.size(); ++i) {
            REQUIRE(got.data[i] == want.data[i]); // bit-exact
        }
    }
}

TEST_CASE("matmul transposed variants agree with explicit composition") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const int m = rng.uniform_int(1, 7);
        const int k = rng.uniform_int(1, 7);
        const int n = rng.uniform_int(1, 7);
        const Tensor2D a = Tensor2D::random_uniform(m, k, -1.0, 1.0, rng);
        const Tensor2D bt = Tensor2D::random_uniform(n, k, -1.0, 1.0, rng);
        Tensor2D b(k, n);
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < n; ++j) b.at(i, j) = bt.at(j, i);
        }
        const Tensor2D got = matmul_nt(a, bt);
        const Tensor2D want = oracle::matmul_ijk(a, b);
        for (std::size_t i = 0; i < got.data.size(); ++i) {
            REQUIRE(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-14));
        }

        const Tensor2D at = Tensor2D::random_uniform(k, m, -1.0, 1.0, rng);
        Tensor2D a2(m, k);
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < m; ++j) a2.at(j, i) = at.at(i, j);
        }
        const Tensor2D got_tn = matmul_tn(at, b);
        const Tensor2D want_tn = oracle::matmul_ijk(a2, b);
        for (std::size_t i = 0; i < got_tn.data.size(); ++i) {
            REQUIRE(got_tn.data[i] == doctest::Approx(want_tn.data[i]).epsilon(1e-14));
        }
    }
}

TEST_CASE("softmax basics") {
    SUBCASE("uniform on equal logits") {
        Tensor1D z(3, 0.0);
        const Tensor1D y = softmax(z);
        for (int i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(1.0 / 3).epsilon(1e-12));
    }
    SUBCASE("values from the exp-normalize oracle") {
        Tensor1D z(3);
        z[0] = 1;
        z[1] = 2;
        z[2] = 3;
        const Tensor1D y = softmax(z);
        // frozen from the oracle: exp(1,2,3)/sum
        CHECK(y[0] == doctest::Approx(0.09003057317038046).epsilon(1e-12));
        CHECK(y[1] == doctest::Approx(0.24472847105479767).epsilon(1e-12));
        CHECK(y[2] == doctest::Approx(0.66524095577482190).epsilon(1e-12));
        const std::vector<double> ref = oracle::softmax_naive({1, 2, 3});
        for (int i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
    SUBCASE("no overflow at extreme logits") {
        Tensor1D z(2);
        z[0] = 1000;
        z[1] = 0;
        const Tensor1D y = softmax(z);
        CHECK(y[0] == doctest::Approx(1.0));
        CHECK(y[1] == doctest::Approx(0.0));
        CHECK(y.all_finite());
    }
    SUBCASE("empty vector is a shape error") {
        Tensor1D z(0);
        CHECK_THROWS_AS(softmax(z), ShapeError);
    }
}

TEST_CASE("softmax sums to one and shift invariance") {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = rng.uniform_int(1, 12);
        Tensor1D z(n);
        for (int i = 0; i < n; ++i) z[i] = rng.uniform(-30.0, 30.0);
        const Tensor1D y = softmax(z);
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            CHECK(y[i] > 0.0);
            sum += y[i];
        }
        CHECK(std::fabs(sum - 1.0) < 1e-9);

        const double shift = rng.uniform(-50.0, 50.0);
        Tensor1D zs(n);
        for (int i = 0; i < n; ++i) zs[i] = z[i] + shift;
        const Tensor1D ys = softmax(zs);
        for (int i = 0; i < n; ++i) CHECK(std::fabs(y[i] - ys[i]) < 1e-9);
    }
}

TEST_CASE("softmax jacobian vecprod") {
    SUBCASE("uniform y, constant upstream gives zero") {
        Tensor1D y(4, 0.25);
        Tensor1D u(4, 3.5);
        const Tensor1D g = softmax_jacobian_vecprod(y, u);
        for (int i = 0; i < 4; ++i) CHECK(g[i] == doctest::Approx(0.0));
    }
    SUBCASE("one-hot y gives zero for any upstream") {
        Tensor1D y(3, 0.0);
        y[1] = 1.0;
        Tensor1D u(3);
        u[0] = -2;
        u[1] = 5;
        u[2] = 0.3;
        const Tensor1D g = softmax_jacobian_vecprod(y, u);
        for (int i = 0; i < 3; ++i) CHECK(std::fabs(g[i]) < 1e-15);
    }
    SUBCASE("length mismatch is a shape error") {
        Tensor1D y(3, 0.3), u(4, 1.0);
        CHECK_THROWS_AS(softmax_jacobian_vecprod(y, u), ShapeError);
    }
    SUBCASE("matches central finite differences of softmax") {
        Rng rng(42);
        Tensor1D z(3);
        for (int i = 0; i < 3; ++i) z[i] = rng.uniform(-1.0, 1.0);
        Tensor1D u(3);
        for (int i = 0; i < 3; ++i) u[i] = rng.uniform(-1.0, 1.0);
        const Tensor1D y = softmax(z);
        const Tensor1D g = softmax_jacobian_vecprod(y, u);
        for (int j = 0; j < 3; ++j) {
            const double fd = oracle::central_diff(
                [&]() {
                    const Tensor1D yy = softmax(z);
                    double dot = 0.0;
                    for (int i = 0; i < 3; ++i) dot += yy[i] * u[i];
                    return dot;
                },
                &z[j]);
            CHECK(oracle::rel_err(g[j], fd) < 1e-6);
        }
    }
}

TEST_CASE("cross entropy values and gradient") {
    SUBCASE("probability one on target gives zero loss") {
        Tensor2D logits(1, 3, 0.0);
        logits.at(0, 1) = 60.0; // softmax saturates at the target
        const auto res = cross_entropy_with_grad(logits, {1}, {1});
        CHECK(res.loss == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("uniform logits over vocab 4 give ln 4") {
        Tensor2D logits(2, 4, 0.0);
        const auto res = cross_entropy_with_grad(logits, {0, 3}, {1, 1});
        CHECK(res.loss == doctest::Approx(1.3862943611198906).epsilon(1e-12));
    }
    SUBCASE("all-false mask is degenerate") {
        Tensor2D logits(2, 4, 0.0);
        CHECK_THROWS_AS(cross_entropy_with_grad(logits, {0, 1}, {0, 0}), DegenerateInputError);
    }
    SUBCASE("gradient zero at unmasked rows") {
        Rng rng(5);
        Tensor2D logits = Tensor2D::random_uniform(3, 5, -2.0, 2.0, rng);
        const auto res = cross_entropy_with_grad(logits, {0, 2, 4}, {1, 0, 1});
        for (int j = 0; j < 5; ++j) CHECK(res.grad.at(1, j) == 0.0);
    }
    SUBCASE("gradient matches finite differences on a random 3x5 case") {
        Rng rng(2024);
        Tensor2D logits = Tensor2D::random_uniform(3, 5, -2.0, 2.0, rng);
        const std::vector<int> targets = {4, 0, 2};
        const std::vector<std::uint8_t> mask = {1, 0, 1};
        const auto res = cross_entropy_with_grad(logits, targets, mask);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 5; ++j) {
                const double fd = oracle::central_diff(
                    [&]() { return cross_entropy_with_grad(logits, targets, mask).loss; },
                    &logits.at(i, j));
                CHECK(oracle::rel_err(res.grad.at(i, j), fd) < 1e-4);
            }
        }
    }
}

TEST_CASE("every exported gradient matches finite differences on 100 seeds") {
    for (int seed = 0; seed < 100; ++seed) {
        Rng rng(static_cast<std::uint64_t>(seed) + 1000);
        const int n = rng.uniform_int(2, 6);
        Tensor1D z(n);
        for (int i = 0; i < n; ++i) z[i] = rng.uniform(-2.0, 2.0);
        Tensor1D u(n);
        for (int i = 0; i < n; ++i) u[i] = rng.uniform(-1.0, 1.0);
        const Tensor1D g = softmax_jacobian_vecprod(softmax(z), u);
        const int j = rng.uniform_int(0, n - 1);
        const double fd = oracle::central_diff(
            [&]() {
                const Tensor1D y = softmax(z);
                double dot = 0.0;
                for (int i = 0; i < n; ++i) dot += y[i] * u[i];
                return dot;
            },
            &z[j]);
        REQUIRE(oracle::rel_err(g[j], fd) < 1e-4);
    }
}
