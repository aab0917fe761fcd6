#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mole/mole_linear.hpp"
#include "oracles.hpp"

using namespace mole;

namespace {

MoleLinear random_layer(int m, int n, int t, int r, double alpha, Rng& rng,
                        bool randomize_adapters) {
    MoleLinear layer = MoleLinear::init(m, n, t, r, alpha, rng);
    if (randomize_adapters) {
        for (int i = 0; i < t; ++i) {
            for (double& v : layer.mutable_expert_b(i).data) v = rng.uniform(-0.5, 0.5);
            for (double& v : layer.mutable_expert_a(i).data) v = rng.uniform(-0.5, 0.5);
        }
        for (double& v : layer.mutable_router_weight().data) v = rng.uniform(-0.5, 0.5);
    }
    return layer;
}

Tensor1D random_vec(int n, Rng& rng) {
    Tensor1D x(n);
    for (int i = 0; i < n; ++i) x[i] = rng.uniform(-1.0, 1.0);
    return x;
}

/// Scalar objective for finite differencing: <upstream, forward(x)>.
double objective(const MoleLinear& layer, const Tensor1D& x, const Tensor1D& upstream) {
    const auto [h, cache] = layer.forward(x);
    double dot = 0.0;
    for (int i = 0; i < h.len(); ++i) dot += h[i] * upstream[i];
    return dot;
}

} // namespace

TEST_CASE("routing: zero gate gives uniform weights") {
    Rng rng(1);
    const MoleLinear layer = MoleLinear::init(4, 5, 3, 2, 16.0, rng);
    const Tensor1D r = layer.route(random_vec(5, rng));
    for (int i = 0; i < 3; ++i) CHECK(r[i] == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("routing: scaled copies of x recover the softmax oracle") {
    Rng rng(2);
    const int n = 4;
    MoleLinear layer = MoleLinear::init(3, n, 3, 2, 16.0, rng);
    const Tensor1D x = random_vec(n, rng);
    double sq = 0.0;
    for (int i = 0; i < n; ++i) sq += x[i] * x[i];
    Tensor2D& wg = layer.mutable_router_weight();
    const double scales[3] = {0.5, -1.0, 2.0};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < n; ++j) wg.at(i, j) = scales[i] * x[j];
    }
    const Tensor1D r = layer.route(x);
    const std::vector<double> want = oracle::softmax_naive({0.5 * sq, -1.0 * sq, 2.0 * sq});
    for (int i = 0; i < 3; ++i) CHECK(r[i] == doctest::Approx(want[i]).epsilon(1e-10));
}

TEST_CASE("routing: wrong input length is a shape error") {
    Rng rng(3);
    const MoleLinear layer = MoleLinear::init(4, 5, 3, 2, 16.0, rng);
    CHECK_THROWS_AS(layer.route(random_vec(6, rng)), ShapeError);
    CHECK_THROWS_AS(layer.forward(random_vec(4, rng)), ShapeError);
}

TEST_CASE("routing simplex holds over random inputs and random gates") {
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = rng.uniform_int(1, 8);
        const int t = rng.uniform_int(1, 4);
        MoleLinear layer = random_layer(rng.uniform_int(1, 8), n, t, 1, 16.0, rng, true);
        const Tensor1D r = layer.route(random_vec(n, rng));
        double sum = 0.0;
        for (int i = 0; i < t; ++i) {
            CHECK(r[i] > 0.0);
            CHECK(r[i] < 1.0 + 1e-12);
            sum += r[i];
        }
        CHECK(std::fabs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("zero-init identity: fresh layer computes exactly W0 x") {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const int m = rng.uniform_int(1, 16);
        const int n = rng.uniform_int(1, 16);
        const int r = rng.uniform_int(1, std::min({4, m, n}));
        const int t = rng.uniform_int(1, 4);
        const MoleLinear layer = MoleLinear::init(m, n, t, r, 16.0, rng);
        const Tensor1D x = random_vec(n, rng);
        const auto [h, cache] = layer.forward(x);
        const Tensor1D base = matvec(layer.base_weight(), x);
        for (int i = 0; i < m; ++i) CHECK(h[i] == base[i]); // exact, additive term is zero
    }
}

TEST_CASE("T=1 degenerate mixture equals the plain scaled adapter") {
    Rng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        const int m = rng.uniform_int(1, 8);
        const int n = rng.uniform_int(1, 8);
        const int r = rng.uniform_int(1, std::min({2, m, n}));
        MoleLinear layer = random_layer(m, n, 1, r, 16.0, rng, true);
        const Tensor1D x = random_vec(n, rng);
        const auto [h, cache] = layer.forward(x);

        // plain adapter route: W0 x + (alpha/r) * B (A x)
        const LoraExpert& e = layer.experts()[0];
        Tensor1D want = matvec(layer.base_weight(), x);
        const Tensor1D bax = matvec(e.b, matvec(e.a, x));
        const double s = e.alpha / e.rank;
        for (int i = 0; i < m; ++i) want[i] += s * bax[i];
        for (int i = 0; i < m; ++i) CHECK(std::fabs(h[i] - want[i]) <= 1e-12);
    }
}

TEST_CASE("small integer example against a direct arithmetic oracle") {
    // m = n = 2, r = 1, T = 2, alpha = 2 so the scaling is 2/1 = 2
    Rng rng(7);
    MoleLinear layer = MoleLinear::init(2, 2, 2, 1, 2.0, rng);
    Tensor2D w0(2, 2);
    w0.at(0, 0) = 1;
    w0.at(0, 1) = 2;
    w0.at(1, 0) = 3;
    w0.at(1, 1) = 4;
    std::vector<LoraExpert> experts;
    for (int i = 0; i < 2; ++i) {
        LoraExpert e;
        e.rank = 1;
        e.alpha = 2.0;
        e.a = Tensor2D(1, 2);
        e.b = Tensor2D(2, 1);
        experts.push_back(e);
    }
    experts[0].a.at(0, 0) = 1;
    experts[0].a.at(0, 1) = 0;
    experts[0].b.at(0, 0) = 1;
    experts[0].b.at(1, 0) = 1;
    experts[1].a.at(0, 0) = 0;
    experts[1].a.at(0, 1) = 1;
    experts[1].b.at(0, 0) = 2;
    experts[1].b.at(1, 0) = 0;
    Router router;
    router.w_g = Tensor2D(2, 2, 0.0); // uniform routing
    layer = MoleLinear::from_parts(w0, experts, router);

    Tensor1D x(2);
    x[0] = 1;
    x[1] = 2;
    const auto [h, cache] = layer.forward(x);
    // oracle arithmetic: W0 x = (5, 11); R = (1/2, 1/2); s = 2
    // E1 = B1 A1 x = (1, 1); E2 = B2 A2 x = (4, 0)
    // h = (5,11) + 0.5*2*(1,1) + 0.5*2*(4,0) = (10, 12)
    CHECK(h[0] == doctest::Approx(10.0).epsilon(1e-14));
    CHECK(h[1] == doctest::Approx(12.0).epsilon(1e-14));
}

TEST_CASE("backward: zero upstream gives zero gradients") {
    Rng rng(8);
    MoleLinear layer = random_layer(4, 5, 3, 2, 16.0, rng, true);
    const Tensor1D x = random_vec(5, rng);
    const auto [h, cache] = layer.forward(x);
    const MoleGradients g = layer.backward(cache, Tensor1D(4, 0.0));
    for (const Tensor2D& da : g.d_a) {
        for (double v : da.data) CHECK(v == 0.0);
    }
    for (const Tensor2D& db : g.d_b) {
        for (double v : db.data) CHECK(v == 0.0);
    }
    for (double v : g.d_wg.data) CHECK(v == 0.0);
    for (double v : g.d_x.data) CHECK(v == 0.0);
}

TEST_CASE("backward gradients pass finite differences on 50 random configs") {
    for (int seed = 0; seed < 50; ++seed) {
        Rng rng(1000 + static_cast<std::uint64_t>(seed));
        const int m = rng.uniform_int(2, 6);
        const int n = rng.uniform_int(2, 6);
        const int r = rng.uniform_int(1, 2);
        const int t = rng.uniform_int(1, 3);
        MoleLinear layer = random_layer(m, n, t, r, 16.0, rng, true);
        Tensor1D x = random_vec(n, rng);
        const Tensor1D upstream = random_vec(m, rng);

        const auto [h, cache] = layer.forward(x);
        const MoleGradients g = layer.backward(cache, upstream);

        auto f = [&]() { return objective(layer, x, upstream); };

        for (int i = 0; i < t; ++i) {
            Tensor2D& a = layer.mutable_expert_a(i);
            for (int row = 0; row < a.rows; ++row) {
                for (int col = 0; col < a.cols; ++col) {
                    const double fd = oracle::central_diff(f, &a.at(row, col));
                    REQUIRE(oracle::rel_err(g.d_a[static_cast<std::size_t>(i)].at(row, col), fd) <
                            1e-4);
                }
            }
            Tensor2D& b = layer.mutable_expert_b(i);
            for (int row = 0; row < b.rows; ++row) {
                for (int col = 0; col < b.cols; ++col) {
                    const double fd = oracle::central_diff(f, &b.at(row, col));
                    REQUIRE(oracle::rel_err(g.d_b[static_cast<std::size_t>(i)].at(row, col), fd) <
                            1e-4);
                }
            }
        }
        Tensor2D& wg = layer.mutable_router_weight();
        for (int row = 0; row < wg.rows; ++row) {
            for (int col = 0; col < wg.cols; ++col) {
                const double fd = oracle::central_diff(f, &wg.at(row, col));
                REQUIRE(oracle::rel_err(g.d_wg.at(row, col), fd) < 1e-4);
            }
        }
        for (int j = 0; j < n; ++j) {
            const double fd = oracle::central_diff(f, &x[j]);
            REQUIRE(oracle::rel_err(g.d_x[j], fd) < 1e-4);
        }
    }
}

TEST_CASE("router gradient vanishes when all experts output identical vectors") {
    Rng rng(9);
    const int m = 3, n = 4, r = 2, t = 3;
    MoleLinear layer = MoleLinear::init(m, n, t, r, 16.0, rng);
    // same A and B for every expert: B1 A1 = B2 A2 = B3 A3
    Tensor2D a_shared = Tensor2D::random_uniform(r, n, -0.5, 0.5, rng);
    Tensor2D b_shared = Tensor2D::random_uniform(m, r, -0.5, 0.5, rng);
    for (int i = 0; i < t; ++i) {
        layer.mutable_expert_a(i) = a_shared;
        layer.mutable_expert_b(i) = b_shared;
    }
    for (double& v : layer.mutable_router_weight().data) v = rng.uniform(-0.5, 0.5);

    Tensor1D x = random_vec(n, rng);
    const Tensor1D upstream = random_vec(m, rng);
    const auto [h, cache] = layer.forward(x);
    const MoleGradients g = layer.backward(cache, upstream);
    for (double v : g.d_wg.data) CHECK(std::fabs(v) < 1e-12);

    // and finite differences agree that moving the gate changes nothing
    auto f = [&]() { return objective(layer, x, upstream); };
    Tensor2D& wg = layer.mutable_router_weight();
    for (int row = 0; row < wg.rows; ++row) {
        for (int col = 0; col < wg.cols; ++col) {
            CHECK(std::fabs(oracle::central_diff(f, &wg.at(row, col))) < 1e-9);
        }
    }
}

TEST_CASE("stale and foreign caches raise contract errors") {
    Rng rng(10);
    MoleLinear layer = random_layer(3, 4, 2, 1, 16.0, rng, true);
    MoleLinear other = random_layer(3, 4, 2, 1, 16.0, rng, true);
    const Tensor1D x = random_vec(4, rng);
    const Tensor1D upstream = random_vec(3, rng);

    auto [h1, cache] = layer.forward(x);
    CHECK_THROWS_AS(other.backward(cache, upstream), ContractError);

    layer.mutable_expert_a(0).at(0, 0) += 0.1; // parameters changed -> cache stale
    CHECK_THROWS_AS(layer.backward(cache, upstream), ContractError);

    auto [h2, fresh] = layer.forward(x);
    CHECK_NOTHROW(layer.backward(fresh, upstream));
}

TEST_CASE("batched paths agree with per-token paths") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = rng.uniform_int(2, 6);
        const int n = rng.uniform_int(2, 6);
        const int t = rng.uniform_int(1, 3);
        const int rows = rng.uniform_int(1, 5);
        MoleLinear layer = random_layer(m, n, t, 2 <= std::min(m, n) ? 2 : 1, 16.0, rng, true);

        Tensor2D xb(rows, n);
        Tensor2D ub(rows, m);
        for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < n; ++j) xb.at(i, j) = rng.uniform(-1.0, 1.0);
            for (int j = 0; j < m; ++j) ub.at(i, j) = rng.uniform(-1.0, 1.0);
        }
        const auto [hb, bcache] = layer.forward_batch(xb);
        const MoleBatchGradients bg = layer.backward_batch(bcache, ub);
        const Tensor2D applied = layer.apply_batch(xb);

        std::vector<MoleGradients> per_token;
        for (int i = 0; i < rows; ++i) {
            const auto [h, cache] = layer.forward(xb.row(i));
            for (int j = 0; j < m; ++j) {
                CHECK(oracle::rel_err(hb.at(i, j), h[j]) < 1e-12);
                CHECK(oracle::rel_err(applied.at(i, j), h[j]) < 1e-12);
            }
            per_token.push_back(layer.backward(cache, ub.row(i)));
        }
        // parameter gradients sum over rows
        for (int e = 0; e < t; ++e) {
            Tensor2D sum_a(bg.d_a[static_cast<std::size_t>(e)].rows,
                           bg.d_a[static_cast<std::size_t>(e)].cols);
            Tensor2D sum_b(bg.d_b[static_cast<std::size_t>(e)].rows,
                           bg.d_b[static_cast<std::size_t>(e)].cols);
            for (const MoleGradients& g : per_token) {
                add_inplace(sum_a, g.d_a[static_cast<std::size_t>(e)]);
                add_inplace(sum_b, g.d_b[static_cast<std::size_t>(e)]);
            }
            for (std::size_t i = 0; i < sum_a.data.size(); ++i) {
                CHECK(oracle::rel_err(bg.d_a[static_cast<std::size_t>(e)].data[i],
                                      sum_a.data[i]) < 1e-10);
            }
            for (std::size_t i = 0; i < sum_b.data.size(); ++i) {
                CHECK(oracle::rel_err(bg.d_b[static_cast<std::size_t>(e)].data[i],
                                      sum_b.data[i]) < 1e-10);
            }
        }
        for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < n; ++j) {
                CHECK(oracle::rel_err(bg.d_x.at(i, j), per_token[static_cast<std::size_t>(i)].d_x[j]) <
                      1e-10);
            }
        }
    }
}

TEST_CASE("mean_router_weights averages onto the simplex") {
    SUBCASE("single row equals route() by definition") {
        Rng rng(12);
        MoleLinear layer = random_layer(3, 4, 3, 1, 16.0, rng, true);
        const Tensor1D x = random_vec(4, rng);
        const Tensor1D r = layer.route(x);
        Tensor2D rows(1, 3);
        for (int i = 0; i < 3; ++i) rows.at(0, i) = r[i];
        const auto means = mean_router_weights({{"detection", {rows}}});
        for (int i = 0; i < 3; ++i) CHECK(means.at("detection")[i] == r[i]);
    }
    SUBCASE("uniform rows stay uniform and sum to one") {
        Tensor2D rows(5, 4, 0.25);
        const auto means = mean_router_weights({{"reasoning", {rows, rows}}});
        double sum = 0.0;
        for (int i = 0; i < 4; ++i) {
            CHECK(means.at("reasoning")[i] == doctest::Approx(0.25).epsilon(1e-12));
            sum += means.at("reasoning")[i];
        }
        CHECK(std::fabs(sum - 1.0) < 1e-6);
    }
    SUBCASE("empty task group is degenerate") {
        std::map<std::string, std::vector<Tensor2D>> empty_group;
        empty_group["classification"] = {};
        CHECK_THROWS_AS(mean_router_weights(empty_group), DegenerateInputError);
    }
}

TEST_CASE("invariant violations at construction") {
    Rng rng(13);
    CHECK_THROWS_AS(MoleLinear::init(2, 2, 3, 3, 16.0, rng), ValidationError); // r > min(m,n)
    CHECK_THROWS_AS(MoleLinear::init(2, 2, 0, 1, 16.0, rng), ValidationError);
    CHECK_THROWS_AS(MoleLinear::init(2, 2, 1, 1, -1.0, rng), ValidationError);
}
