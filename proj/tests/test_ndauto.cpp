#include "atss/nd/layers.hpp"
#include "atss/nd/ops.hpp"

#include "atss/error.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

using namespace atss;
using namespace atss::nd;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, bool grad = true) {
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return Tensor::from(std::move(shape), std::move(v), grad);
}

/// Weighted sum with fixed random weights, so every output element has a
/// distinct influence on the scalar being differentiated.
Tensor weighted_sum(Tape& tape, const Tensor& y, const Tensor& w) { return sum(tape, mul(tape, y, w)); }

void backward_once(std::vector<Tensor>& params, const std::function<Tensor(Tape&)>& build) {
    for (auto& p : params) p.zero_grad();
    Tape tape;
    tape.backward(build(tape));
}

double evaluate(const std::function<Tensor(Tape&)>& build) {
    Tape off(false);
    return build(off).item();
}

/// Elementwise finite-difference error after one backward through `build`.
double fd_error(std::vector<Tensor> params, const std::function<Tensor(Tape&)>& build) {
    backward_once(params, build);
    return oracle::check_gradients(params, [&] { return evaluate(build); }).max_rel_error;
}

/// Directional finite-difference error after one backward through `build`.
double jvp_error(std::vector<Tensor> params, const std::function<Tensor(Tape&)>& build, Rng& rng) {
    backward_once(params, build);
    return oracle::check_directional(params, [&] { return evaluate(build); }, rng);
}

}  // namespace

TEST_SUITE("ndauto") {

TEST_CASE("matmul example") {
    Tape tape(false);
    const auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
    const auto b = Tensor::from({2, 2}, {5, 6, 7, 8});
    const auto c = matmul(tape, a, b);
    CHECK(c.shape() == Shape{2, 2});
    CHECK(std::vector<double>(c.value().begin(), c.value().end()) == std::vector<double>{19, 22, 43, 50});
    CHECK_THROWS_AS(matmul(tape, a, Tensor::zeros({3, 2})), ShapeError);
}

TEST_CASE("softmax examples") {
    Tape tape(false);
    auto s = softmax_rows(tape, Tensor::from({1, 2}, {0.0, 0.0}));
    CHECK(s.value()[0] == 0.5);
    CHECK(s.value()[1] == 0.5);

    for (double c : {-50.0, 0.0, 3.0, 700.0}) {
        s = softmax_rows(tape, Tensor::from({1, 2}, {c, c + std::log(3.0)}));
        CHECK(s.value()[0] == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(s.value()[1] == doctest::Approx(0.75).epsilon(1e-12));
    }

    s = softmax_rows(tape, Tensor::from({1, 2}, {1000.0, 0.0}));
    CHECK(std::isfinite(s.value()[1]));
    CHECK(s.value()[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.value()[1] < 1e-300);
}

TEST_CASE("layer norm examples") {
    Tape tape(false);
    const auto gamma = Tensor::from({3}, {1, 1, 1});
    const auto beta = Tensor::from({3}, {0, 0, 0});
    const auto y = layer_norm(tape, Tensor::from({1, 3}, {4, 4, 4}), gamma, beta);
    for (double v : y.value()) CHECK(v == 0.0);

    const auto y2 = layer_norm(tape, Tensor::from({1, 2}, {1, 3}), Tensor::from({2}, {1, 1}),
                               Tensor::from({2}, {0, 0}), 0.0);
    CHECK(y2.value()[0] == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(y2.value()[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("mean pool and concat examples") {
    Tape tape(false);
    const auto p = mean_pool_rows(tape, Tensor::from({2, 2}, {1, 2, 3, 6}));
    CHECK(std::vector<double>(p.value().begin(), p.value().end()) == std::vector<double>{2, 4});

    const auto r = concat_rows(tape, Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 2}, {3, 4, 5, 6}));
    CHECK(r.shape() == Shape{3, 2});
    CHECK(r.at(2, 1) == 6.0);

    const std::vector<Tensor> parts{Tensor::from({2}, {1, 2}), Tensor::from({1}, {3})};
    const auto z = concat_channels(tape, parts);
    CHECK(std::vector<double>(z.value().begin(), z.value().end()) == std::vector<double>{1, 2, 3});
}

TEST_CASE("cross entropy examples") {
    Tape tape(false);
    CHECK(cross_entropy(tape, Tensor::from({2}, {0.5, 0.5}), 1).item() ==
          doctest::Approx(std::numbers::ln2).epsilon(1e-12));
    CHECK(cross_entropy(tape, Tensor::from({2}, {0.1, 0.9}), 1).item() ==
          doctest::Approx(0.105360515657826).epsilon(1e-12));
    CHECK(cross_entropy(tape, Tensor::from({2}, {1.0, 0.0}), 0).item() == 0.0);
    CHECK(std::isfinite(cross_entropy(tape, Tensor::from({2}, {1.0, 0.0}), 1).item()));
    CHECK_THROWS_AS(cross_entropy(tape, Tensor::from({2}, {0.7, 0.7}), 1), NumericError);
}

TEST_CASE("attention weights are uniform for one key or constant scores") {
    Rng rng(6);
    Tape tape(false);
    auto params = xavier_attention(8, 2, rng);
    std::vector<Matrix> w;
    multi_head_attention(tape, random_tensor(rng, {4, 8}), random_tensor(rng, {1, 8}), random_tensor(rng, {1, 8}),
                         params, &w);
    REQUIRE(w.size() == 2);
    for (const auto& h : w)
        for (double v : h.data) CHECK(v == 1.0);

    // Zero query and key projections make every score equal.
    for (auto* lin : {&params.query, &params.key}) {
        for (auto& x : lin->weight.mutable_value()) x = 0.0;
    }
    w.clear();
    multi_head_attention(tape, random_tensor(rng, {3, 8}), random_tensor(rng, {5, 8}), random_tensor(rng, {5, 8}),
                         params, &w);
    for (const auto& h : w)
        for (double v : h.data) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("backward of sum gives ones and of sum(x*x) gives 2x") {
    Rng rng(1);
    auto x = random_tensor(rng, {3, 4});
    {
        Tape tape;
        tape.backward(sum(tape, x));
    }
    for (double g : x.grad()) CHECK(g == 1.0);

    x.zero_grad();
    {
        Tape tape;
        tape.backward(sum(tape, mul(tape, x, x)));
    }
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x.grad()[i] == 2.0 * x.value()[i]);
}

TEST_CASE("leaf gradients accumulate and are linear in the loss") {
    Rng rng(2);
    auto x = random_tensor(rng, {2, 3});
    const auto w = random_tensor(rng, {3, 2}, false);
    auto run = [&](double k) {
        Tape tape;
        tape.backward(scale(tape, sum(tape, relu(tape, matmul(tape, x, w))), k));
    };
    run(1.0);
    const std::vector<double> g1(x.grad().begin(), x.grad().end());
    run(1.0);
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(x.grad()[i] == doctest::Approx(2.0 * g1[i]));

    x.zero_grad();
    run(3.5);
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(x.grad()[i] == doctest::Approx(3.5 * g1[i]));
}

TEST_CASE("backward rejects a non-scalar root") {
    Rng rng(3);
    auto x = random_tensor(rng, {2, 2});
    Tape tape;
    const auto y = relu(tape, x);
    CHECK_THROWS(tape.backward(y));
}

TEST_CASE("non-finite forward values are errors") {
    Tape tape;
    const auto big = Tensor::from({1, 1}, {1e200});
    CHECK_THROWS_AS(matmul(tape, big, big), NumericError);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(softmax_rows(tape, Tensor::from({1, 2}, {nan, 0.0})), NumericError);
}

TEST_CASE("every op matches finite differences") {
    Rng rng(42);
    const double tol = 1e-5;

    SUBCASE("matmul and transpose") {
        auto a = random_tensor(rng, {3, 4});
        auto b = random_tensor(rng, {4, 2});
        const auto w = random_tensor(rng, {2, 3}, false);
        CHECK(fd_error({a, b}, [&](Tape& t) { return weighted_sum(t, transpose(t, matmul(t, a, b)), w); }) < tol);
    }
    SUBCASE("add, add_row, mul, scale") {
        auto a = random_tensor(rng, {3, 4});
        auto b = random_tensor(rng, {3, 4});
        auto bias = random_tensor(rng, {4});
        const auto w = random_tensor(rng, {3, 4}, false);
        CHECK(fd_error({a, b, bias}, [&](Tape& t) {
                  return weighted_sum(t, scale(t, mul(t, add(t, a, b), add_row(t, a, bias)), 0.7), w);
              }) < tol);
    }
    SUBCASE("relu away from the kink") {
        auto a = Tensor::from({2, 3}, {0.5, -0.4, 0.9, -0.8, 0.3, -0.2}, true);
        const auto w = random_tensor(rng, {2, 3}, false);
        CHECK(fd_error({a}, [&](Tape& t) { return weighted_sum(t, relu(t, a), w); }) < tol);
    }
    SUBCASE("softmax_rows") {
        auto a = random_tensor(rng, {3, 5});
        const auto w = random_tensor(rng, {3, 5}, false);
        CHECK(fd_error({a}, [&](Tape& t) { return weighted_sum(t, softmax_rows(t, a), w); }) < tol);
    }
    SUBCASE("layer_norm") {
        auto x = random_tensor(rng, {4, 6});
        auto g = random_tensor(rng, {6});
        auto b = random_tensor(rng, {6});
        const auto w = random_tensor(rng, {4, 6}, false);
        auto build = [&](Tape& t) { return weighted_sum(t, layer_norm(t, x, g, b), w); };
        CHECK(fd_error({x, g, b}, build) < tol);
        for (int k = 0; k < 5; ++k) CHECK(jvp_error({x, g, b}, build, rng) < 1e-6);
    }
    SUBCASE("mean_pool, reshape, concat, slice") {
        auto a = random_tensor(rng, {3, 4});
        auto b = random_tensor(rng, {2, 4});
        const auto w = random_tensor(rng, {6}, false);
        CHECK(fd_error({a, b}, [&](Tape& t) {
                  const auto stacked = concat_rows(t, a, b);
                  const auto cols = slice_cols(t, stacked, 1, 2);
                  const std::vector<Tensor> parts{mean_pool_rows(t, stacked), mean_pool_rows(t, cols)};
                  return weighted_sum(t, reshape(t, concat_channels(t, parts), {6}), w);
              }) < tol);
    }
    SUBCASE("concat_channels on rank 2") {
        auto a = random_tensor(rng, {3, 2});
        auto b = random_tensor(rng, {3, 3});
        const auto w = random_tensor(rng, {3, 5}, false);
        const std::vector<Tensor> parts{a, b};
        CHECK(fd_error({a, b}, [&](Tape& t) { return weighted_sum(t, concat_channels(t, parts), w); }) < tol);
    }
    SUBCASE("cross_entropy through softmax") {
        auto logits = random_tensor(rng, {1, 2});
        for (int label : {0, 1}) {
            CHECK(fd_error({logits}, [&](Tape& t) {
                      return cross_entropy(t, reshape(t, softmax_rows(t, logits), {2}), label);
                  }) < tol);
        }
    }
    SUBCASE("multi-head attention, 4x8 with 2 heads") {
        auto params = xavier_attention(8, 2, rng);
        auto q = random_tensor(rng, {4, 8});
        auto kv = random_tensor(rng, {4, 8});
        const auto w = random_tensor(rng, {4, 8}, false);
        std::vector<Tensor> all{q, kv};
        for (auto* lin : {&params.query, &params.key, &params.value, &params.output}) {
            for (auto& b : lin->bias.mutable_value()) b = rng.uniform(-0.1, 0.1);
            all.push_back(lin->weight);
            all.push_back(lin->bias);
        }
        auto build = [&](Tape& t) { return weighted_sum(t, multi_head_attention(t, q, kv, kv, params), w); };
        for (int k = 0; k < 5; ++k) CHECK(jvp_error(all, build, rng) < tol);
        CHECK(fd_error(all, build) < 1e-4);
    }
}

}  // TEST_SUITE
