#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ces/tensor.hpp"

using namespace ces;

namespace {

Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, bool requires_grad = false,
                     double scale = 1.0) {
    int64_t n = 1;
    for (int s : shape) n *= s;
    std::normal_distribution<double> g(0.0, scale);
    std::vector<double> data(static_cast<size_t>(n));
    for (auto& v : data) v = g(rng);
    return Tensor::from(std::move(shape), std::move(data), requires_grad);
}

} // namespace

TEST_CASE("matmul: identity and zero") {
    std::mt19937_64 rng(1);
    Tensor a = random_tensor({3, 3}, rng);
    Tensor eye = Tensor::zeros({3, 3});
    for (int i = 0; i < 3; i++) eye.data()[i * 3 + i] = 1.0;
    Tensor zero = Tensor::zeros({3, 3});
    Graph g;
    Tensor ai = g.matmul(a, eye);
    Tensor az = g.matmul(a, zero);
    for (int i = 0; i < 9; i++) {
        CHECK(ai.data()[i] == doctest::Approx(a.data()[i]).epsilon(1e-15));
        CHECK(az.data()[i] == 0.0);
    }
}

TEST_CASE("matmul: random pair matches triple-loop oracle to 1e-12") {
    std::mt19937_64 rng(2);
    Tensor a = random_tensor({3, 3}, rng);
    Tensor b = random_tensor({3, 3}, rng);
    Graph g;
    Tensor c = g.matmul(a, b);
    for (int i = 0; i < 3; i++)
        for (int j = 0; j < 3; j++) {
            double ref = 0.0;
            for (int k = 0; k < 3; k++) ref += a.data()[i * 3 + k] * b.data()[k * 3 + j];
            CHECK(std::abs(c.data()[i * 3 + j] - ref) < 1e-12);
        }
}

TEST_CASE("matmul: shape mismatch names both shapes") {
    Graph g;
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 2});
    CHECK_THROWS_WITH_AS(g.matmul(a, b), doctest::Contains("[2x3]"), Error);
    try {
        g.matmul(a, b);
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("[4x2]") != std::string::npos);
    }
}

TEST_CASE("matmul: gradients dA = dC B^T and dB = A^T dC") {
    std::mt19937_64 rng(3);
    Tensor a = random_tensor({2, 3}, rng, true);
    Tensor b = random_tensor({3, 4}, rng, true);
    Graph g;
    Tensor loss = g.sum(g.matmul(a, b));
    g.backward(loss);
    // dC is all-ones, so dA[i,k] = sum_j B[k,j], dB[k,j] = sum_i A[i,k].
    for (int i = 0; i < 2; i++)
        for (int k = 0; k < 3; k++) {
            double ref = 0.0;
            for (int j = 0; j < 4; j++) ref += b.data()[k * 4 + j];
            CHECK(a.grad()[i * 3 + k] == doctest::Approx(ref).epsilon(1e-12));
        }
    for (int k = 0; k < 3; k++)
        for (int j = 0; j < 4; j++) {
            double ref = a.data()[k] + a.data()[3 + k];
            CHECK(b.grad()[k * 4 + j] == doctest::Approx(ref).epsilon(1e-12));
        }
}

TEST_CASE("softmax_cross_entropy: uniform logits give ln K") {
    Tensor logits = Tensor::zeros({1, 4});
    Graph g;
    Tensor loss = g.softmax_cross_entropy(logits, {2});
    CHECK(loss.item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("softmax_cross_entropy: saturates to zero at large margin") {
    Tensor logits = Tensor::from({1, 3}, {20.0, 0.0, 0.0});
    Graph g;
    CHECK(g.softmax_cross_entropy(logits, {0}).item() < 1e-8);
}

TEST_CASE("softmax_cross_entropy: direct-formula oracle") {
    Tensor logits = Tensor::from({1, 3}, {1.0, 2.0, 3.0});
    Graph g;
    const double expected = -3.0 + std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
    CHECK(g.softmax_cross_entropy(logits, {2}).item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("softmax_cross_entropy: ignore sentinel and all-ignored error") {
    Tensor logits = Tensor::from({2, 3}, {1.0, 2.0, 3.0, 9.0, 9.0, 9.0});
    Graph g;
    // Second row ignored: loss equals the single-row loss.
    const double expected = -3.0 + std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
    CHECK(g.softmax_cross_entropy(logits, {2, kIgnoreLabel}).item() ==
          doctest::Approx(expected).epsilon(1e-12));
    CHECK_THROWS_AS(g.softmax_cross_entropy(logits, {kIgnoreLabel, kIgnoreLabel}), Error);
    CHECK_THROWS_AS(g.softmax_cross_entropy(logits, {3, kIgnoreLabel}), Error);
}

TEST_CASE("layer_norm: constant row maps to zeros") {
    Tensor x = Tensor::from({1, 5}, std::vector<double>(5, 3.7));
    Tensor gamma = Tensor::from({5}, std::vector<double>(5, 1.0));
    Tensor beta = Tensor::zeros({5});
    Graph g;
    Tensor y = g.layer_norm(x, gamma, beta);
    for (double v : y.data()) CHECK(std::abs(v) < 1e-6);
}

TEST_CASE("layer_norm: zero-mean unit-variance row is a fixed point") {
    // Mean 0, population variance 1.
    Tensor x = Tensor::from({1, 4}, {-1.0, 1.0, -1.0, 1.0});
    Tensor gamma = Tensor::from({4}, std::vector<double>(4, 1.0));
    Tensor beta = Tensor::zeros({4});
    Graph g;
    Tensor y = g.layer_norm(x, gamma, beta);
    for (int i = 0; i < 4; i++) CHECK(y.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-6));
}

TEST_CASE("layer_norm: matches two-pass mean/variance oracle to 1e-10") {
    std::mt19937_64 rng(4);
    const int d = 11;
    Tensor x = random_tensor({1, d}, rng);
    Tensor gamma = random_tensor({d}, rng);
    Tensor beta = random_tensor({d}, rng);
    Graph g;
    Tensor y = g.layer_norm(x, gamma, beta, 1e-6);
    double mu = 0.0;
    for (double v : x.data()) mu += v;
    mu /= d;
    double var = 0.0;
    for (double v : x.data()) var += (v - mu) * (v - mu);
    var /= d;
    for (int j = 0; j < d; j++) {
        const double ref = (x.data()[j] - mu) / std::sqrt(var + 1e-6) * gamma.data()[j] + beta.data()[j];
        CHECK(std::abs(y.data()[j] - ref) < 1e-10);
    }
}

TEST_CASE("backward: sum gives all-ones; sum of squares gives 2x") {
    std::mt19937_64 rng(5);
    Tensor x = random_tensor({2, 3}, rng, true);
    {
        Graph g;
        g.backward(g.sum(x));
        for (double v : x.grad()) CHECK(v == 1.0);
        x.zero_grad();
    }
    {
        Graph g;
        g.backward(g.sum(g.mul(x, x)));
        for (int i = 0; i < 6; i++)
            CHECK(x.grad()[i] == doctest::Approx(2.0 * x.data()[i]).epsilon(1e-12));
    }
}

TEST_CASE("backward: errors on non-scalar loss and on double backward") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    Graph g;
    Tensor y = g.mul(x, x);
    CHECK_THROWS_AS(g.backward(y), Error);
    Tensor s = g.sum(y);
    g.backward(s);
    CHECK_THROWS_AS(g.backward(s), Error);
}

TEST_CASE("backward: gradient accumulates additively across fan-out") {
    Tensor x = Tensor::from({2}, {3.0, -1.0}, true);
    Graph g;
    Tensor y = g.add(x, x);
    g.backward(g.sum(y));
    for (double v : x.grad()) CHECK(v == 2.0);
}

TEST_CASE("linearity: backward of sum of losses equals sum of backwards") {
    std::mt19937_64 rng(6);
    Tensor x = random_tensor({3, 3}, rng, true);
    Tensor w = random_tensor({3, 3}, rng, true);
    auto loss1 = [&](Graph& g) { return g.sum(g.matmul(x, w)); };
    auto loss2 = [&](Graph& g) { return g.sum(g.mul(x, x)); };
    {
        Graph g;
        g.backward(g.add(loss1(g), loss2(g)));
    }
    auto combined = x.grad();
    x.zero_grad();
    w.zero_grad();
    {
        Graph g;
        g.backward(loss1(g));
    }
    {
        Graph g;
        g.backward(loss2(g));
    }
    for (size_t i = 0; i < combined.size(); i++)
        CHECK(std::abs(combined[i] - x.grad()[i]) < 1e-12);
}

TEST_CASE("grad_check: exact for linear, <=1e-4 for cross entropy") {
    std::mt19937_64 rng(7);
    Tensor x = random_tensor({2, 3}, rng, true);
    CHECK(grad_check([&](Graph& g) { return g.sum(x); }, {x}) <= 1e-10);

    Tensor logits = random_tensor({4, 5}, rng, true);
    CHECK(grad_check([&](Graph& g) {
              return g.softmax_cross_entropy(logits, {1, 4, kIgnoreLabel, 0});
          }, {logits}) <= 1e-4);
}

TEST_CASE("grad_check: random 2-layer MLP matches finite differences") {
    std::mt19937_64 rng(8);
    Tensor x = random_tensor({4, 6}, rng);
    Tensor w1 = random_tensor({6, 8}, rng, true, 0.5);
    Tensor b1 = random_tensor({8}, rng, true, 0.1);
    Tensor w2 = random_tensor({8, 3}, rng, true, 0.5);
    Tensor b2 = random_tensor({3}, rng, true, 0.1);
    auto f = [&](Graph& g) {
        Tensor h = g.gelu(g.add_bias(g.matmul(x, w1), b1));
        Tensor logits = g.add_bias(g.matmul(h, w2), b2);
        return g.softmax_cross_entropy(logits, {0, 2, 1, 2});
    };
    CHECK(grad_check(f, {w1, b1, w2, b2}) <= 1e-4);
}

TEST_CASE("grad_check: attention, layer_norm and pooling composed") {
    std::mt19937_64 rng(9);
    const int len = 5, d = 8, heads = 2;
    Tensor x = random_tensor({len, d}, rng);
    Tensor wq = random_tensor({d, d}, rng, true, 0.3);
    Tensor wk = random_tensor({d, d}, rng, true, 0.3);
    Tensor wv = random_tensor({d, d}, rng, true, 0.3);
    Tensor gamma = Tensor::from({d}, std::vector<double>(d, 1.0), true);
    Tensor beta = Tensor::zeros({d}, true);
    Tensor w_cls = random_tensor({d, 2}, rng, true, 0.3);
    std::vector<uint8_t> valid(len, 1);
    valid[len - 1] = 0; // one padded key
    auto f = [&](Graph& g) {
        Tensor q = g.matmul(x, wq), k = g.matmul(x, wk), v = g.matmul(x, wv);
        Tensor ctx = g.attention(q, k, v, heads, {{0, len, 0, len}}, valid);
        Tensor h = g.layer_norm(g.add(x, ctx), gamma, beta);
        Tensor pooled = g.slice_rows(h, 0, 1);
        return g.softmax_cross_entropy(g.matmul(pooled, w_cls), {1});
    };
    CHECK(grad_check(f, {wq, wk, wv, gamma, beta, w_cls}) <= 1e-4);
}

TEST_CASE("attention: padded keys receive exactly zero weight") {
    std::mt19937_64 rng(10);
    const int len = 4, d = 4;
    Tensor q = random_tensor({len, d}, rng);
    Tensor k = random_tensor({len, d}, rng);
    Tensor v = random_tensor({len, d}, rng);
    std::vector<uint8_t> valid = {1, 1, 0, 0};
    Graph g;
    Tensor ctx = g.attention(q, k, v, 2, {{0, len, 0, len}}, valid);
    // Perturbing an invalid value row must not change the context.
    Tensor v2 = Tensor::from(v.shape(), v.data());
    v2.data()[2 * d] += 100.0;
    Graph g2;
    Tensor ctx2 = g2.attention(q, k, v2, 2, {{0, len, 0, len}}, valid);
    CHECK(ctx.data() == ctx2.data());
}

TEST_CASE("checked mode reports non-finite values, unchecked does not") {
    Tensor x = Tensor::from({2}, {1.0, 1e308});
    Graph checked(true, true);
    CHECK_THROWS_AS(checked.add(x, x), Error);
    Graph unchecked(true, false);
    CHECK_NOTHROW(unchecked.add(x, x));
}

TEST_CASE("determinism: identical inputs produce bit-identical forwards") {
    std::mt19937_64 rng(11);
    Tensor a = random_tensor({7, 9}, rng);
    Tensor b = random_tensor({9, 5}, rng);
    Graph g1, g2;
    CHECK(g1.matmul(a, b).data() == g2.matmul(a, b).data());
}

TEST_CASE("grad_check reports non-finite coordinate") {
    Tensor x = Tensor::from({2}, {1e200, 1.0}, true);
    auto f = [&](Graph& g) { return g.sum(g.mul(g.mul(x, x), x)); };
    CHECK_THROWS_AS(grad_check(f, {x}), Error);
}

TEST_CASE("dropout: rate zero is identity, mask is reused in backward") {
    std::mt19937_64 rng(12);
    Tensor x = random_tensor({4, 4}, rng, true);
    Graph g;
    std::mt19937_64 drng(99);
    Tensor y = g.dropout(x, 0.0, drng);
    CHECK(y.same_storage(x));
    Tensor z = g.dropout(x, 0.5, drng);
    g.backward(g.sum(z));
    for (size_t i = 0; i < x.data().size(); i++) {
        const bool dropped = z.data()[i] == 0.0 && x.data()[i] != 0.0;
        if (dropped)
            CHECK(x.grad()[i] == 0.0);
        else
            CHECK(x.grad()[i] == doctest::Approx(2.0).epsilon(1e-12));
    }
}
