#include <doctest.h>

#include <functional>
#include <random>

#include "wuyun/nn/tensor.hpp"

using namespace wuyun::nn;

namespace {

using T = double;

Tensor<T> randn(int rows, int cols, std::mt19937_64& rng, bool requires_grad = true) {
    Tensor<T> t(rows, cols, requires_grad);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& v : t.value()) v = dist(rng);
    return t;
}

// numeric vs analytic gradient of `loss_of` with respect to every entry of x
void check_grads(Tensor<T>& x, const std::function<Tensor<T>()>& loss_of, double tol = 1e-7) {
    {
        auto& g = x.grad();  // clear residue from earlier backward passes
        std::fill(g.begin(), g.end(), T(0));
    }
    Tensor<T> loss = loss_of();
    loss.backward();
    const std::vector<T> analytic = x.grad();
    for (size_t i = 0; i < x.numel(); ++i) {
        const double saved = x.value()[i];
        const double h = 1e-6 * std::max(1.0, std::abs(saved));
        NoGradGuard guard;
        x.value()[i] = saved + h;
        const double up = loss_of().scalar();
        x.value()[i] = saved - h;
        const double down = loss_of().scalar();
        x.value()[i] = saved;
        const double numeric = (up - down) / (2 * h);
        const double rel = std::abs(analytic[i] - numeric) /
                           (std::abs(analytic[i]) + std::abs(numeric) + 1e-10);
        CAPTURE(i);
        CAPTURE(analytic[i]);
        CAPTURE(numeric);
        REQUIRE(rel < tol);
    }
    auto& g = x.grad();
    std::fill(g.begin(), g.end(), T(0));
}

}  // namespace

// weighted reduction via matmul with fixed vectors
static Tensor<T> weighted_total(const Tensor<T>& x) {
    Tensor<T> left(1, x.rows());
    for (int i = 0; i < x.rows(); ++i) left.value()[size_t(i)] = 0.3 + 0.05 * i;
    Tensor<T> right(x.cols(), 1);
    for (int i = 0; i < x.cols(); ++i) right.value()[size_t(i)] = 0.2 + 0.07 * i;
    return matmul(matmul(left, x), right);
}

TEST_CASE("matmul gradients for all transpose combinations") {
    std::mt19937_64 rng(1);
    for (const bool ta : {false, true})
        for (const bool tb : {false, true}) {
            Tensor<T> a = ta ? randn(4, 3, rng) : randn(3, 4, rng);
            Tensor<T> b = tb ? randn(5, 4, rng) : randn(4, 5, rng);
            CAPTURE(ta);
            CAPTURE(tb);
            check_grads(a, [&] { return weighted_total(matmul(a, b, ta, tb)); });
            check_grads(b, [&] { return weighted_total(matmul(a, b, ta, tb)); });
        }
}

TEST_CASE("elementwise and bias op gradients") {
    std::mt19937_64 rng(2);
    Tensor<T> x = randn(4, 6, rng);
    Tensor<T> y = randn(4, 6, rng);
    Tensor<T> bias = randn(1, 6, rng);
    check_grads(x, [&] { return weighted_total(add(x, y)); });
    check_grads(y, [&] { return weighted_total(add(x, y)); });
    check_grads(x, [&] { return weighted_total(scale(x, T(1.7))); });
    check_grads(x, [&] { return weighted_total(relu(x)); });
    check_grads(x, [&] { return weighted_total(add_bias(x, bias)); });
    check_grads(bias, [&] { return weighted_total(add_bias(x, bias)); });
}

TEST_CASE("layer_norm and softmax gradients") {
    std::mt19937_64 rng(3);
    Tensor<T> x = randn(5, 8, rng);
    Tensor<T> gamma = randn(1, 8, rng);
    Tensor<T> beta = randn(1, 8, rng);
    check_grads(x, [&] { return weighted_total(layer_norm(x, gamma, beta)); }, 1e-6);
    check_grads(gamma, [&] { return weighted_total(layer_norm(x, gamma, beta)); }, 1e-6);
    check_grads(beta, [&] { return weighted_total(layer_norm(x, gamma, beta)); });
    check_grads(x, [&] { return weighted_total(softmax_rows(x)); }, 1e-6);
}

TEST_CASE("mask, shift, slice and concat gradients") {
    std::mt19937_64 rng(4);
    Tensor<T> scores = randn(4, 7, rng);
    check_grads(scores, [&] { return weighted_total(softmax_rows(causal_mask(scores, 3))); }, 1e-6);

    Tensor<T> b = randn(4, 10, rng);
    check_grads(b, [&] { return weighted_total(rel_shift(b, 3, 7)); });

    Tensor<T> x = randn(6, 5, rng);
    Tensor<T> y = randn(2, 5, rng);
    check_grads(x, [&] { return weighted_total(concat_rows(y, x)); });
    check_grads(y, [&] { return weighted_total(concat_rows(y, x)); });
    check_grads(x, [&] { return weighted_total(slice_rows(x, 1, 5)); });
    check_grads(x, [&] { return weighted_total(slice_cols(x, 1, 4)); });
    Tensor<T> z = randn(6, 3, rng);
    check_grads(x, [&] { return weighted_total(concat_cols(x, z)); });
    check_grads(z, [&] { return weighted_total(concat_cols(x, z)); });
}

TEST_CASE("embedding gather gradients with inactive ids") {
    std::mt19937_64 rng(5);
    Tensor<T> table = randn(7, 4, rng);
    const std::vector<int> ids = {0, 3, -1, 3, 6};
    check_grads(table, [&] { return weighted_total(embedding_rows(table, ids)); });
}

TEST_CASE("cross entropy gradients and masking") {
    std::mt19937_64 rng(6);
    Tensor<T> logits = randn(6, 9, rng);
    const std::vector<int> targets = {1, -1, 4, 8, -1, 0};
    check_grads(logits, [&] { return cross_entropy_mean(logits, targets); });

    SUBCASE("all-ignored returns an undefined tensor") {
        CHECK(!cross_entropy_mean(logits, std::vector<int>(6, -1)).defined());
    }
    SUBCASE("uniform logits give ln(V)") {
        Tensor<T> zeros(3, 9);
        const auto ce = cross_entropy_mean(zeros, {0, 5, 8});
        CHECK(ce.scalar() == doctest::Approx(std::log(9.0)).epsilon(1e-12));
    }
}

TEST_CASE("softmax rows sum to one and mask kills the future") {
    std::mt19937_64 rng(7);
    Tensor<T> x = randn(5, 11, rng, false);
    const auto probs = softmax_rows(causal_mask(x, 2));
    for (int r = 0; r < probs.rows(); ++r) {
        double total = 0;
        for (int c = 0; c < probs.cols(); ++c) {
            const double p = probs.at(r, c);
            total += p;
            if (c > r + 2) CHECK(p == doctest::Approx(0.0).epsilon(1e-12));
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("no-grad mode records nothing") {
    std::mt19937_64 rng(8);
    Tensor<T> x = randn(3, 3, rng);
    NoGradGuard guard;
    const auto y = matmul(x, x);
    CHECK(!y.requires_grad());
    CHECK(y.node()->parents.empty());
}

TEST_CASE("dropout scales kept entries and zeroes the rest") {
    std::mt19937_64 rng(9);
    Tensor<T> x(40, 25, true);
    std::fill(x.value().begin(), x.value().end(), 1.0);
    std::mt19937_64 drop_rng(17);
    const auto y = dropout(x, 0.25, drop_rng);
    size_t kept = 0;
    for (const double v : y.value()) {
        if (v != 0.0) {
            CHECK(v == doctest::Approx(1.0 / 0.75));
            ++kept;
        }
    }
    CHECK(kept > 600);
    CHECK(kept < 900);
}
