#include <doctest.h>

#include "emovid/error.hpp"
#include "emovid/kernels.hpp"
#include "emovid/rng.hpp"
#include "emovid/tensor.hpp"

#include <cmath>
#include <functional>
#include <vector>

using namespace emovid;

namespace {

// Central-difference gradient of a scalar-valued rebuildable graph with
// respect to one leaf, compared against the analytic grad from backward().
void check_grads_fd(Tensor& leaf, const std::function<double()>& eval_loss,
                    const std::vector<double>& analytic, double tol = 1e-6) {
    const double h = 1e-5;
    auto& vals = leaf.value_mut();
    REQUIRE(analytic.size() == vals.size());
    for (size_t i = 0; i < vals.size(); ++i) {
        const double keep = vals[i];
        vals[i] = keep + h;
        const double up = eval_loss();
        vals[i] = keep - h;
        const double dn = eval_loss();
        vals[i] = keep;
        const double fd = (up - dn) / (2.0 * h);
        const double rel =
            std::abs(analytic[i] - fd) / std::max({std::abs(analytic[i]), std::abs(fd), 1e-4});
        CHECK(rel < tol);
    }
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, bool rg = true) {
    long n = 1;
    for (int d : shape)
        n *= d;
    std::vector<double> data(static_cast<size_t>(n));
    for (auto& v : data)
        v = rng.normal();
    return Tensor::from(std::move(shape), std::move(data), rg);
}

} // namespace

TEST_CASE("factories and shape validation") {
    auto z = Tensor::zeros({2, 3});
    CHECK(z.numel() == 6);
    CHECK(z.shape() == std::vector<int>{2, 3});
    auto f = Tensor::full({4}, 2.5);
    for (double v : f.value())
        CHECK(v == 2.5);
    auto id = Tensor::identity(3);
    CHECK(id.value()[0] == 1.0);
    CHECK(id.value()[1] == 0.0);
    CHECK(id.value()[4] == 1.0);
    CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
    CHECK_THROWS_AS((void)Tensor::zeros({2}).item(), UsageError);
    CHECK(Tensor::scalar(3.0).item() == 3.0);
}

TEST_CASE("arithmetic ops: forward values and additive gradients") {
    auto a = Tensor::from({3}, {1.0, -2.0, 3.0}, true);
    auto b = Tensor::from({3}, {4.0, 5.0, -6.0}, true);
    auto s = sum(mul(add(a, b), sub(a, b))); // sum(a^2 - b^2)
    CHECK(s.item() == doctest::Approx((1 - 16) + (4 - 25) + (9 - 36)));
    backward(s);
    for (int i = 0; i < 3; ++i) {
        CHECK(a.grad()[static_cast<size_t>(i)] ==
              doctest::Approx(2.0 * a.value()[static_cast<size_t>(i)]));
        CHECK(b.grad()[static_cast<size_t>(i)] ==
              doctest::Approx(-2.0 * b.value()[static_cast<size_t>(i)]));
    }
    CHECK_THROWS_AS(add(a, Tensor::zeros({4})), ShapeError);
}

TEST_CASE("diamond graphs accumulate gradient over every path") {
    auto x = Tensor::scalar(3.0, true);
    auto y = add(mul(x, x), x); // x^2 + x
    backward(y);
    CHECK(x.grad()[0] == doctest::Approx(7.0)); // 2x + 1
}

TEST_CASE("scalar-argument ops") {
    auto a = Tensor::from({2}, {6.0, -9.0}, true);
    auto s = Tensor::scalar(3.0, true);
    auto d = div_scalar(a, s);
    CHECK(d.value()[0] == doctest::Approx(2.0));
    CHECK(d.value()[1] == doctest::Approx(-3.0));
    backward(sum(d));
    CHECK(a.grad()[0] == doctest::Approx(1.0 / 3.0));
    CHECK(s.grad()[0] == doctest::Approx(-(6.0 - 9.0) / 9.0));

    auto m = mul_scalar(a, Tensor::scalar(2.0));
    CHECK(m.value()[0] == 12.0);
    CHECK(scale(a, -1.0).value()[1] == 9.0);
    CHECK(add_const(a, 1.5).value()[0] == 7.5);
    CHECK_THROWS_AS(mul_scalar(a, Tensor::zeros({2})), ShapeError);
}

TEST_CASE("activations match closed forms") {
    auto x = Tensor::from({5}, {-2.0, -0.5, 0.0, 0.5, 2.0}, true);
    auto r = relu(x);
    CHECK(r.value() == std::vector<double>{0.0, 0.0, 0.0, 0.5, 2.0});
    for (size_t i = 0; i < 5; ++i) {
        CHECK(tanh_op(x).value()[i] == doctest::Approx(std::tanh(x.value()[i])));
        CHECK(sigmoid(x).value()[i] == doctest::Approx(1.0 / (1.0 + std::exp(-x.value()[i]))));
    }
    CHECK(elementwise("tanh", x).value()[4] == doctest::Approx(std::tanh(2.0)));
    CHECK_THROWS_AS(elementwise("gelu", x), ConfigError);
    // Large inputs must not overflow through exp().
    auto big = Tensor::from({2}, {750.0, -750.0});
    CHECK(sigmoid(big).value()[0] == doctest::Approx(1.0));
    CHECK(sigmoid(big).value()[1] == doctest::Approx(0.0));
}

TEST_CASE("matmul matches kernel reference and its gradient passes fd check") {
    Rng rng(5);
    auto a = random_tensor({4, 3}, rng);
    auto b = random_tensor({3, 5}, rng);
    auto y = matmul(a, b);
    std::vector<double> want(20);
    kernels::serial::gemm(a.value().data(), b.value().data(), want.data(), 4, 3, 5);
    for (size_t i = 0; i < want.size(); ++i)
        CHECK(y.value()[i] == doctest::Approx(want[i]));

    auto loss = [&] { return sum(mul(matmul(a, b), matmul(a, b))).item(); };
    auto l = sum(mul(matmul(a, b), matmul(a, b)));
    backward(l);
    check_grads_fd(a, loss, a.grad());
    check_grads_fd(b, loss, b.grad());
    CHECK_THROWS_AS(matmul(a, Tensor::zeros({4, 2})), ShapeError);
}

TEST_CASE("softmax_rows: simplex rows, shift invariance, fd gradient") {
    Rng rng(17);
    auto x = random_tensor({3, 6}, rng);
    auto p = softmax_rows(x);
    for (int i = 0; i < 3; ++i) {
        double row = 0.0;
        for (int j = 0; j < 6; ++j) {
            const double v = p.value()[static_cast<size_t>(i * 6 + j)];
            CHECK(v > 0.0);
            row += v;
        }
        CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }
    auto shifted = softmax_rows(add_const(x, 123.0));
    for (size_t i = 0; i < p.value().size(); ++i)
        CHECK(shifted.value()[i] == doctest::Approx(p.value()[i]).epsilon(1e-12));

    // Weighted sum makes the loss sensitive to every entry.
    auto w = random_tensor({3, 6}, rng, false);
    auto loss = [&] { return sum(mul(softmax_rows(x), w)).item(); };
    auto l = sum(mul(softmax_rows(x), w));
    backward(l);
    check_grads_fd(x, loss, x.grad());

    CHECK_THROWS_AS(softmax_rows(Tensor::from({1, 2}, {1.0, std::nan("")})), NumericError);
    CHECK_THROWS_AS(softmax_rows(Tensor::zeros({2})), ShapeError);
}

TEST_CASE("logsumexp is stable and its gradient is the softmax") {
    auto x = Tensor::from({3}, {1000.0, 1000.0, 1000.0}, true);
    auto l = logsumexp(x);
    CHECK(l.item() == doctest::Approx(1000.0 + std::log(3.0)));
    backward(l);
    for (double g : x.grad())
        CHECK(g == doctest::Approx(1.0 / 3.0));
    CHECK_THROWS_AS(logsumexp(Tensor::from({1}, {std::numeric_limits<double>::infinity()})),
                    NumericError);
}

TEST_CASE("reductions") {
    auto x = Tensor::from({4}, {1.0, 2.0, 3.0, 4.0}, true);
    CHECK(sum(x).item() == 10.0);
    CHECK(mean(x).item() == 2.5);
    backward(mean(x));
    for (double g : x.grad())
        CHECK(g == doctest::Approx(0.25));
}

TEST_CASE("shape ops route gradients back to the right slots") {
    auto x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    auto t = transpose(x);
    CHECK(t.shape() == std::vector<int>{3, 2});
    CHECK(t.value() == std::vector<double>{1, 4, 2, 5, 3, 6});
    auto r = reshape(x, {6});
    CHECK(r.value() == x.value());
    CHECK_THROWS_AS(reshape(x, {5}), ShapeError);
    CHECK_THROWS_AS(transpose(r), ShapeError);

    auto picked = select(r, 2);
    backward(picked);
    CHECK(x.grad()[2] == 1.0);
    CHECK(x.grad()[0] == 0.0);
    CHECK_THROWS_AS(select(r, 6), InputError);

    auto img = Tensor::from({3, 1, 2}, {1, 2, 3, 4, 5, 6}, true);
    auto sl = slice_channels(img, 1, 3);
    CHECK(sl.shape() == std::vector<int>{2, 1, 2});
    CHECK(sl.value() == std::vector<double>{3, 4, 5, 6});
    backward(sum(sl));
    CHECK(img.grad() == std::vector<double>{0, 0, 1, 1, 1, 1});
    CHECK_THROWS_AS(slice_channels(img, 2, 2), ShapeError);

    auto a = Tensor::from({2}, {1, 2}, true);
    auto b = Tensor::from({3}, {3, 4, 5}, true);
    auto c = concat({a, b});
    CHECK(c.value() == std::vector<double>{1, 2, 3, 4, 5});
    backward(sum(mul(c, c)));
    CHECK(a.grad() == std::vector<double>{2, 4});
    CHECK(b.grad() == std::vector<double>{6, 8, 10});
}

TEST_CASE("dropout") {
    Rng rng(3);
    auto x = Tensor::full({10000}, 1.0, true);
    CHECK_THROWS_AS(dropout(x, 1.0, rng, true), ConfigError);
    CHECK_THROWS_AS(dropout(x, -0.1, rng, true), ConfigError);

    auto eval_mode = dropout(x, 0.5, rng, false);
    CHECK(eval_mode.node() == x.node()); // pass-through, no new node

    auto d = dropout(x, 0.5, rng, true);
    double kept = 0.0, total = 0.0;
    for (double v : d.value()) {
        CHECK((v == 0.0 || v == 2.0)); // inverted scaling by 1/(1-p)
        if (v != 0.0)
            kept += 1.0;
        total += v;
    }
    CHECK(kept / 10000.0 == doctest::Approx(0.5).epsilon(0.03));
    CHECK(total / 10000.0 == doctest::Approx(1.0).epsilon(0.06));

    backward(sum(d));
    for (size_t i = 0; i < x.grad().size(); ++i)
        CHECK(x.grad()[i] == d.value()[i]); // mask times upstream ones
}

TEST_CASE("grouped_conv2d through the tape matches serial kernels and fd grads") {
    Rng rng(23);
    auto x = random_tensor({6, 5, 5}, rng);
    auto w = random_tensor({9, 2, 3, 3}, rng); // groups=3: 2 in-channels per group
    auto y = grouped_conv2d(x, w, 3, 1, 1);
    CHECK(y.shape() == std::vector<int>{9, 5, 5});

    kernels::Conv2dShape s;
    s.groups = 3, s.stride = 1, s.pad = 1;
    s.cin = 6, s.h = 5, s.w = 5, s.cout = 9, s.kh = 3, s.kw = 3;
    std::vector<double> want(y.value().size());
    kernels::serial::conv2d_forward(s, x.value().data(), w.value().data(), want.data());
    for (size_t i = 0; i < want.size(); ++i)
        CHECK(y.value()[i] == doctest::Approx(want[i]).epsilon(1e-12));

    auto loss = [&] { return mean(mul(grouped_conv2d(x, w, 3, 1, 1),
                                      grouped_conv2d(x, w, 3, 1, 1)))
                          .item(); };
    backward(mean(mul(y, y)));
    check_grads_fd(x, loss, x.grad());
    check_grads_fd(w, loss, w.grad());

    CHECK_THROWS_AS(grouped_conv2d(x, w, 4, 1, 1), ConfigError);
    CHECK_THROWS_AS(grouped_conv2d(x, random_tensor({9, 3, 3, 3}, rng), 3, 1, 1), ShapeError);
    CHECK_THROWS_AS(grouped_conv2d(random_tensor({6, 1, 1}, rng), w, 3, 1, 0), ShapeError);
}

TEST_CASE("channel_affine scales and shifts per channel") {
    Rng rng(29);
    auto x = random_tensor({3, 2, 2}, rng);
    auto g = Tensor::from({3}, {1.0, 2.0, -1.0}, true);
    auto b = Tensor::from({3}, {0.0, 10.0, 1.0}, true);
    auto y = channel_affine(x, g, b);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 4; ++i) {
            const size_t idx = static_cast<size_t>(c * 4 + i);
            CHECK(y.value()[idx] ==
                  doctest::Approx(g.value()[static_cast<size_t>(c)] * x.value()[idx] +
                                  b.value()[static_cast<size_t>(c)]));
        }
    auto loss = [&] { return sum(mul(channel_affine(x, g, b), channel_affine(x, g, b))).item(); };
    backward(sum(mul(y, y)));
    check_grads_fd(x, loss, x.grad());
    check_grads_fd(g, loss, g.grad());
    check_grads_fd(b, loss, b.grad());
    CHECK_THROWS_AS(channel_affine(x, Tensor::zeros({2}), b), ShapeError);
}

TEST_CASE("NoGradGuard suppresses graph construction") {
    auto x = Tensor::from({2}, {1.0, 2.0}, true);
    {
        NoGradGuard guard;
        CHECK_FALSE(grad_enabled());
        auto y = sum(mul(x, x));
        CHECK(y.item() == doctest::Approx(5.0));
        CHECK_FALSE(y.requires_grad());
        CHECK(y.node()->parents.empty());
    }
    CHECK(grad_enabled());
    auto y = sum(mul(x, x));
    CHECK(y.requires_grad());
}

TEST_CASE("backward validates its input and tolerates untracked graphs") {
    auto x = Tensor::from({2}, {1.0, 2.0}, true);
    CHECK_THROWS_AS(backward(mul(x, x)), UsageError); // non-scalar
    auto frozen = sum(mul(Tensor::from({2}, {1.0, 2.0}), Tensor::from({2}, {3.0, 4.0})));
    backward(frozen); // no-op rather than an error
    CHECK_FALSE(frozen.has_grad());
}

TEST_CASE("repeated backward accumulates into existing grads") {
    auto x = Tensor::scalar(2.0, true);
    auto y1 = mul(x, x);
    backward(y1);
    auto y2 = mul(x, x);
    backward(y2);
    CHECK(x.grad()[0] == doctest::Approx(8.0));
    x.zero_grad();
    CHECK(x.grad()[0] == 0.0);
}
