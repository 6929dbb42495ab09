#include <cmath>
#include <vector>

#include "disc/optim.hpp"
#include "disc/rng.hpp"
#include "disc/tape.hpp"
#include "doctest.h"

using namespace disc;

TEST_CASE("sum of squares gradient is analytic") {
    auto x = Var::leaf(Tensor({3}, {1.0, 2.0, 3.0}));
    auto loss = sum(mul(x, x));
    backward(loss);
    CHECK(loss->scalar() == 14.0);
    CHECK(x->grad.data[0] == doctest::Approx(2.0));
    CHECK(x->grad.data[1] == doctest::Approx(4.0));
    CHECK(x->grad.data[2] == doctest::Approx(6.0));
}

TEST_CASE("sigmoid + BCE gradient matches finite differences") {
    // loss = -log(sigmoid(w.x)) at y=1
    Rng rng(3);
    auto w = Var::leaf(Tensor::randn(rng, {1, 4}));
    Tensor xt = Tensor::randn(rng, {4, 1});
    auto x = Var::constant(xt);

    auto make_loss = [&]() {
        auto p = sigmoid_v(matmul(w, x));
        return affine(log_v(p), -1.0);
    };
    auto loss = make_loss();
    backward(loss);
    std::vector<double> tape(w->grad.data.begin(), w->grad.data.end());

    const double h = 1e-5;
    for (int i = 0; i < 4; ++i) {
        const double orig = w->value.data[i];
        w->value.data[i] = orig + h;
        const double fp = make_loss()->scalar();
        w->value.data[i] = orig - h;
        const double fm = make_loss()->scalar();
        w->value.data[i] = orig;
        const double fd = (fp - fm) / (2 * h);
        CHECK(std::fabs(tape[i] - fd) / std::max({std::fabs(fd), std::fabs(tape[i]), 1.0}) <= 1e-6);
    }
}

TEST_CASE("disconnected leaf receives zero gradient") {
    auto x = Var::leaf(Tensor({2}, {1.0, 2.0}));
    auto y = Var::leaf(Tensor({2}, {3.0, 4.0}));
    auto loss = sum(mul(x, x));
    backward(loss);
    CHECK(y->grad.data.empty());  // never touched
    y->grad_buffer();
    CHECK(y->grad.data[0] == 0.0);
    CHECK(y->grad.data[1] == 0.0);
}

TEST_CASE("backward rejects non-scalar loss") {
    auto x = Var::leaf(Tensor({2}, {1.0, 2.0}));
    auto y = mul(x, x);
    CHECK_THROWS(backward(y));
}

TEST_CASE("backward detects a cyclic tape") {
    auto x = Var::leaf(Tensor::scalar(1.0));
    auto y = mul(x, x);
    // Force a cycle by hand; the op API cannot produce one.
    x->parents.push_back(y);
    x->requires_grad = true;
    CHECK_THROWS(backward(y));
}

TEST_CASE("shared subexpression gets both contributions") {
    auto x = Var::leaf(Tensor::scalar(3.0));
    auto y = add(mul(x, x), x);  // x^2 + x, dy/dx = 2x+1 = 7
    backward(y);
    CHECK(x->grad.data[0] == doctest::Approx(7.0));
}

TEST_CASE("NoGradGuard suppresses tape recording") {
    auto x = Var::leaf(Tensor({2}, {1.0, 2.0}));
    NoGradGuard ng;
    auto y = mul(x, x);
    CHECK_FALSE(y->requires_grad);
    CHECK(y->parents.empty());
}

namespace {

// grad_check wrapper for an op under a random linear functional, so the
// checked loss exercises a full-rank output gradient.
GradCheckReport check_op(const std::function<VarPtr()>& build,
                         const std::vector<std::pair<std::string, VarPtr>>& params,
                         std::uint64_t seed = 77) {
    Rng rng(seed);
    std::shared_ptr<Tensor> probe;
    auto f = [&, probe]() mutable {
        auto out = build();
        if (!probe) probe = std::make_shared<Tensor>(Tensor::randn(rng, out->value.dims));
        return sum(mul(out, Var::constant(*probe)));
    };
    return grad_check(f, params, 1e-4);
}

}  // namespace

TEST_CASE("elementwise and activation ops pass grad_check") {
    Rng rng(11);
    auto a = Var::leaf(Tensor::randn(rng, {2, 3}));
    auto b = Var::leaf(Tensor::randn(rng, {2, 3}));
    std::vector<std::pair<std::string, VarPtr>> ps = {{"a", a}, {"b", b}};

    CHECK(check_op([&] { return add(a, b); }, ps).pass);
    CHECK(check_op([&] { return sub(a, b); }, ps).pass);
    CHECK(check_op([&] { return mul(a, b); }, ps).pass);
    CHECK(check_op([&] { return affine(a, 2.5, -1.0); }, ps).pass);
    CHECK(check_op([&] { return silu(a); }, ps).pass);
    CHECK(check_op([&] { return tanh_v(a); }, ps).pass);
    CHECK(check_op([&] { return sigmoid_v(a); }, ps).pass);
    CHECK(check_op([&] { return exp_v(a); }, ps).pass);
    CHECK(check_op([&] { return mean(square(a)); }, ps).pass);
}

TEST_CASE("relu grad_check away from the kink") {
    auto a = Var::leaf(Tensor({4}, {-1.5, -0.3, 0.4, 2.0}));
    CHECK(check_op([&] { return relu(a); }, {{"a", a}}).pass);
}

TEST_CASE("log grad_check on positive inputs") {
    auto a = Var::leaf(Tensor({3}, {0.5, 1.2, 3.0}));
    CHECK(check_op([&] { return log_v(a); }, {{"a", a}}).pass);
}

TEST_CASE("matmul passes grad_check") {
    Rng rng(12);
    auto a = Var::leaf(Tensor::randn(rng, {3, 4}));
    auto b = Var::leaf(Tensor::randn(rng, {4, 2}));
    CHECK(check_op([&] { return matmul(a, b); }, {{"a", a}, {"b", b}}).pass);
    CHECK_THROWS(matmul(a, a));
}

TEST_CASE("conv2d passes grad_check, stride 1 and 2") {
    Rng rng(13);
    auto x = Var::leaf(Tensor::randn(rng, {2, 6, 6}));
    auto w = Var::leaf(Tensor::randn(rng, {3, 2, 3, 3}));
    auto b = Var::leaf(Tensor::randn(rng, {3}));
    std::vector<std::pair<std::string, VarPtr>> ps = {{"x", x}, {"w", w}, {"b", b}};
    CHECK(check_op([&] { return conv2d(x, w, b, 1, 1); }, ps).pass);
    CHECK(check_op([&] { return conv2d(x, w, b, 2, 1); }, ps).pass);

    auto out1 = conv2d(x, w, b, 1, 1);
    CHECK(out1->value.dims == std::vector<int>{3, 6, 6});
    auto out2 = conv2d(x, w, b, 2, 1);
    CHECK(out2->value.dims == std::vector<int>{3, 3, 3});
}

TEST_CASE("conv2d 1x1 kernel") {
    Rng rng(14);
    auto x = Var::leaf(Tensor::randn(rng, {3, 4, 4}));
    auto w = Var::leaf(Tensor::randn(rng, {2, 3, 1, 1}));
    auto b = Var::leaf(Tensor::randn(rng, {2}));
    CHECK(check_op([&] { return conv2d(x, w, b, 1, 0); }, {{"x", x}, {"w", w}, {"b", b}}).pass);
}

TEST_CASE("resampling ops pass grad_check") {
    Rng rng(15);
    auto x = Var::leaf(Tensor::randn(rng, {2, 4, 4}));
    CHECK(check_op([&] { return upsample2x_nn(x); }, {{"x", x}}).pass);
    CHECK(check_op([&] { return downsample2x_nn(x); }, {{"x", x}}).pass);
    CHECK(upsample2x_nn(x)->value.dims == std::vector<int>{2, 8, 8});
    CHECK(downsample2x_nn(x)->value.dims == std::vector<int>{2, 2, 2});
}

TEST_CASE("group_norm passes grad_check") {
    Rng rng(16);
    auto x = Var::leaf(Tensor::randn(rng, {4, 3, 3}));
    auto g = Var::leaf(Tensor::full({4}, 1.0));
    auto b = Var::leaf(Tensor::zeros({4}));
    // perturb gamma/beta so the check is not at a special point
    g->value.data[1] = 1.3;
    b->value.data[2] = -0.4;
    std::vector<std::pair<std::string, VarPtr>> ps = {{"x", x}, {"g", g}, {"b", b}};
    CHECK(check_op([&] { return group_norm(x, g, b, 2); }, ps).pass);
    CHECK(check_op([&] { return group_norm(x, g, b, 1); }, ps).pass);
    CHECK(check_op([&] { return group_norm(x, g, b, 4); }, ps).pass);
}

TEST_CASE("shape ops pass grad_check") {
    Rng rng(17);
    auto x = Var::leaf(Tensor::randn(rng, {2, 3, 3}));
    auto y = Var::leaf(Tensor::randn(rng, {1, 3, 3}));
    auto v1 = Var::leaf(Tensor::randn(rng, {4}));
    auto v2 = Var::leaf(Tensor::randn(rng, {4}));
    auto bias = Var::leaf(Tensor::randn(rng, {2}));
    CHECK(check_op([&] { return concat_ch({x, y}); }, {{"x", x}, {"y", y}}).pass);
    CHECK(check_op([&] { return slice_ch(x, 1, 2); }, {{"x", x}}).pass);
    CHECK(check_op([&] { return reshape(x, {9, 2}); }, {{"x", x}}).pass);
    CHECK(check_op([&] { return stack_rows({v1, v2}); }, {{"v1", v1}, {"v2", v2}}).pass);
    CHECK(check_op([&] { return add_chan_bias(x, bias); }, {{"x", x}, {"bias", bias}}).pass);
    CHECK(check_op([&] { return global_avg_pool(x); }, {{"x", x}}).pass);
}

TEST_CASE("softmax and losses pass grad_check") {
    Rng rng(18);
    auto logits = Var::leaf(Tensor::randn(rng, {5}));
    CHECK(check_op([&] { return softmax_vec(logits); }, {{"logits", logits}}).pass);

    auto pixel_logits = Var::leaf(Tensor::randn(rng, {3, 2, 2}));
    std::vector<int> labels = {0, 2, 1, 1};
    auto f = [&] { return softmax_xent_pixels(pixel_logits, labels); };
    CHECK(grad_check(f, {{"pl", pixel_logits}}, 1e-4).pass);
}

TEST_CASE("embed_hw gathers rows and routes gradients") {
    Rng rng(19);
    auto table = Var::leaf(Tensor::randn(rng, {4, 3}));
    std::vector<int> labels = {0, 3, 3, 1};
    auto out = embed_hw(table, labels, 2, 2);
    CHECK(out->value.dims == std::vector<int>{3, 2, 2});
    CHECK(out->value.at3(0, 0, 0) == table->value.at2(0, 0));
    CHECK(out->value.at3(2, 0, 1) == table->value.at2(3, 2));

    auto f = [&] {
        auto e = embed_hw(table, labels, 2, 2);
        return sum(mul(e, e));
    };
    CHECK(grad_check(f, {{"table", table}}, 1e-4).pass);
    CHECK_THROWS(embed_hw(table, {0, 4, 0, 0}, 2, 2));
}

TEST_CASE("softmax_vec normalizes") {
    auto x = Var::leaf(Tensor({3}, {1.0, 2.0, 3.0}));
    auto s = softmax_vec(x);
    double tot = 0.0;
    for (double v : s->value.data) tot += v;
    CHECK(tot == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s->value.data[2] > s->value.data[1]);
}

TEST_CASE("clamp_v pins values and gates the gradient") {
    auto x = Var::leaf(Tensor({5}, {-2.0, 0.25, 0.5, 0.75, 3.0}));
    auto c = clamp_v(x, 0.0, 1.0);
    CHECK(c->value.data == AlignedVec{0.0, 0.25, 0.5, 0.75, 1.0});

    backward(sum(c));
    CHECK(x->grad.data == AlignedVec{0.0, 1.0, 1.0, 1.0, 0.0});

    // interior coordinates agree with finite differences
    x->zero_grad();
    auto f = [&] { return sum(square(clamp_v(x, 0.0, 1.0))); };
    CHECK(grad_check(f, {{"x", x}}, 1e-6).pass);

    CHECK_THROWS(clamp_v(x, 1.0, 0.0));
}

TEST_CASE("shape mismatches are rejected") {
    auto a = Var::leaf(Tensor({2}, {1.0, 2.0}));
    auto b = Var::leaf(Tensor({3}, {1.0, 2.0, 3.0}));
    CHECK_THROWS(add(a, b));
    CHECK_THROWS(mul(a, b));
    CHECK_THROWS(reshape(a, {4}));
}
