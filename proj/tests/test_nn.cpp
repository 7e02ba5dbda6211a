#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "cellscan/error.hpp"
#include "cellscan/layers.hpp"
#include "cellscan/model.hpp"
#include "support/oracles.hpp"

using namespace cellscan;

namespace {

Rng g_rng(1);

Tensor random_tensor(const std::vector<std::size_t>& shape, Rng& rng, real lo = -1, real hi = 1) {
    Tensor t = zeros(shape);
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = lo + real(rng.next_double()) * (hi - lo);
    return t;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    return std::memcmp(a.data(), b.data(), a.size() * sizeof(real)) == 0;
}

double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

} // namespace

TEST_CASE("conv2d with a centered impulse kernel is the identity") {
    Conv2dLayer conv(2, 2);
    // kernel[oc][ic][1][1] = (oc == ic), everything else 0
    for (std::size_t oc = 0; oc < 2; ++oc)
        conv.weights[((oc * 2 + oc) * 3 + 1) * 3 + 1] = 1;
    Rng rng(3);
    Tensor x = random_tensor({2, 2, 6, 6}, rng);
    Tensor y = conv.forward(x, Phase::train, rng);
    CHECK(bitwise_equal(x, y));
}

TEST_CASE("conv2d all-ones kernel sums the 3x3 neighborhood") {
    Conv2dLayer conv(1, 1);
    for (std::size_t i = 0; i < 9; ++i) conv.weights[i] = 1;
    Tensor x = zeros({1, 1, 3, 3});
    for (std::size_t i = 0; i < 9; ++i) x[i] = real(i + 1); // 1..9
    Rng rng(0);
    Tensor y = conv.forward(x, Phase::train, rng);
    CHECK(y[4] == real{45}); // center sees all of 1..9
}

TEST_CASE("conv2d output shape under same padding") {
    Conv2dLayer conv(3, 32);
    Rng rng(9);
    Tensor x = random_tensor({1, 3, 64, 64}, rng);
    Tensor y = conv.forward(x, Phase::train, rng);
    CHECK(y.shape() == std::vector<std::size_t>{1, 32, 64, 64});
}

TEST_CASE("conv2d rejects channel mismatches") {
    Conv2dLayer conv(3, 4);
    Rng rng(0);
    Tensor x = zeros({1, 2, 4, 4});
    CHECK_THROWS_AS(conv.forward(x, Phase::train, rng), ShapeError);
}

TEST_CASE("conv2d matches the 7-loop oracle on random shapes") {
    Rng rng(555);
    for (int it = 0; it < 30; ++it) {
        std::size_t batch = 1 + rng.next_below(2);
        std::size_t in_ch = 1 + rng.next_below(3);
        std::size_t out_ch = 1 + rng.next_below(4);
        std::size_t h = 1 + rng.next_below(6);
        std::size_t w = 1 + rng.next_below(6);
        Conv2dLayer conv(in_ch, out_ch);
        conv.weights = random_tensor({out_ch, in_ch, 3, 3}, rng);
        conv.bias = random_tensor({out_ch}, rng);
        Tensor x = random_tensor({batch, in_ch, h, w}, rng);
        Tensor fast = conv.forward(x, Phase::train, rng);
        Tensor slow = oracle::conv2d(x, conv.weights, conv.bias);
        REQUIRE(fast.shape() == slow.shape());
        for (std::size_t i = 0; i < fast.size(); ++i)
            CHECK(rel_err(double(fast[i]), double(slow[i])) < 1e-5);
    }
}

TEST_CASE("maxpool picks window maxima with first-wins ties") {
    MaxPool2Layer pool;
    Rng rng(0);
    Tensor x = zeros({1, 1, 2, 2});
    x[0] = 1;
    x[1] = 3;
    x[2] = 2;
    x[3] = 4;
    Tensor y = pool.forward(x, Phase::train, rng);
    CHECK(y.size() == 1);
    CHECK(y[0] == real{4});

    Tensor flat = full({1, 1, 2, 2}, real{7});
    Tensor y2 = pool.forward(flat, Phase::train, rng);
    CHECK(y2[0] == real{7});
    CHECK(pool.routing()[0] == 0); // tie -> top-left
}

TEST_CASE("maxpool matches the exhaustive window scan") {
    Rng rng(888);
    for (int it = 0; it < 20; ++it) {
        Tensor x = random_tensor({2, 3, 8, 8}, rng);
        MaxPool2Layer pool;
        Tensor fast = pool.forward(x, Phase::train, rng);
        Tensor slow = oracle::maxpool2(x);
        CHECK(bitwise_equal(fast, slow));
    }
}

TEST_CASE("maxpool rejects odd spatial dims") {
    MaxPool2Layer pool;
    Rng rng(0);
    CHECK_THROWS_AS(pool.forward(zeros({1, 1, 3, 4}), Phase::train, rng), ShapeError);
}

TEST_CASE("maxpool backward deposits gradient only at argmax positions") {
    Rng rng(91);
    Tensor x = random_tensor({2, 2, 6, 6}, rng);
    MaxPool2Layer pool;
    Tensor y = pool.forward(x, Phase::train, rng);
    Tensor dy = random_tensor(y.shape(), rng);
    Tensor dx = pool.backward(dy);

    double sum_dy = 0, sum_dx = 0;
    std::size_t nonzero = 0;
    for (std::size_t i = 0; i < dy.size(); ++i) sum_dy += double(dy[i]);
    for (std::size_t i = 0; i < dx.size(); ++i) {
        sum_dx += double(dx[i]);
        if (dx[i] != real{0}) ++nonzero;
    }
    CHECK(sum_dx == doctest::Approx(sum_dy).epsilon(1e-5));
    CHECK(nonzero <= dy.size()); // one deposit per window
}

TEST_CASE("batchnorm collapses a constant batch to beta") {
    BatchNormLayer bn(3);
    Rng rng(0);
    Tensor x = full({4, 3, 2, 2}, real{9});
    Tensor y = bn.forward(x, Phase::train, rng);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::fabs(double(y[i])) <= 1e-3);

    bn.beta = full({3}, real{2.5});
    bn.gamma = zeros({3});
    Tensor y2 = bn.forward(x, Phase::train, rng);
    for (std::size_t i = 0; i < y2.size(); ++i) CHECK(y2[i] == real{2.5});
}

TEST_CASE("batchnorm normalizes a +/-1 batch to itself") {
    BatchNormLayer bn(1);
    Tensor x = zeros({2, 1});
    x[0] = -1;
    x[1] = 1;
    Rng rng(0);
    Tensor y = bn.forward(x, Phase::train, rng);
    CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-2));
    CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-2));
}

TEST_CASE("batchnorm rejects train-mode singletons and updates running stats") {
    BatchNormLayer bn(2);
    Rng rng(0);
    CHECK_THROWS_AS(bn.forward(zeros({1, 2}), Phase::train, rng), BatchSizeError);

    // eval mode accepts batch 1 and uses running stats
    Tensor y = bn.forward(zeros({1, 2}), Phase::eval, rng);
    CHECK(y.size() == 2);

    Tensor x = zeros({4, 2});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = real(i);
    bn.forward(x, Phase::train, rng);
    // running mean moved toward the batch mean: 0.9 * 0 + 0.1 * mean
    CHECK(double(bn.running_mean[0]) == doctest::Approx(0.1 * 3.0).epsilon(1e-4));
    CHECK(double(bn.running_mean[1]) == doctest::Approx(0.1 * 4.0).epsilon(1e-4));
}

TEST_CASE("dropout rate 0 and eval mode are identities") {
    Rng rng(10);
    Tensor x = random_tensor({3, 5}, rng);

    DropoutLayer d0(0);
    Tensor y0 = d0.forward(x, Phase::train, rng);
    CHECK(bitwise_equal(x, y0));
    for (real m : d0.mask()) CHECK(m == real{1});

    DropoutLayer d5(real(0.5));
    std::uint64_t state_before = rng.state();
    Tensor ye = d5.forward(x, Phase::eval, rng);
    CHECK(bitwise_equal(x, ye));
    CHECK(rng.state() == state_before); // eval never consumes RNG
}

TEST_CASE("dropout preserves the mean at rate 0.5") {
    Rng rng(20);
    Tensor x = full({100000}, real{1});
    DropoutLayer drop(real(0.5));
    Tensor y = drop.forward(x, Phase::train, rng);
    double mean = 0;
    for (std::size_t i = 0; i < y.size(); ++i) mean += double(y[i]);
    mean /= double(y.size());
    CHECK(mean >= 0.98);
    CHECK(mean <= 1.02);
}

TEST_CASE("dropout masks are reproducible per seed") {
    Tensor x = full({64}, real{1});
    DropoutLayer a(real(0.3)), b(real(0.3));
    Rng r1(7), r2(7);
    a.forward(x, Phase::train, r1);
    b.forward(x, Phase::train, r2);
    CHECK(a.mask() == b.mask());
}

TEST_CASE("dense forward and errors") {
    DenseLayer id(2, 2);
    id.weights.at2(0, 0) = 1;
    id.weights.at2(1, 1) = 1;
    Rng rng(0);
    Tensor x = zeros({1, 2});
    x[0] = 1;
    x[1] = 2;
    Tensor y = id.forward(x, Phase::train, rng);
    CHECK(y[0] == real{1});
    CHECK(y[1] == real{2});

    id.bias[0] = 3;
    id.bias[1] = 4;
    Tensor y2 = id.forward(x, Phase::train, rng);
    CHECK(y2[0] == real{4});
    CHECK(y2[1] == real{6});

    CHECK_THROWS_AS(id.forward(zeros({1, 3}), Phase::train, rng), ShapeError);

    DenseLayer wide(4096, 512);
    CHECK(wide.weights.shape() == std::vector<std::size_t>{4096, 512});
}

TEST_CASE("activations match their definitions") {
    Tensor x = zeros({3});
    x[0] = -3;
    x[1] = 0;
    x[2] = 3;

    Tensor r = apply_activation(x, Activation::relu);
    CHECK(r[0] == real{0});
    CHECK(r[1] == real{0});
    CHECK(r[2] == real{3});

    Tensor s = apply_activation(x, Activation::sigmoid);
    CHECK(double(s[1]) == doctest::Approx(0.5));
    CHECK(double(s[0]) + double(s[2]) == doctest::Approx(1.0).epsilon(1e-5));

    Tensor t = apply_activation(x, Activation::tanh);
    CHECK(double(t[1]) == doctest::Approx(0.0));
    CHECK(double(t[0]) == doctest::Approx(-std::tanh(3.0)).epsilon(1e-6));
}

TEST_CASE("bce_loss values and errors") {
    Tensor p1 = full({1}, real(1.0 - 1e-7));
    Tensor y1 = full({1}, real{1});
    auto [loss1, grad1] = bce_loss(p1, y1);
    CHECK(double(loss1) < 1e-6);

    Tensor p2 = full({4}, real(0.5));
    Tensor y2 = zeros({4});
    y2[0] = 1;
    y2[2] = 1;
    auto [loss2, grad2] = bce_loss(p2, y2);
    CHECK(double(loss2) == doctest::Approx(std::log(2.0)).epsilon(1e-6));

    CHECK_THROWS_AS(bce_loss(zeros({2}), zeros({3})), ShapeError);
}

TEST_CASE("adam zero gradient leaves parameters untouched") {
    Rng rng(5);
    Tensor p = random_tensor({4, 4}, rng);
    Tensor p_orig = p;
    Tensor g = zeros({4, 4});
    AdamState state;
    std::vector<Tensor*> params{&p}, grads{&g};
    adam_init(state, params);
    adam_step(params, grads, state);
    CHECK(bitwise_equal(p, p_orig));
    CHECK(state.t == 1);
}

TEST_CASE("adam first step collapses to a signed alpha step") {
    Tensor p = zeros({1});
    Tensor g = full({1}, real(0.5));
    AdamState state; // alpha 1e-3
    std::vector<Tensor*> params{&p}, grads{&g};
    adam_init(state, params);
    adam_step(params, grads, state);
    CHECK(double(p[0]) == doctest::Approx(-1e-3).epsilon(1e-4));
}

TEST_CASE("adam with alpha 0 still advances moments and the counter") {
    Rng rng(6);
    Tensor p = random_tensor({8}, rng);
    Tensor p_orig = p;
    Tensor g = random_tensor({8}, rng);
    AdamState state;
    state.alpha = 0.0;
    std::vector<Tensor*> params{&p}, grads{&g};
    adam_init(state, params);
    adam_step(params, grads, state);
    adam_step(params, grads, state);
    CHECK(bitwise_equal(p, p_orig));
    CHECK(state.t == 2);
    bool moments_moved = false;
    for (std::size_t i = 0; i < 8; ++i)
        if (state.m[0][i] != real{0}) moments_moved = true;
    CHECK(moments_moved);
}

TEST_CASE("adam rejects mismatched shapes") {
    Tensor p = zeros({3});
    Tensor g = zeros({4});
    AdamState state;
    std::vector<Tensor*> params{&p}, grads{&g};
    adam_init(state, params);
    CHECK_THROWS_AS(adam_step(params, grads, state), ShapeError);
}

TEST_CASE("model forward produces probabilities and respects eval determinism") {
    ModelConfig cfg;
    cfg.input_channels = 1;
    cfg.input_size = 16;
    cfg.conv_filters = {4, 8};
    cfg.hidden_widths = {16};
    cfg.seed = 3;
    Model model = build_model(cfg);

    Rng rng(12);
    Tensor x = random_tensor({2, 1, 16, 16}, rng, 0, 1);
    Tensor p = model.forward_eval(x);
    CHECK(p.shape() == std::vector<std::size_t>{2});
    for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK(double(p[i]) > 0.0);
        CHECK(double(p[i]) < 1.0);
    }
    Tensor p2 = model.forward_eval(x);
    CHECK(bitwise_equal(p, p2));
}

TEST_CASE("model backward: zero upstream gradient gives zero parameter gradients") {
    ModelConfig cfg;
    cfg.input_channels = 1;
    cfg.input_size = 8;
    cfg.conv_filters = {2};
    cfg.hidden_widths = {4};
    cfg.seed = 5;
    Model model = build_model(cfg);

    Rng rng(1);
    Tensor x = random_tensor({3, 1, 8, 8}, rng, 0, 1);
    model.forward(x, Phase::train, rng);
    model.backward(zeros({3}));
    for (Tensor* g : model.gradients())
        for (std::size_t i = 0; i < g->size(); ++i) CHECK((*g)[i] == real{0});
}

TEST_CASE("model gradient shapes equal parameter shapes for the full config") {
    ModelConfig cfg; // default 4 conv + 4 hidden stack, 3 channels
    Model model = build_model(cfg);
    Rng rng(2);
    Tensor x = random_tensor({2, 3, 64, 64}, rng, 0, 1);
    Tensor p = model.forward(x, Phase::train, rng);
    CHECK(p.shape() == std::vector<std::size_t>{2});
    Tensor y = zeros({2});
    y[0] = 1;
    auto [loss, grad_p] = bce_loss(p, y);
    model.backward(grad_p);
    auto params = model.parameters();
    auto grads = model.gradients();
    REQUIRE(params.size() == grads.size());
    for (std::size_t i = 0; i < params.size(); ++i)
        CHECK(params[i]->shape() == grads[i]->shape());
}

TEST_CASE("model flatten width matches the conv stack geometry") {
    ModelConfig cfg;
    CHECK(Model::flatten_width(cfg) == 4096); // 64 -> 4 spatial, 256 channels
    cfg.input_size = 48;
    CHECK_THROWS_AS(Model::flatten_width(cfg), ConfigError); // 48 not divisible by 16
}

TEST_CASE("backward without forward raises a state error") {
    Conv2dLayer conv(1, 1);
    CHECK_THROWS_AS(conv.backward(zeros({1, 1, 2, 2})), StateError);
    DenseLayer dense(2, 2);
    CHECK_THROWS_AS(dense.backward(zeros({1, 2})), StateError);
}

TEST_CASE("build_model is deterministic in the seed") {
    ModelConfig cfg;
    cfg.input_channels = 1;
    cfg.input_size = 8;
    cfg.conv_filters = {2};
    cfg.hidden_widths = {4};
    Model a = build_model(cfg);
    Model b = build_model(cfg);
    auto pa = a.parameters(), pb = b.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(bitwise_equal(*pa[i], *pb[i]));
}
