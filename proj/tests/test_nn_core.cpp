#include "doctest.h"

#include <cmath>

#include "dlab/errors.hpp"
#include "dlab/nn.hpp"
#include "dlab/optim.hpp"
#include "test_util.hpp"

using namespace dlab;
using testutil::Matrix;

TEST_CASE("forward: zero net maps everything to zero logits") {
    nn::DenseNet net = nn::DenseNet::from_layers(
        {{Matrix(3, 4, 0.0), std::vector<double>(3, 0.0)}});
    Matrix x(2, 4);
    x(0, 0) = 1.5;
    x(1, 3) = -2.0;
    const auto cache = nn::forward(net, x);
    for (std::size_t i = 0; i < cache.logits().size(); ++i)
        CHECK(cache.logits().data()[i] == 0.0);
}

TEST_CASE("forward: 1x1 affine net computes w*x + b") {
    Matrix w(1, 1);
    w(0, 0) = 2.0;
    nn::DenseNet net = nn::DenseNet::from_layers({{w, {1.0}}});
    Matrix x(1, 1);
    x(0, 0) = 3.0;
    const auto cache = nn::forward(net, x);
    CHECK(cache.logits()(0, 0) == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("forward: matches a straight-line recomputation oracle") {
    Rng rng(42);
    std::vector<std::size_t> hidden = {7};
    nn::DenseNet net = nn::DenseNet::he_init(5, hidden, 3, rng);
    Matrix x(6, 5);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();

    const auto cache = nn::forward(net, x);
    const Matrix expect = testutil::oracle_forward(net, x);
    for (std::size_t i = 0; i < expect.size(); ++i) {
        const double a = cache.logits().data()[i], b = expect.data()[i];
        CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)));
    }
}

TEST_CASE("forward: dimension mismatch raises ShapeError") {
    Rng rng(1);
    nn::DenseNet net = nn::DenseNet::he_init(4, std::vector<std::size_t>{3}, 2, rng);
    CHECK_THROWS_AS(nn::forward(net, Matrix(2, 5)), ShapeError);
}

TEST_CASE("softmax_cross_entropy: uniform logits give ln C") {
    Matrix logits(3, 10, 0.25);  // equal entries, any constant
    std::vector<int> labels = {0, 4, 9};
    const auto loss = nn::softmax_cross_entropy(logits, labels);
    for (double l : loss) CHECK(l == doctest::Approx(2.302585092994045684).epsilon(1e-12));
}

TEST_CASE("softmax_cross_entropy: saturated logits stay finite") {
    Matrix logits(1, 2);
    logits(0, 0) = 1000.0;
    logits(0, 1) = 0.0;
    std::vector<int> labels = {0};
    const auto loss = nn::softmax_cross_entropy(logits, labels);
    CHECK(loss[0] >= 0.0);
    CHECK(loss[0] < 1e-12);
}

TEST_CASE("softmax_cross_entropy: frozen high-precision value") {
    Matrix logits(1, 3);
    logits(0, 0) = 1.0;
    logits(0, 1) = 2.0;
    logits(0, 2) = 3.0;
    std::vector<int> labels = {2};
    const auto loss = nn::softmax_cross_entropy(logits, labels);
    // independently computed with 30-digit arithmetic
    CHECK(loss[0] == doctest::Approx(0.40760596444438030).epsilon(1e-12));
}

TEST_CASE("softmax_cross_entropy: label out of range raises LabelError") {
    Matrix logits(1, 3, 0.0);
    std::vector<int> bad_hi = {3}, bad_lo = {-1};
    CHECK_THROWS_AS(nn::softmax_cross_entropy(logits, bad_hi), LabelError);
    CHECK_THROWS_AS(nn::softmax_cross_entropy(logits, bad_lo), LabelError);
}

TEST_CASE("softmax_cross_entropy: zero loss iff true-class probability one") {
    Matrix logits(1, 3);
    logits(0, 0) = 50.0;
    logits(0, 1) = -50.0;
    logits(0, 2) = -50.0;
    std::vector<int> labels = {0};
    CHECK(nn::softmax_cross_entropy(logits, labels)[0] == doctest::Approx(0.0).epsilon(1e-15));
    labels[0] = 1;  // probability ~0 -> large loss
    CHECK(nn::softmax_cross_entropy(logits, labels)[0] > 50.0);
}

TEST_CASE("backward_weighted: zero weights give zero gradient") {
    Rng rng(7);
    nn::DenseNet net = nn::DenseNet::he_init(4, std::vector<std::size_t>{5}, 3, rng);
    Matrix x(3, 4);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    std::vector<int> labels = {0, 1, 2};
    std::vector<double> w(3, 0.0);
    const auto cache = nn::forward(net, x);
    const auto grads = nn::backward_weighted(net, cache, labels, w);
    for (const auto& g : grads) {
        for (std::size_t i = 0; i < g.weight.size(); ++i) CHECK(g.weight.data()[i] == 0.0);
        for (double b : g.bias) CHECK(b == 0.0);
    }
}

TEST_CASE("backward_weighted: negative weight raises WeightError") {
    Rng rng(7);
    nn::DenseNet net = nn::DenseNet::he_init(2, std::vector<std::size_t>{2}, 2, rng);
    Matrix x(1, 2, 1.0);
    std::vector<int> labels = {0};
    std::vector<double> w = {-0.5};
    const auto cache = nn::forward(net, x);
    CHECK_THROWS_AS(nn::backward_weighted(net, cache, labels, w), WeightError);
}

TEST_CASE("backward_weighted: uniform 1/B weights equal the mean-loss gradient") {
    Rng rng(11);
    nn::DenseNet net = nn::DenseNet::he_init(3, std::vector<std::size_t>{6}, 4, rng);
    const std::size_t B = 5;
    Matrix x(B, 3);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    std::vector<int> labels;
    for (std::size_t i = 0; i < B; ++i) labels.push_back(static_cast<int>(rng.uniform_index(4)));

    const auto cache = nn::forward(net, x);
    std::vector<double> w(B, 1.0 / static_cast<double>(B));
    const auto grads = nn::backward_weighted(net, cache, labels, w);

    // oracle: average of single-sample gradients
    nn::Gradients expect;
    for (std::size_t i = 0; i < B; ++i) {
        Matrix xi(1, 3);
        for (std::size_t c = 0; c < 3; ++c) xi(0, c) = x(i, c);
        std::vector<int> li = {labels[i]};
        std::vector<double> wi = {1.0 / static_cast<double>(B)};
        const auto ci = nn::forward(net, xi);
        auto gi = nn::backward_weighted(net, ci, li, wi);
        if (expect.empty()) {
            expect = std::move(gi);
        } else {
            for (std::size_t l = 0; l < expect.size(); ++l) {
                for (std::size_t k = 0; k < expect[l].weight.size(); ++k)
                    expect[l].weight.data()[k] += gi[l].weight.data()[k];
                for (std::size_t k = 0; k < expect[l].bias.size(); ++k)
                    expect[l].bias[k] += gi[l].bias[k];
            }
        }
    }
    for (std::size_t l = 0; l < grads.size(); ++l) {
        for (std::size_t k = 0; k < grads[l].weight.size(); ++k)
            CHECK(grads[l].weight.data()[k] ==
                  doctest::Approx(expect[l].weight.data()[k]).epsilon(1e-10));
        for (std::size_t k = 0; k < grads[l].bias.size(); ++k)
            CHECK(grads[l].bias[k] == doctest::Approx(expect[l].bias[k]).epsilon(1e-10));
    }
}

TEST_CASE("backward_weighted: matches central finite differences") {
    Rng rng(2024);
    for (int trial = 0; trial < 8; ++trial) {
        auto c = testutil::random_case(rng);
        const auto cache = nn::forward(c.net, c.x);
        const auto analytic = nn::backward_weighted(c.net, cache, c.labels, c.weights);
        const auto fd = testutil::fd_gradients(c.net, c.x, c.labels, c.weights);
        CHECK(testutil::max_grad_rel_error(analytic, fd) < 1e-4);
    }
}

TEST_CASE("adam_step: zero gradient with zero decay is a fixed point") {
    Rng rng(3);
    nn::DenseNet net = nn::DenseNet::he_init(2, std::vector<std::size_t>{3}, 2, rng);
    const auto before = testutil::flatten(net);
    nn::AdamState state = nn::AdamState::init(net);
    nn::Gradients zeros;
    for (const auto& p : net.layers())
        zeros.push_back({Matrix(p.out_dim(), p.in_dim(), 0.0),
                         std::vector<double>(p.out_dim(), 0.0)});
    nn::adam_step(net, zeros, state, 0.1);
    CHECK(testutil::flatten(net) == before);
    CHECK(state.t == 1);
}

TEST_CASE("adam_step: bias-corrected first step has magnitude ~ lr") {
    Matrix w(1, 1, 0.0);
    nn::DenseNet net = nn::DenseNet::from_layers({{w, {0.0}}});
    nn::AdamState state = nn::AdamState::init(net);
    nn::Gradients g;
    Matrix gw(1, 1);
    gw(0, 0) = 0.37;  // any nonzero constant
    g.push_back({gw, {0.0}});
    nn::adam_step(net, g, state, 1e-3);
    CHECK(std::abs(net.layer(0).weight(0, 0) + 1e-3) < 1e-9);  // step of -lr * sign(g)
}

TEST_CASE("adam_step: 3-step scalar quadratic matches an independent reference") {
    // reference Adam written separately on scalars
    double theta_ref = 1.0, m = 0.0, v = 0.0;
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    std::vector<double> ref_trace;
    for (int t = 1; t <= 3; ++t) {
        const double g = 2.0 * theta_ref;  // d/dtheta of theta^2
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mh = m / (1 - std::pow(b1, t));
        const double vh = v / (1 - std::pow(b2, t));
        theta_ref -= lr * mh / (std::sqrt(vh) + eps);
        ref_trace.push_back(theta_ref);
    }

    Matrix w(1, 1);
    w(0, 0) = 1.0;
    nn::DenseNet net = nn::DenseNet::from_layers({{w, {0.0}}});
    // keep the bias fixed by feeding zero bias gradients
    nn::AdamState state = nn::AdamState::init(net);
    // bias moments would perturb nothing: grad 0 -> update 0
    for (int t = 0; t < 3; ++t) {
        Matrix gw(1, 1);
        gw(0, 0) = 2.0 * net.layer(0).weight(0, 0);
        nn::Gradients g;
        g.push_back({gw, {0.0}});
        nn::adam_step(net, g, state, lr);
        CHECK(std::abs(net.layer(0).weight(0, 0) - ref_trace[static_cast<std::size_t>(t)]) <
              1e-10);
    }
}

TEST_CASE("adam_step: decoupled decay shrinks parameters after the update") {
    Matrix w(1, 1);
    w(0, 0) = 1.0;
    nn::DenseNet net = nn::DenseNet::from_layers({{w, {0.0}}});
    nn::AdamState state = nn::AdamState::init(net, 0.01);
    nn::Gradients g;
    g.push_back({Matrix(1, 1, 0.0), {0.0}});
    nn::adam_step(net, g, state, 0.5);
    // zero gradient: only the decay acts, theta *= (1 - lr*lambda)
    CHECK(net.layer(0).weight(0, 0) == doctest::Approx(1.0 * (1 - 0.5 * 0.01)).epsilon(1e-12));
}

TEST_CASE("adam_step: non-finite gradient raises NumericError") {
    Matrix w(1, 1, 0.0);
    nn::DenseNet net = nn::DenseNet::from_layers({{w, {0.0}}});
    nn::AdamState state = nn::AdamState::init(net);
    Matrix gw(1, 1);
    gw(0, 0) = std::numeric_limits<double>::quiet_NaN();
    nn::Gradients g;
    g.push_back({gw, {0.0}});
    CHECK_THROWS_AS(nn::adam_step(net, g, state, 0.1), NumericError);
}

TEST_CASE("lr_at: cosine endpoints and midpoint") {
    nn::LrSchedule s{1e-3, 100, nn::ScheduleKind::Cosine};
    CHECK(nn::lr_at(s, 0) == doctest::Approx(1e-3).epsilon(1e-15));
    CHECK(nn::lr_at(s, 100) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(nn::lr_at(s, 50) == doctest::Approx(0.5e-3).epsilon(1e-12));
}

TEST_CASE("lr_at: monotone non-increasing for cosine, flat for constant") {
    nn::LrSchedule cosine{0.01, 57, nn::ScheduleKind::Cosine};
    double prev = nn::lr_at(cosine, 0);
    for (long t = 1; t <= 57; ++t) {
        const double cur = nn::lr_at(cosine, t);
        CHECK(cur <= prev + 1e-18);
        CHECK(cur >= 0.0);
        CHECK(cur <= cosine.base_lr);
        prev = cur;
    }
    nn::LrSchedule constant{0.01, 57, nn::ScheduleKind::Constant};
    for (long t = 0; t <= 57; ++t) CHECK(nn::lr_at(constant, t) == 0.01);
}

TEST_CASE("lr_at: step past the horizon raises ScheduleError") {
    nn::LrSchedule s{1e-3, 10, nn::ScheduleKind::Cosine};
    CHECK_THROWS_AS(nn::lr_at(s, 11), ScheduleError);
    CHECK_THROWS_AS(nn::lr_at(s, -1), ScheduleError);
}

TEST_CASE("extract_features: zero-weight net yields all-zero features") {
    nn::DenseNet net = nn::DenseNet::from_layers(
        {{Matrix(4, 3, 0.0), std::vector<double>(4, 0.0)},
         {Matrix(2, 4, 0.0), std::vector<double>(2, 0.0)}});
    Matrix x(2, 3, 1.0);
    const Matrix f = nn::extract_features(net, x);
    CHECK(f.cols() == 4);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(f.data()[i] == 0.0);
}

TEST_CASE("extract_features: three 100-wide hidden layers give H = 100") {
    Rng rng(5);
    std::vector<std::size_t> hidden = {100, 100, 100};
    nn::DenseNet net = nn::DenseNet::he_init(12, hidden, 10, rng);
    Matrix x(3, 12);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    CHECK(nn::extract_features(net, x).cols() == 100);
    CHECK(net.last_hidden_width() == 100);
}

TEST_CASE("extract_features: bit-identical to the forward cache's last hidden") {
    Rng rng(6);
    nn::DenseNet net = nn::DenseNet::he_init(5, std::vector<std::size_t>{8, 4}, 3, rng);
    Matrix x(7, 5);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    const auto cache = nn::forward(net, x);
    const Matrix f = nn::extract_features(net, x);
    CHECK(f == cache.post[cache.post.size() - 2]);
}

TEST_CASE("extract_features: no hidden layer raises ArchitectureError") {
    nn::DenseNet net = nn::DenseNet::from_layers(
        {{Matrix(2, 3, 0.0), std::vector<double>(2, 0.0)}});
    CHECK_THROWS_AS(nn::extract_features(net, Matrix(1, 3, 0.0)), ArchitectureError);
    CHECK_THROWS_AS(net.last_hidden_width(), ArchitectureError);
}

TEST_CASE("he_init: deterministic for a fixed seed") {
    Rng a(99), b(99);
    std::vector<std::size_t> hidden = {13, 7};
    const auto n1 = nn::DenseNet::he_init(9, hidden, 4, a);
    const auto n2 = nn::DenseNet::he_init(9, hidden, 4, b);
    CHECK(n1 == n2);
}

TEST_CASE("from_layers: rejects non-chaining dimensions") {
    std::vector<nn::LayerParams> layers;
    layers.push_back({Matrix(4, 3, 0.0), std::vector<double>(4, 0.0)});
    layers.push_back({Matrix(2, 5, 0.0), std::vector<double>(2, 0.0)});  // 5 != 4
    CHECK_THROWS_AS(nn::DenseNet::from_layers(std::move(layers)), ShapeError);
}
