#include "doctest.h"

#include <cmath>
#include <numeric>

#include "dlab/baselines.hpp"
#include "dlab/errors.hpp"
#include "test_util.hpp"

using namespace dlab;
using testutil::Matrix;

TEST_CASE("train_erm: bit-identical to train_base under a shared seed") {
    auto spec = testutil::small_gaussian_spec(3, 40, 0.9, 19);
    const auto ds = data::generate_biased_gaussians(spec);
    data::TrainView view(ds);
    debias::TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.hidden = {8};
    cfg.seed = 31337;
    const auto erm = baselines::train_erm(view, cfg);
    const auto base = debias::train_base(view, cfg);
    CHECK(testutil::flatten(erm) == testutil::flatten(base));
}

TEST_CASE("GroupDroState: closed-form exponentiated update with constant losses") {
    std::vector<data::GroupId> groups = {{0, {0}}, {1, {1}}};
    auto state = baselines::GroupDroState::init(groups, 1.0);
    CHECK(state.q[0] == 0.5);
    CHECK(state.q[1] == 0.5);

    // group 0 has constant loss 1.0, group 1 has 0.0; after n updates the
    // mass ratio is e^n : 1
    for (int n = 1; n <= 10; ++n) {
        state.update({{0, 1.0}, {1, 0.0}});
        const double expect = std::exp(static_cast<double>(n)) /
                              (std::exp(static_cast<double>(n)) + 1.0);
        CHECK(state.q[0] == doctest::Approx(expect).epsilon(1e-12));
        CHECK(state.q[0] + state.q[1] == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(state.q[0] > 0.99);  // concentrates on the high-loss group
}

TEST_CASE("GroupDroState: eta_q = 0 keeps q uniform") {
    std::vector<data::GroupId> groups = {{0, {0}}, {0, {1}}, {1, {0}}};
    auto state = baselines::GroupDroState::init(groups, 0.0);
    for (int t = 0; t < 5; ++t) {
        state.update({{0, 3.0}, {1, 0.1}, {2, 1.7}});
        for (double v : state.q) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
}

TEST_CASE("GroupDroState: q stays on the simplex under random updates") {
    Rng rng(23);
    std::vector<data::GroupId> groups;
    for (int g = 0; g < 7; ++g) groups.push_back({g, {0}});
    auto state = baselines::GroupDroState::init(groups, 0.05);
    for (int t = 0; t < 300; ++t) {
        std::map<std::size_t, double> losses;
        const std::size_t present = 1 + rng.uniform_index(7);
        for (std::size_t i = 0; i < present; ++i)
            losses[rng.uniform_index(7)] = rng.uniform(0.0, 4.0);
        state.update(losses);
        double sum = 0.0;
        for (double v : state.q) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("GroupDroState: fixed losses drive q into the loss ordering") {
    std::vector<data::GroupId> groups = {{0, {0}}, {1, {0}}, {2, {0}}, {3, {0}}};
    auto state = baselines::GroupDroState::init(groups, 0.1);
    const std::vector<double> losses = {0.4, 2.0, 1.1, 0.05};
    for (int t = 0; t < 200; ++t)
        state.update({{0, losses[0]}, {1, losses[1]}, {2, losses[2]}, {3, losses[3]}});
    // ordering of q must match ordering of losses
    std::vector<std::size_t> by_q(4), by_loss(4);
    std::iota(by_q.begin(), by_q.end(), 0);
    std::iota(by_loss.begin(), by_loss.end(), 0);
    std::sort(by_q.begin(), by_q.end(),
              [&](std::size_t a, std::size_t b) { return state.q[a] > state.q[b]; });
    std::sort(by_loss.begin(), by_loss.end(),
              [&](std::size_t a, std::size_t b) { return losses[a] > losses[b]; });
    CHECK(by_q == by_loss);
}

TEST_CASE("train_group_dro: missing oracle labels raise SupervisionError") {
    auto spec = testutil::small_gaussian_spec(2, 20, 0.9, 3);
    const auto ds = data::generate_biased_gaussians(spec);
    data::TrainView view(ds);
    debias::TrainConfig cfg;
    cfg.epochs = 1;
    cfg.hidden = {4};
    std::vector<data::GroupId> too_few = {{0, {0}}};
    CHECK_THROWS_AS(baselines::train_group_dro(view, too_few, cfg), SupervisionError);
}

TEST_CASE("train_group_dro: trains and concentrates q on the hard minority group") {
    auto spec = testutil::small_gaussian_spec(2, 150, 0.8, 101);
    spec.target_separation = 1.0;  // weak target signal, strong bias shortcut
    spec.bias_separation = 4.0;
    const auto ds = data::generate_biased_gaussians(spec);
    data::TrainView view(ds);

    std::vector<std::string> names = {"bias"};
    std::vector<data::GroupId> groups;
    for (std::size_t i = 0; i < ds.size(); ++i)
        groups.push_back(data::group_of(ds, i, names));

    debias::TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 32;
    cfg.hidden = {16};
    cfg.seed = 7;

    std::vector<std::vector<double>> q_history;
    baselines::QSnapshotLogger qlog = [&](int, const baselines::GroupDroState& s) {
        q_history.push_back(s.q);
    };
    const auto net = baselines::train_group_dro(view, groups, cfg, {0.05}, {}, qlog);
    CHECK(net.all_finite());
    REQUIRE(q_history.size() == 5);
    // minority (bias-conflicting) groups should end with more mass than
    // their uniform share
    auto state = baselines::GroupDroState::init(groups, 0.05);
    double minority_mass = 0.0;
    for (std::size_t g = 0; g < state.groups.size(); ++g)
        if (state.groups[g].target != state.groups[g].bias_values[0])
            minority_mass += q_history.back()[g];
    const double uniform_minority_share =
        static_cast<double>(2) / static_cast<double>(state.groups.size());
    CHECK(minority_mass > uniform_minority_share);
}

TEST_CASE("train_group_dro: deterministic under a fixed seed") {
    auto spec = testutil::small_gaussian_spec(2, 30, 0.85, 5);
    const auto ds = data::generate_biased_gaussians(spec);
    data::TrainView view(ds);
    std::vector<std::string> names = {"bias"};
    std::vector<data::GroupId> groups;
    for (std::size_t i = 0; i < ds.size(); ++i)
        groups.push_back(data::group_of(ds, i, names));
    debias::TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.hidden = {6};
    cfg.seed = 99;
    const auto a = baselines::train_group_dro(view, groups, cfg);
    const auto b = baselines::train_group_dro(view, groups, cfg);
    CHECK(testutil::flatten(a) == testutil::flatten(b));
}
