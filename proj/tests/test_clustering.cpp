#include "doctest.h"

#include <filesystem>
#include <functional>
#include <set>

#include "dlab/clustering.hpp"
#include "dlab/errors.hpp"
#include "test_util.hpp"

using namespace dlab;
using testutil::Matrix;

namespace {

// Exhaustive-partition oracle: minimum WCSS over all partitions of the
// points into at most K clusters, enumerated as restricted growth strings.
double brute_force_wcss(const Matrix& pts, int k) {
    const std::size_t n = pts.rows(), h = pts.cols();
    std::vector<int> assign(n, 0);
    double best = std::numeric_limits<double>::infinity();

    const auto score = [&]() {
        int clusters = 0;
        for (int a : assign) clusters = std::max(clusters, a + 1);
        double wcss = 0.0;
        for (int c = 0; c < clusters; ++c) {
            std::vector<double> mean(h, 0.0);
            std::size_t count = 0;
            for (std::size_t i = 0; i < n; ++i)
                if (assign[i] == c) {
                    ++count;
                    for (std::size_t j = 0; j < h; ++j) mean[j] += pts(i, j);
                }
            if (count == 0) continue;
            for (double& m : mean) m /= static_cast<double>(count);
            for (std::size_t i = 0; i < n; ++i)
                if (assign[i] == c)
                    for (std::size_t j = 0; j < h; ++j) {
                        const double d = pts(i, j) - mean[j];
                        wcss += d * d;
                    }
        }
        best = std::min(best, wcss);
    };

    std::function<void(std::size_t, int)> rec = [&](std::size_t i, int max_used) {
        if (i == n) {
            score();
            return;
        }
        const int limit = std::min(max_used + 1, k - 1);
        for (int v = 0; v <= limit; ++v) {
            assign[i] = v;
            rec(i + 1, std::max(max_used, v));
        }
    };
    rec(1, 0);  // first point pinned to cluster 0
    return best;
}

}  // namespace

TEST_CASE("kmeans: K=1 returns the mean of all points") {
    Matrix pts(5, 2);
    Rng rng(3);
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        pts(i, 0) = rng.normal();
        pts(i, 1) = rng.normal();
        mx += pts(i, 0);
        my += pts(i, 1);
    }
    const auto res = cluster::kmeans_fit(pts, 1, 7);
    CHECK(res.centroids(0, 0) == doctest::Approx(mx / 5.0).epsilon(1e-12));
    CHECK(res.centroids(0, 1) == doctest::Approx(my / 5.0).epsilon(1e-12));
    CHECK(res.sizes[0] == 5);
}

TEST_CASE("kmeans: two 1-D pairs split at the brute-force optimum") {
    Matrix pts(4, 1);
    pts(0, 0) = 0.0;
    pts(1, 0) = 0.1;
    pts(2, 0) = 10.0;
    pts(3, 0) = 10.1;
    const auto res = cluster::kmeans_fit(pts, 2, 5, {.restarts = 10});

    // oracle agreement
    const double opt = brute_force_wcss(pts, 2);
    CHECK(res.wcss == doctest::Approx(opt).epsilon(1e-9));

    // centroids {0.05, 10.05} in some order, partition {{0,1},{2,3}}
    std::vector<double> cents = {res.centroids(0, 0), res.centroids(1, 0)};
    std::sort(cents.begin(), cents.end());
    CHECK(cents[0] == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(cents[1] == doctest::Approx(10.05).epsilon(1e-9));
    CHECK(res.assignments[0] == res.assignments[1]);
    CHECK(res.assignments[2] == res.assignments[3]);
    CHECK(res.assignments[0] != res.assignments[2]);
}

TEST_CASE("kmeans: N < K leaves exactly N non-empty clusters") {
    Matrix pts(3, 2);
    Rng rng(11);
    for (std::size_t i = 0; i < pts.size(); ++i) pts.data()[i] = rng.normal();
    const auto res = cluster::kmeans_fit(pts, 8, 1);
    std::size_t nonempty = 0, total = 0;
    for (std::size_t s : res.sizes) {
        if (s > 0) ++nonempty;
        total += s;
    }
    CHECK(nonempty == 3);
    CHECK(total == 3);
    CHECK(res.wcss == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("kmeans: small-instance WCSS matches exhaustive brute force >= 95/100") {
    Rng rng(4242);
    int matches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.uniform_index(9);   // 2..10
        const int k = 1 + static_cast<int>(rng.uniform_index(3));  // 1..3
        const std::size_t h = 1 + rng.uniform_index(2);   // 1..2 dims
        Matrix pts(n, h);
        for (std::size_t i = 0; i < pts.size(); ++i) pts.data()[i] = rng.uniform();

        const auto res = cluster::kmeans_fit(pts, k, rng.next(), {.restarts = 10});
        const double opt = brute_force_wcss(pts, k);
        CHECK(res.wcss >= opt - 1e-9);  // cannot beat the true optimum
        if (res.wcss <= opt + 1e-9 * (1.0 + opt)) ++matches;
    }
    CHECK(matches >= 95);
}

TEST_CASE("kmeans: WCSS monotonicity check stays silent on random instances") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 20 + rng.uniform_index(30);
        Matrix pts(n, 3);
        for (std::size_t i = 0; i < pts.size(); ++i) pts.data()[i] = rng.normal();
        cluster::KMeansOptions opts;
        opts.check_monotonic = true;
        CHECK_NOTHROW(cluster::kmeans_fit(pts, 4, rng.next(), opts));
    }
}

TEST_CASE("kmeans: deterministic for a fixed seed, partition always valid") {
    Rng rng(15);
    Matrix pts(40, 2);
    for (std::size_t i = 0; i < pts.size(); ++i) pts.data()[i] = rng.normal();
    const auto a = cluster::kmeans_fit(pts, 3, 123);
    const auto b = cluster::kmeans_fit(pts, 3, 123);
    CHECK(a.assignments == b.assignments);
    CHECK(a.centroids == b.centroids);

    std::size_t total = 0;
    for (std::size_t s : a.sizes) total += s;
    CHECK(total == 40);
    for (int asg : a.assignments) {
        CHECK(asg >= 0);
        CHECK(asg < 3);
    }
}

TEST_CASE("kmeans: non-finite points raise InputError") {
    Matrix pts(2, 1);
    pts(0, 0) = 1.0;
    pts(1, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(cluster::kmeans_fit(pts, 1, 1), InputError);
    CHECK_THROWS_AS(cluster::kmeans_fit(Matrix(2, 1, 0.0), 0, 1), InputError);
}

TEST_CASE("fit_pseudo_attributes: well-separated blobs are recovered exactly") {
    // 2 classes, each with two blobs separated far beyond their spread
    Rng rng(8);
    const std::size_t per_blob = 20;
    Matrix feats(2 * 2 * per_blob, 2);
    std::vector<int> targets;
    std::vector<int> true_blob;
    std::size_t row = 0;
    for (int cls = 0; cls < 2; ++cls)
        for (int blob = 0; blob < 2; ++blob)
            for (std::size_t i = 0; i < per_blob; ++i, ++row) {
                feats(row, 0) = 100.0 * blob + 0.01 * rng.normal();
                feats(row, 1) = 50.0 * cls + 0.01 * rng.normal();
                targets.push_back(cls);
                true_blob.push_back(blob);
            }

    const auto model = cluster::fit_pseudo_attributes(feats, targets, 2, 2, 77);
    CHECK(model.total_clusters() == 4);

    // within each class, cluster assignment must be constant on each blob
    // and different across blobs
    for (int cls = 0; cls < 2; ++cls) {
        std::map<int, std::set<int>> blob_to_locals;
        for (std::size_t i = 0; i < targets.size(); ++i)
            if (targets[i] == cls)
                blob_to_locals[true_blob[i]].insert(model.assignment(i).local);
        CHECK(blob_to_locals[0].size() == 1);
        CHECK(blob_to_locals[1].size() == 1);
        CHECK(*blob_to_locals[0].begin() != *blob_to_locals[1].begin());
    }
}

TEST_CASE("fit_pseudo_attributes: K=1 degenerates to class labels") {
    Rng rng(5);
    Matrix feats(30, 3);
    std::vector<int> targets;
    for (std::size_t i = 0; i < 30; ++i) {
        for (std::size_t j = 0; j < 3; ++j) feats(i, j) = rng.normal();
        targets.push_back(static_cast<int>(i % 3));
    }
    const auto model = cluster::fit_pseudo_attributes(feats, targets, 3, 1, 1);
    for (std::size_t i = 0; i < 30; ++i) {
        CHECK(model.assignment(i).cls == targets[i]);
        CHECK(model.assignment(i).local == 0);
    }
    for (int c = 0; c < 3; ++c)
        CHECK(model.cluster_size({c, 0}) == 10);
}

TEST_CASE("fit_pseudo_attributes: C=10, K=8 yields 80 ids with sizes summing to N") {
    Rng rng(6);
    const std::size_t n = 400;
    Matrix feats(n, 4);
    std::vector<int> targets;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < 4; ++j) feats(i, j) = rng.normal();
        targets.push_back(static_cast<int>(rng.uniform_index(10)));
    }
    const auto model = cluster::fit_pseudo_attributes(feats, targets, 10, 8, 3);
    CHECK(model.total_clusters() == 80);
    std::size_t total = 0;
    for (std::size_t f = 0; f < model.total_clusters(); ++f)
        total += model.cluster_size(model.from_flat(f));
    CHECK(total == n);
}

TEST_CASE("fit_pseudo_attributes: a class with zero examples contributes zero clusters") {
    Matrix feats(4, 2, 1.0);
    std::vector<int> targets = {0, 0, 2, 2};  // class 1 empty
    const auto model = cluster::fit_pseudo_attributes(feats, targets, 3, 2, 1);
    CHECK(model.fitted(0));
    CHECK(!model.fitted(1));
    CHECK(model.fitted(2));
    CHECK(model.cluster_size({1, 0}) == 0);
    CHECK_THROWS_AS(model.centroids(1), ModelError);
}

TEST_CASE("assign: exact centroid, tie-break, and replay of the fit-time table") {
    Matrix feats(6, 2);
    std::vector<int> targets(6, 0);
    feats(0, 0) = 0.0;
    feats(1, 0) = 0.2;
    feats(2, 0) = 0.1;
    feats(3, 0) = 10.0;
    feats(4, 0) = 10.2;
    feats(5, 0) = 10.1;
    const auto model = cluster::fit_pseudo_attributes(feats, targets, 1, 2, 9,
                                                      {.restarts = 10});

    // feature equal to a centroid maps to that centroid
    const Matrix& cents = model.centroids(0);
    for (int c = 0; c < 2; ++c) {
        std::vector<double> f = {cents(static_cast<std::size_t>(c), 0),
                                 cents(static_cast<std::size_t>(c), 1)};
        CHECK(cluster::assign(model, f, 0).local == c);
    }

    // equidistant between the two centroids: the lower local index wins
    std::vector<double> mid = {(cents(0, 0) + cents(1, 0)) / 2.0,
                               (cents(0, 1) + cents(1, 1)) / 2.0};
    CHECK(cluster::assign(model, mid, 0).local == 0);

    // replaying assignment over the training set reproduces the table
    for (std::size_t i = 0; i < 6; ++i) {
        std::vector<double> f = {feats(i, 0), feats(i, 1)};
        CHECK(cluster::assign(model, f, 0) == model.assignment(i));
    }

    CHECK_THROWS_AS(cluster::assign(model, mid, 5), ModelError);
}

TEST_CASE("cluster snapshot: save-then-load preserves the model") {
    namespace fs = std::filesystem;
    Rng rng(31);
    Matrix feats(60, 3);
    std::vector<int> targets;
    for (std::size_t i = 0; i < 60; ++i) {
        for (std::size_t j = 0; j < 3; ++j) feats(i, j) = rng.normal();
        targets.push_back(static_cast<int>(i % 4));
    }
    const auto model = cluster::fit_pseudo_attributes(feats, targets, 4, 3, 12);
    const fs::path path = fs::temp_directory_path() / "dlab_clusters.bin";
    cluster::save_cluster_model(path.string(), model, 0xabcdef12u);
    std::uint64_t hash = 0;
    const auto back = cluster::load_cluster_model(path.string(), &hash);
    CHECK(hash == 0xabcdef12u);
    CHECK(back.num_classes() == 4);
    CHECK(back.clusters_per_class() == 3);
    CHECK(back.feature_dim() == 3);
    CHECK(back.assignments() == model.assignments());
    for (int c = 0; c < 4; ++c) CHECK(back.centroids(c) == model.centroids(c));
}
