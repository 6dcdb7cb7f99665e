#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dlab/matrix.hpp"

namespace dlab::cluster {

// Pseudo-attribute id: (target class, cluster index within that class).
struct ClusterId {
    int cls = 0;
    int local = 0;

    auto operator<=>(const ClusterId&) const = default;
};

struct KMeansOptions {
    int max_iter = 100;
    double tol = 1e-6;     // max centroid displacement
    int restarts = 5;      // k-means++ restarts, best WCSS kept
    bool check_monotonic = false;  // assert WCSS never increases per iteration
};

struct KMeansResult {
    Matrix centroids;             // [K x H]; empty clusters keep their last centroid
    std::vector<int> assignments; // [N], values in [0, K)
    std::vector<std::size_t> sizes;  // [K]
    double wcss = 0.0;
    int iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding. If N < K, exactly N clusters
/// are non-empty. Ties in assignment go to the lowest cluster index.
KMeansResult kmeans_fit(const Matrix& points, int k, std::uint64_t seed,
                        const KMeansOptions& opts = {});

/// Per-class clustering of base-model features. Classes with zero examples
/// contribute zero clusters (recorded, not fatal).
class ClusterModel {
public:
    ClusterModel() = default;
    ClusterModel(int num_classes, int clusters_per_class, std::size_t feature_dim)
        : num_classes_(num_classes), k_(clusters_per_class), feature_dim_(feature_dim),
          per_class_(static_cast<std::size_t>(num_classes)) {}

    int num_classes() const { return num_classes_; }
    int clusters_per_class() const { return k_; }
    std::size_t feature_dim() const { return feature_dim_; }
    std::size_t total_clusters() const {
        return static_cast<std::size_t>(num_classes_) * static_cast<std::size_t>(k_);
    }

    bool fitted(int cls) const;
    const Matrix& centroids(int cls) const;  // ModelError if unfitted

    const std::vector<ClusterId>& assignments() const { return assignments_; }
    ClusterId assignment(std::size_t example_index) const { return assignments_[example_index]; }

    std::size_t cluster_size(ClusterId id) const { return sizes_[flat_index(id)]; }
    std::size_t flat_index(ClusterId id) const {
        return static_cast<std::size_t>(id.cls) * static_cast<std::size_t>(k_) +
               static_cast<std::size_t>(id.local);
    }
    ClusterId from_flat(std::size_t flat) const {
        return {static_cast<int>(flat / static_cast<std::size_t>(k_)),
                static_cast<int>(flat % static_cast<std::size_t>(k_))};
    }

    // internal wiring used by fit/serialization
    void set_class(int cls, Matrix centroids);
    void set_assignments(std::vector<ClusterId> assignments);

private:
    int num_classes_ = 0;
    int k_ = 0;
    std::size_t feature_dim_ = 0;
    std::vector<Matrix> per_class_;        // empty Matrix => class unfitted
    std::vector<ClusterId> assignments_;   // fit-time table, one per example
    std::vector<std::size_t> sizes_;       // N_k per flat cluster index
};

ClusterModel fit_pseudo_attributes(const Matrix& features, std::span<const int> targets,
                                   int num_classes, int k, std::uint64_t seed,
                                   const KMeansOptions& opts = {});

/// Nearest centroid among the class's clusters by squared Euclidean
/// distance; ties break to the lowest local index.
ClusterId assign(const ClusterModel& model, std::span<const double> feature, int cls);

// Snapshot I/O (binary; includes the assignment table so clustering can be
// computed once and reused across target-training runs).
void save_cluster_model(const std::string& path, const ClusterModel& model,
                        std::uint64_t config_hash);
ClusterModel load_cluster_model(const std::string& path, std::uint64_t* config_hash = nullptr);

}  // namespace dlab::cluster
