#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dlab/clustering.hpp"
#include "dlab/data.hpp"
#include "dlab/nn.hpp"
#include "dlab/optim.hpp"

namespace dlab::debias {

// Which factors of the cluster importance weight are active. ScaleAndLoss
// is the full scheme (mean cluster loss divided by cluster size); the other
// modes are its ablations. Uniform recovers plain ERM.
enum class WeightingMode { ScaleAndLoss, LossOnly, ScaleOnly, Uniform };

// How often the per-cluster mean losses feeding the EMA are refreshed.
// FullPassEveryStep is the faithful-but-O(N)-per-step variant; BatchPartial
// updates only the clusters present in the current batch.
enum class WeightUpdatePolicy { FullPassEveryStep, FullPassEveryEpoch, BatchPartial };

struct TrainConfig {
    int epochs = 100;
    int batch_size = 128;
    double learning_rate = 1e-3;
    nn::ScheduleKind schedule = nn::ScheduleKind::Cosine;
    std::vector<std::size_t> hidden = {100, 100, 100};
    int clusters_per_class = 8;  // K
    double momentum = 0.3;       // EMA momentum m
    WeightingMode mode = WeightingMode::ScaleAndLoss;
    WeightUpdatePolicy update_policy = WeightUpdatePolicy::BatchPartial;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;

    void validate() const;  // throws SpecError
};

/// The EMA-maintained cluster weights omega. Clusters with N_k = 0 carry no
/// entry; all stored weights are finite and >= 0.
class ClusterWeights {
public:
    ClusterWeights() = default;
    ClusterWeights(const cluster::ClusterModel& model, double momentum,
                   WeightUpdatePolicy policy);

    double momentum() const { return momentum_; }
    WeightUpdatePolicy policy() const { return policy_; }

    bool has(cluster::ClusterId id) const;
    double omega(cluster::ClusterId id) const;  // ContractError if absent
    void set(cluster::ClusterId id, double value);

    std::size_t entries() const { return count_; }
    double min_omega() const;
    double max_omega() const;

    int clusters_per_class() const { return clusters_per_class_; }

private:
    std::size_t flat(cluster::ClusterId id) const {
        return static_cast<std::size_t>(id.cls) * static_cast<std::size_t>(clusters_per_class_) +
               static_cast<std::size_t>(id.local);
    }
    int clusters_per_class_ = 0;
    double momentum_ = 0.3;
    WeightUpdatePolicy policy_ = WeightUpdatePolicy::BatchPartial;
    std::vector<double> omega_;
    std::vector<std::uint8_t> present_;
    std::size_t count_ = 0;
};

/// Unnormalized importance of one cluster under the given mode:
/// ScaleAndLoss -> mean_loss / N_k, LossOnly -> mean_loss,
/// ScaleOnly -> 1 / N_k, Uniform -> 1.
double target_weight(WeightingMode mode, double mean_loss, std::size_t n_k);

/// EMA update: for every covered cluster,
/// omega_k <- (1 - m) * omega_k + m * target_weight(mode, mean_loss_k, N_k).
/// Uncovered clusters are unchanged.
ClusterWeights update_weights(ClusterWeights weights,
                              const std::map<cluster::ClusterId, double>& per_cluster_mean_loss,
                              const std::map<cluster::ClusterId, std::size_t>& sizes,
                              WeightingMode mode);

/// Per-batch normalization: w_i = omega_{k_i} / sum_j omega_{k_j}. An
/// all-zero batch falls back to uniform 1/B with a logged warning.
std::vector<double> batch_weights(const ClusterWeights& weights,
                                  std::span<const cluster::ClusterId> batch_cluster_ids);

/// Initialize omega from one full evaluation pass with the given (freshly
/// initialized) model: omega_k = target_weight(mode, initial_mean_loss_k, N_k).
ClusterWeights init_weights(const cluster::ClusterModel& model, WeightingMode mode,
                            const data::TrainView& view, const nn::DenseNet& net,
                            double momentum, WeightUpdatePolicy policy);

// One line-delimited record per epoch.
struct EpochLog {
    int epoch = 0;
    long step = 0;          // steps completed so far
    double lr = 0.0;        // rate used by the epoch's last step
    double mean_loss = 0.0; // plain mean per-sample loss over the epoch
    double min_omega = 1.0;
    double max_omega = 1.0;
    double batch_weight_entropy = 0.0;  // entropy of the last batch's normalized weights
};
using EpochLogger = std::function<void(const EpochLog&)>;

/// ERM training of the base model: uniform 1/B weights per batch sample.
nn::DenseNet train_base(const data::TrainView& view, const TrainConfig& config,
                        const EpochLogger& logger = {});

/// Weighted-risk training of the target model. Cluster ids come from the
/// model's precomputed assignment table; weights are EMA-refreshed per the
/// update policy and normalized over each batch. With WeightingMode::Uniform
/// the parameter trajectory is bit-identical to train_base under the same
/// seed.
nn::DenseNet train_debiased(const data::TrainView& view, const nn::DenseNet& base,
                            const cluster::ClusterModel& cluster_model,
                            const TrainConfig& config, const EpochLogger& logger = {});

// Per-cluster mean losses of the current net over the full dataset
// (deterministic chunked evaluation). Exposed for weight initialization and
// refresh; covers every cluster with N_k >= 1.
std::map<cluster::ClusterId, double> per_cluster_mean_loss(const nn::DenseNet& net,
                                                           const data::TrainView& view,
                                                           const cluster::ClusterModel& model);

}  // namespace dlab::debias
