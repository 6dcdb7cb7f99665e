#pragma once

#include <functional>
#include <map>
#include <span>
#include <vector>

#include "dlab/data.hpp"
#include "dlab/debias.hpp"

namespace dlab::baselines {

// Exponentiated-gradient state over the oracle groups: q is a probability
// vector, sharpened toward high-loss groups at rate eta_q.
struct GroupDroState {
    std::vector<data::GroupId> groups;  // distinct groups, sorted
    std::vector<double> q;              // simplex over `groups`
    std::vector<double> last_loss;      // most recent observed mean loss per group
    double eta_q = 0.01;

    static GroupDroState init(std::vector<data::GroupId> groups, double eta_q);

    // Multiplicative update for the groups present in a batch
    // (q_g <- q_g * exp(eta_q * mean_loss_g)), then renormalize. Groups
    // without a sample get no multiplicative boost this step.
    void update(const std::map<std::size_t, double>& group_mean_losses);
};

/// ERM reference: identical to debias::train_base (shared implementation,
/// exposed under both names).
nn::DenseNet train_erm(const data::TrainView& view, const debias::TrainConfig& config,
                       const debias::EpochLogger& logger = {});

struct GroupDroOptions {
    double eta_q = 0.01;
};

using QSnapshotLogger = std::function<void(int epoch, const GroupDroState&)>;

/// Oracle Group DRO: requires the true group id of every training example
/// (the only entry point that sees bias information). Per batch, the mean
/// loss of each group present drives the q update; sample weights are
/// q_{g_i} / (batch count of g_i), normalized over the batch.
nn::DenseNet train_group_dro(const data::TrainView& view,
                             std::span<const data::GroupId> oracle_groups,
                             const debias::TrainConfig& config,
                             const GroupDroOptions& options = {},
                             const debias::EpochLogger& logger = {},
                             const QSnapshotLogger& q_logger = {});

}  // namespace dlab::baselines
