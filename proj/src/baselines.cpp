#include "dlab/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "dlab/errors.hpp"
#include "train_loop.hpp"

namespace dlab::baselines {

GroupDroState GroupDroState::init(std::vector<data::GroupId> groups, double eta_q) {
    if (groups.empty()) throw SupervisionError("GroupDroState: no groups");
    GroupDroState s;
    s.groups = std::move(groups);
    std::sort(s.groups.begin(), s.groups.end());
    s.groups.erase(std::unique(s.groups.begin(), s.groups.end()), s.groups.end());
    s.q.assign(s.groups.size(), 1.0 / static_cast<double>(s.groups.size()));
    s.last_loss.assign(s.groups.size(), 0.0);
    s.eta_q = eta_q;
    return s;
}

void GroupDroState::update(const std::map<std::size_t, double>& group_mean_losses) {
    for (const auto& [g, loss] : group_mean_losses) {
        if (g >= q.size()) throw SupervisionError("GroupDroState: group index out of range");
        if (!std::isfinite(loss)) throw NumericError("GroupDroState: non-finite group loss");
        q[g] *= std::exp(eta_q * loss);
        last_loss[g] = loss;
    }
    double sum = 0.0;
    for (double v : q) sum += v;
    for (double& v : q) v /= sum;
}

nn::DenseNet train_erm(const data::TrainView& view, const debias::TrainConfig& config,
                       const debias::EpochLogger& logger) {
    return debias::train_base(view, config, logger);
}

namespace {

class GroupDroProvider final : public detail::WeightProvider {
public:
    GroupDroProvider(std::span<const data::GroupId> oracle_groups, double eta_q,
                     const QSnapshotLogger& q_logger)
        : q_logger_(q_logger) {
        state_ = GroupDroState::init({oracle_groups.begin(), oracle_groups.end()}, eta_q);
        group_of_example_.reserve(oracle_groups.size());
        for (const data::GroupId& g : oracle_groups) {
            const auto it = std::lower_bound(state_.groups.begin(), state_.groups.end(), g);
            group_of_example_.push_back(
                static_cast<std::size_t>(it - state_.groups.begin()));
        }
    }

    void observe_batch(const detail::BatchContext& ctx) override {
        std::map<std::size_t, double> sums;
        std::map<std::size_t, std::size_t> counts;
        for (std::size_t i = 0; i < ctx.indices.size(); ++i) {
            const std::size_t g = group_of_example_[ctx.indices[i]];
            sums[g] += ctx.losses[i];
            counts[g] += 1;
        }
        std::map<std::size_t, double> means;
        for (const auto& [g, sum] : sums) means[g] = sum / static_cast<double>(counts[g]);
        state_.update(means);
    }

    void raw_weights(std::span<const std::size_t> indices, std::span<double> out) override {
        // q_g divided by the group's batch count, so a group's total batch
        // weight is proportional to q_g.
        std::map<std::size_t, std::size_t> counts;
        for (std::size_t i : indices) counts[group_of_example_[i]] += 1;
        for (std::size_t i = 0; i < indices.size(); ++i) {
            const std::size_t g = group_of_example_[indices[i]];
            out[i] = state_.q[g] / static_cast<double>(counts[g]);
        }
    }

    void omega_range(double& min_out, double& max_out) const override {
        min_out = *std::min_element(state_.q.begin(), state_.q.end());
        max_out = *std::max_element(state_.q.begin(), state_.q.end());
    }

    void epoch_end(int epoch) {
        if (q_logger_) q_logger_(epoch, state_);
    }

    const GroupDroState& state() const { return state_; }

private:
    GroupDroState state_;
    std::vector<std::size_t> group_of_example_;
    QSnapshotLogger q_logger_;
};

}  // namespace

nn::DenseNet train_group_dro(const data::TrainView& view,
                             std::span<const data::GroupId> oracle_groups,
                             const debias::TrainConfig& config, const GroupDroOptions& options,
                             const debias::EpochLogger& logger, const QSnapshotLogger& q_logger) {
    if (oracle_groups.size() != view.size())
        throw SupervisionError("train_group_dro: oracle group labels missing or mismatched (" +
                               std::to_string(oracle_groups.size()) + " labels for " +
                               std::to_string(view.size()) + " examples)");
    GroupDroProvider provider(oracle_groups, options.eta_q, q_logger);
    int epoch_counter = 0;
    debias::EpochLogger wrapped = [&](const debias::EpochLog& log) {
        provider.epoch_end(epoch_counter++);
        if (logger) logger(log);
    };
    return detail::run_training(view, config, provider, wrapped);
}

}  // namespace dlab::baselines
