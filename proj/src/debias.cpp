#include "dlab/debias.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "dlab/errors.hpp"
#include "dlab/rng.hpp"
#include "train_loop.hpp"

namespace dlab::debias {

void TrainConfig::validate() const {
    if (epochs < 1) throw SpecError("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw SpecError("TrainConfig: batch_size must be >= 1");
    if (learning_rate <= 0.0) throw SpecError("TrainConfig: learning_rate must be > 0");
    if (clusters_per_class < 1) throw SpecError("TrainConfig: clusters_per_class must be >= 1");
    if (momentum < 0.0 || momentum > 1.0) throw SpecError("TrainConfig: momentum must be in [0, 1]");
    if (weight_decay < 0.0) throw SpecError("TrainConfig: weight_decay must be >= 0");
}

ClusterWeights::ClusterWeights(const cluster::ClusterModel& model, double momentum,
                               WeightUpdatePolicy policy)
    : clusters_per_class_(model.clusters_per_class()), momentum_(momentum), policy_(policy),
      omega_(model.total_clusters(), 0.0), present_(model.total_clusters(), 0) {
    if (momentum < 0.0 || momentum > 1.0)
        throw SpecError("ClusterWeights: momentum must be in [0, 1]");
    for (std::size_t f = 0; f < model.total_clusters(); ++f) {
        if (model.cluster_size(model.from_flat(f)) > 0) {
            present_[f] = 1;
            ++count_;
        }
    }
}

bool ClusterWeights::has(cluster::ClusterId id) const {
    const std::size_t f = flat(id);
    return f < present_.size() && present_[f];
}

double ClusterWeights::omega(cluster::ClusterId id) const {
    if (!has(id))
        throw ContractError("ClusterWeights: no entry for cluster (" + std::to_string(id.cls) +
                            ", " + std::to_string(id.local) + ")");
    return omega_[flat(id)];
}

void ClusterWeights::set(cluster::ClusterId id, double value) {
    if (!has(id))
        throw ContractError("ClusterWeights: no entry for cluster (" + std::to_string(id.cls) +
                            ", " + std::to_string(id.local) + ")");
    if (!(value >= 0.0) || !std::isfinite(value))
        throw WeightError("ClusterWeights: omega must be finite and >= 0");
    omega_[flat(id)] = value;
}

double ClusterWeights::min_omega() const {
    double mn = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < omega_.size(); ++f)
        if (present_[f]) mn = std::min(mn, omega_[f]);
    return count_ ? mn : 0.0;
}

double ClusterWeights::max_omega() const {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < omega_.size(); ++f)
        if (present_[f]) mx = std::max(mx, omega_[f]);
    return count_ ? mx : 0.0;
}

double target_weight(WeightingMode mode, double mean_loss, std::size_t n_k) {
    if (n_k == 0)
        throw ContractError("target_weight: N_k = 0 clusters must be excluded upstream");
    if (mean_loss < 0.0 || !std::isfinite(mean_loss))
        throw InputError("target_weight: mean loss must be finite and >= 0");
    switch (mode) {
        case WeightingMode::ScaleAndLoss: return mean_loss / static_cast<double>(n_k);
        case WeightingMode::LossOnly: return mean_loss;
        case WeightingMode::ScaleOnly: return 1.0 / static_cast<double>(n_k);
        case WeightingMode::Uniform: return 1.0;
    }
    throw ContractError("target_weight: unknown mode");
}

ClusterWeights update_weights(ClusterWeights weights,
                              const std::map<cluster::ClusterId, double>& per_cluster_mean_loss,
                              const std::map<cluster::ClusterId, std::size_t>& sizes,
                              WeightingMode mode) {
    const double m = weights.momentum();
    for (const auto& [id, mean_loss] : per_cluster_mean_loss) {
        if (mean_loss < 0.0 || !std::isfinite(mean_loss))
            throw InputError("update_weights: negative or non-finite mean loss");
        auto it = sizes.find(id);
        if (it == sizes.end())
            throw ContractError("update_weights: missing size for a covered cluster");
        const double target = target_weight(mode, mean_loss, it->second);
        weights.set(id, (1.0 - m) * weights.omega(id) + m * target);
    }
    return weights;
}

std::vector<double> batch_weights(const ClusterWeights& weights,
                                  std::span<const cluster::ClusterId> batch_cluster_ids) {
    std::vector<double> raw(batch_cluster_ids.size());
    for (std::size_t i = 0; i < batch_cluster_ids.size(); ++i)
        raw[i] = weights.omega(batch_cluster_ids[i]);
    return detail::normalize_batch_weights(raw);
}

std::map<cluster::ClusterId, double> per_cluster_mean_loss(const nn::DenseNet& net,
                                                           const data::TrainView& view,
                                                           const cluster::ClusterModel& model) {
    if (model.assignments().size() != view.size())
        throw ContractError("per_cluster_mean_loss: cluster model does not cover this dataset");

    std::vector<double> loss_sum(model.total_clusters(), 0.0);
    constexpr std::size_t kChunk = 512;
    std::vector<std::size_t> idx;
    std::vector<int> labels;
    for (std::size_t begin = 0; begin < view.size(); begin += kChunk) {
        const std::size_t end = std::min(view.size(), begin + kChunk);
        idx.resize(end - begin);
        std::iota(idx.begin(), idx.end(), begin);
        labels.resize(end - begin);
        for (std::size_t i = begin; i < end; ++i) labels[i - begin] = view.target(i);
        const Matrix x = view.gather(idx);
        const nn::ForwardCache cache = nn::forward(net, x);
        const std::vector<double> losses = nn::softmax_cross_entropy(cache.logits(), labels);
        for (std::size_t i = begin; i < end; ++i)
            loss_sum[model.flat_index(model.assignment(i))] += losses[i - begin];
    }

    std::map<cluster::ClusterId, double> means;
    for (std::size_t f = 0; f < model.total_clusters(); ++f) {
        const cluster::ClusterId id = model.from_flat(f);
        const std::size_t n = model.cluster_size(id);
        if (n > 0) means[id] = loss_sum[f] / static_cast<double>(n);
    }
    return means;
}

ClusterWeights init_weights(const cluster::ClusterModel& model, WeightingMode mode,
                            const data::TrainView& view, const nn::DenseNet& net,
                            double momentum, WeightUpdatePolicy policy) {
    ClusterWeights w(model, momentum, policy);
    if (mode == WeightingMode::Uniform) {
        for (std::size_t f = 0; f < model.total_clusters(); ++f) {
            const cluster::ClusterId id = model.from_flat(f);
            if (model.cluster_size(id) > 0) w.set(id, 1.0);
        }
        return w;
    }
    const auto means = per_cluster_mean_loss(net, view, model);
    for (const auto& [id, mean_loss] : means)
        w.set(id, target_weight(mode, mean_loss, model.cluster_size(id)));
    return w;
}

namespace {

// ERM: every sample weighs 1 before batch normalization.
class UniformProvider final : public detail::WeightProvider {
public:
    void raw_weights(std::span<const std::size_t> indices, std::span<double> out) override {
        (void)indices;
        std::fill(out.begin(), out.end(), 1.0);
    }
};

class ClusterWeightProvider final : public detail::WeightProvider {
public:
    ClusterWeightProvider(const cluster::ClusterModel& model, const TrainConfig& cfg)
        : model_(model), mode_(cfg.mode), policy_(cfg.update_policy), momentum_(cfg.momentum) {}

    void init(const nn::DenseNet& net, const data::TrainView& view) override {
        weights_ = init_weights(model_, mode_, view, net, momentum_, policy_);
    }

    void epoch_begin(const nn::DenseNet& net, const data::TrainView& view) override {
        if (mode_ != WeightingMode::Uniform && policy_ == WeightUpdatePolicy::FullPassEveryEpoch)
            full_refresh(net, view);
    }

    void step_begin(const nn::DenseNet& net, const data::TrainView& view) override {
        if (mode_ != WeightingMode::Uniform && policy_ == WeightUpdatePolicy::FullPassEveryStep)
            full_refresh(net, view);
    }

    void observe_batch(const detail::BatchContext& ctx) override {
        if (mode_ == WeightingMode::Uniform || policy_ != WeightUpdatePolicy::BatchPartial)
            return;
        // Batch estimate of each present cluster's mean loss.
        std::map<cluster::ClusterId, double> sums;
        std::map<cluster::ClusterId, std::size_t> counts;
        for (std::size_t i = 0; i < ctx.indices.size(); ++i) {
            const cluster::ClusterId id = model_.assignment(ctx.indices[i]);
            sums[id] += ctx.losses[i];
            counts[id] += 1;
        }
        std::map<cluster::ClusterId, double> means;
        std::map<cluster::ClusterId, std::size_t> sizes;
        for (const auto& [id, sum] : sums) {
            means[id] = sum / static_cast<double>(counts[id]);
            sizes[id] = model_.cluster_size(id);
        }
        weights_ = update_weights(std::move(weights_), means, sizes, mode_);
    }

    void raw_weights(std::span<const std::size_t> indices, std::span<double> out) override {
        for (std::size_t i = 0; i < indices.size(); ++i)
            out[i] = weights_.omega(model_.assignment(indices[i]));
    }

    void omega_range(double& min_out, double& max_out) const override {
        min_out = weights_.min_omega();
        max_out = weights_.max_omega();
    }

private:
    void full_refresh(const nn::DenseNet& net, const data::TrainView& view) {
        const auto means = per_cluster_mean_loss(net, view, model_);
        std::map<cluster::ClusterId, std::size_t> sizes;
        for (const auto& [id, unused] : means) sizes[id] = model_.cluster_size(id);
        weights_ = update_weights(std::move(weights_), means, sizes, mode_);
    }

    const cluster::ClusterModel& model_;
    WeightingMode mode_;
    WeightUpdatePolicy policy_;
    double momentum_;
    ClusterWeights weights_;
};

}  // namespace

nn::DenseNet train_base(const data::TrainView& view, const TrainConfig& config,
                        const EpochLogger& logger) {
    UniformProvider provider;
    return detail::run_training(view, config, provider, logger);
}

nn::DenseNet train_debiased(const data::TrainView& view, const nn::DenseNet& base,
                            const cluster::ClusterModel& cluster_model,
                            const TrainConfig& config, const EpochLogger& logger) {
    if (cluster_model.assignments().size() != view.size())
        throw ContractError("train_debiased: cluster model assignment table does not cover "
                            "this dataset");
    if (base.num_hidden() > 0 && base.last_hidden_width() != cluster_model.feature_dim())
        throw ContractError("train_debiased: cluster model feature dim does not match the "
                            "base model");
    ClusterWeightProvider provider(cluster_model, config);
    return detail::run_training(view, config, provider, logger);
}

}  // namespace dlab::debias

namespace dlab::detail {

std::vector<double> normalize_batch_weights(std::span<const double> raw) {
    std::vector<double> out(raw.begin(), raw.end());
    double sum = 0.0;
    for (double w : out) {
        if (w < 0.0 || !std::isfinite(w))
            throw WeightError("batch weights must be finite and >= 0");
        sum += w;
    }
    if (sum <= 0.0) {
        std::cerr << "[dlab] warning: all-zero batch weights; falling back to uniform\n";
        const double u = 1.0 / static_cast<double>(out.size());
        std::fill(out.begin(), out.end(), u);
        return out;
    }
    for (double& w : out) w /= sum;
    return out;
}

nn::DenseNet run_training(const data::TrainView& view, const debias::TrainConfig& config,
                          WeightProvider& provider, const debias::EpochLogger& logger) {
    config.validate();
    if (view.size() == 0) throw ContractError("run_training: empty dataset");
    if (config.hidden.empty())
        throw ArchitectureError("run_training: at least one hidden layer is required");

    // Independent streams for parameter init and batch shuffling, both
    // derived from the config seed.
    Rng init_rng(derive_seed(config.seed, 0x11));
    nn::DenseNet net = nn::DenseNet::he_init(view.feature_dim(), config.hidden,
                                             static_cast<std::size_t>(view.num_classes()),
                                             init_rng);
    nn::AdamState adam = nn::AdamState::init(net, config.weight_decay);

    const std::size_t n = view.size();
    const std::size_t batch = static_cast<std::size_t>(config.batch_size);
    const long steps_per_epoch = static_cast<long>((n + batch - 1) / batch);
    const nn::LrSchedule schedule{config.learning_rate,
                                  steps_per_epoch * static_cast<long>(config.epochs),
                                  config.schedule};

    provider.init(net, view);

    Rng shuffle_rng(derive_seed(config.seed, 0x22));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    std::vector<int> labels;
    std::vector<double> raw;
    long step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        provider.epoch_begin(net, view);
        shuffle_rng.shuffle(order);

        double epoch_loss_sum = 0.0;
        std::size_t epoch_loss_count = 0;
        double last_lr = 0.0;
        double last_entropy = 0.0;

        for (std::size_t begin = 0; begin < n; begin += batch) {
            provider.step_begin(net, view);
            const std::size_t end = std::min(n, begin + batch);
            const std::span<const std::size_t> indices(order.data() + begin, end - begin);

            const Matrix x = view.gather(indices);
            labels.resize(indices.size());
            for (std::size_t i = 0; i < indices.size(); ++i) labels[i] = view.target(indices[i]);

            const nn::ForwardCache cache = nn::forward(net, x);
            const std::vector<double> losses = nn::softmax_cross_entropy(cache.logits(), labels);
            for (double l : losses) {
                if (!std::isfinite(l))
                    throw NumericError("run_training: non-finite loss at step " +
                                       std::to_string(step));
                epoch_loss_sum += l;
            }
            epoch_loss_count += losses.size();

            provider.observe_batch({indices, labels, losses});

            raw.resize(indices.size());
            provider.raw_weights(indices, raw);
            const std::vector<double> w = normalize_batch_weights(raw);

            const nn::Gradients grads = nn::backward_weighted(net, cache, labels, w);
            last_lr = nn::lr_at(schedule, step);
            nn::adam_step(net, grads, adam, last_lr);

            double entropy = 0.0;
            for (double wi : w)
                if (wi > 0.0) entropy -= wi * std::log(wi);
            last_entropy = entropy;
            ++step;
        }

        if (logger) {
            debias::EpochLog log;
            log.epoch = epoch;
            log.step = step;
            log.lr = last_lr;
            log.mean_loss = epoch_loss_sum / static_cast<double>(epoch_loss_count);
            provider.omega_range(log.min_omega, log.max_omega);
            log.batch_weight_entropy = last_entropy;
            logger(log);
        }
    }
    return net;
}

}  // namespace dlab::detail
