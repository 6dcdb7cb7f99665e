#pragma once

// Internal shared training loop. ERM, the debiased trainer, and group DRO
// differ only in how they produce raw per-sample weights; everything else
// (batching, normalization, backward, Adam, logging) is this one code path,
// which is what makes the Uniform-mode reduction to ERM bit-identical.

#include <span>
#include <vector>

#include "dlab/data.hpp"
#include "dlab/debias.hpp"
#include "dlab/nn.hpp"

namespace dlab::detail {

struct BatchContext {
    std::span<const std::size_t> indices;
    std::span<const int> labels;
    std::span<const double> losses;  // per-sample CE under the current net
};

class WeightProvider {
public:
    virtual ~WeightProvider() = default;

    // Called once after parameter initialization, before the first step.
    virtual void init(const nn::DenseNet& /*net*/, const data::TrainView& /*view*/) {}
    // Refresh hooks for the full-pass update policies.
    virtual void epoch_begin(const nn::DenseNet& /*net*/, const data::TrainView& /*view*/) {}
    virtual void step_begin(const nn::DenseNet& /*net*/, const data::TrainView& /*view*/) {}
    // Losses of the current batch under the current net, before the step.
    virtual void observe_batch(const BatchContext& /*ctx*/) {}
    // Unnormalized weights for the batch.
    virtual void raw_weights(std::span<const std::size_t> indices, std::span<double> out) = 0;
    // For the epoch log.
    virtual void omega_range(double& min_out, double& max_out) const {
        min_out = 1.0;
        max_out = 1.0;
    }
};

// Scale raw weights to sum to exactly 1 over the batch; all-zero (or
// non-finite-sum) batches fall back to uniform with a warning on stderr.
std::vector<double> normalize_batch_weights(std::span<const double> raw);

nn::DenseNet run_training(const data::TrainView& view, const debias::TrainConfig& config,
                          WeightProvider& provider, const debias::EpochLogger& logger);

}  // namespace dlab::detail
