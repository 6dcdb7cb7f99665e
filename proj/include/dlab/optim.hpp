#pragma once

#include "dlab/nn.hpp"

namespace dlab::nn {

// Adam accumulators, shaped like the net parameters. Weight decay is
// decoupled: applied after the moment update, outside the accumulators.
struct AdamState {
    std::vector<LayerParams> m;
    std::vector<LayerParams> v;
    long t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;

    static AdamState init(const DenseNet& net, double weight_decay = 0.0);
};

/// One Adam step with bias correction, then decoupled decay
/// theta <- theta - lr * lambda * theta. Throws NumericError on a
/// non-finite gradient (the run must abort rather than corrupt state).
void adam_step(DenseNet& net, const Gradients& grads, AdamState& state, double lr);

enum class ScheduleKind { Constant, Cosine };

struct LrSchedule {
    double base_lr = 1e-3;
    long total_steps = 1;
    ScheduleKind kind = ScheduleKind::Cosine;
};

/// Learning rate at `step` in [0, total_steps]. Cosine:
/// base_lr * 0.5 * (1 + cos(pi * step / T)). Throws ScheduleError past T.
double lr_at(const LrSchedule& schedule, long step);

}  // namespace dlab::nn
