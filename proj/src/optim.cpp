#include "dlab/optim.hpp"

#include <cmath>
#include <string>

#include "dlab/errors.hpp"

namespace dlab::nn {

AdamState AdamState::init(const DenseNet& net, double weight_decay) {
    AdamState s;
    s.weight_decay = weight_decay;
    s.m.reserve(net.num_layers());
    s.v.reserve(net.num_layers());
    for (const auto& p : net.layers()) {
        s.m.push_back({Matrix(p.out_dim(), p.in_dim()), std::vector<double>(p.out_dim(), 0.0)});
        s.v.push_back({Matrix(p.out_dim(), p.in_dim()), std::vector<double>(p.out_dim(), 0.0)});
    }
    return s;
}

namespace {

void adam_update(double* theta, const double* g, double* m, double* v, std::size_t n,
                 double lr, double b1, double b2, double eps, double bc1, double bc2,
                 double decay) {
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(g[i])) throw NumericError("adam_step: non-finite gradient");
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        theta[i] -= lr * decay * theta[i];
    }
}

}  // namespace

void adam_step(DenseNet& net, const Gradients& grads, AdamState& state, double lr) {
    if (lr < 0.0) throw ContractError("adam_step: negative learning rate");
    if (grads.size() != net.num_layers() || state.m.size() != net.num_layers())
        throw ShapeError("adam_step: gradient/state shape mismatch");

    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));

    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        LayerParams& p = net.layer(l);
        const LayerParams& g = grads[l];
        if (g.weight.rows() != p.weight.rows() || g.weight.cols() != p.weight.cols())
            throw ShapeError("adam_step: gradient shape mismatch at layer " + std::to_string(l));
        adam_update(p.weight.data(), g.weight.data(), state.m[l].weight.data(),
                    state.v[l].weight.data(), p.weight.size(), lr, state.beta1, state.beta2,
                    state.epsilon, bc1, bc2, state.weight_decay);
        adam_update(p.bias.data(), g.bias.data(), state.m[l].bias.data(),
                    state.v[l].bias.data(), p.bias.size(), lr, state.beta1, state.beta2,
                    state.epsilon, bc1, bc2, state.weight_decay);
    }
}

double lr_at(const LrSchedule& schedule, long step) {
    if (schedule.base_lr <= 0.0) throw ScheduleError("lr_at: base_lr must be positive");
    if (schedule.total_steps < 1) throw ScheduleError("lr_at: total_steps must be >= 1");
    if (step < 0 || step > schedule.total_steps)
        throw ScheduleError("lr_at: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(schedule.total_steps) + "]");
    if (schedule.kind == ScheduleKind::Constant) return schedule.base_lr;
    const double frac = static_cast<double>(step) / static_cast<double>(schedule.total_steps);
    return schedule.base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * frac));
}

}  // namespace dlab::nn
