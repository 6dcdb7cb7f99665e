#pragma once

// Shared test helpers: independent oracles kept free of the implementation
// paths they check.

#include <cmath>
#include <vector>

#include "dlab/data.hpp"
#include "dlab/nn.hpp"
#include "dlab/rng.hpp"

namespace testutil {

using dlab::Matrix;
using dlab::Rng;

// Straight-line forward recomputation: plain triple loops, no shared gemm
// kernels, used as the oracle for nn::forward.
inline Matrix oracle_forward(const dlab::nn::DenseNet& net, const Matrix& x) {
    Matrix act = x;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const auto& p = net.layer(l);
        Matrix next(act.rows(), p.out_dim());
        for (std::size_t i = 0; i < act.rows(); ++i)
            for (std::size_t o = 0; o < p.out_dim(); ++o) {
                double s = p.bias[o];
                for (std::size_t c = 0; c < p.in_dim(); ++c) s += act(i, c) * p.weight(o, c);
                next(i, o) = s;
            }
        if (l + 1 < net.num_layers())
            for (std::size_t i = 0; i < next.size(); ++i)
                next.data()[i] = std::max(0.0, next.data()[i]);
        act = std::move(next);
    }
    return act;
}

// Weighted loss sum_i w_i * ce_i evaluated from scratch (used only through
// finite differences, never for the analytic path).
inline double weighted_loss(const dlab::nn::DenseNet& net, const Matrix& x,
                            const std::vector<int>& labels, const std::vector<double>& w) {
    const Matrix logits = oracle_forward(net, x);
    double total = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const double* row = logits.row(i);
        double mx = row[0];
        for (std::size_t c = 1; c < logits.cols(); ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < logits.cols(); ++c) sum += std::exp(row[c] - mx);
        total += w[i] * (std::log(sum) - (row[static_cast<std::size_t>(labels[i])] - mx));
    }
    return total;
}

// Central finite differences of the weighted loss over every parameter.
inline dlab::nn::Gradients fd_gradients(dlab::nn::DenseNet net, const Matrix& x,
                                        const std::vector<int>& labels,
                                        const std::vector<double>& w, double h = 1e-5) {
    dlab::nn::Gradients grads;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        auto& p = net.layer(l);
        dlab::nn::LayerParams g{Matrix(p.out_dim(), p.in_dim()),
                                std::vector<double>(p.out_dim(), 0.0)};
        for (std::size_t i = 0; i < p.weight.size(); ++i) {
            const double orig = p.weight.data()[i];
            p.weight.data()[i] = orig + h;
            const double up = weighted_loss(net, x, labels, w);
            p.weight.data()[i] = orig - h;
            const double down = weighted_loss(net, x, labels, w);
            p.weight.data()[i] = orig;
            g.weight.data()[i] = (up - down) / (2.0 * h);
        }
        for (std::size_t i = 0; i < p.bias.size(); ++i) {
            const double orig = p.bias[i];
            p.bias[i] = orig + h;
            const double up = weighted_loss(net, x, labels, w);
            p.bias[i] = orig - h;
            const double down = weighted_loss(net, x, labels, w);
            p.bias[i] = orig;
            g.bias[i] = (up - down) / (2.0 * h);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

// Standard gradcheck relative error with an absolute floor for near-zero
// coordinates.
inline double rel_error(double a, double b) {
    const double denom = std::max(std::abs(a), std::abs(b));
    if (denom < 1e-8) return 0.0;
    return std::abs(a - b) / denom;
}

inline double max_grad_rel_error(const dlab::nn::Gradients& analytic,
                                 const dlab::nn::Gradients& fd) {
    double worst = 0.0;
    for (std::size_t l = 0; l < analytic.size(); ++l) {
        for (std::size_t i = 0; i < analytic[l].weight.size(); ++i)
            worst = std::max(worst,
                             rel_error(analytic[l].weight.data()[i], fd[l].weight.data()[i]));
        for (std::size_t i = 0; i < analytic[l].bias.size(); ++i)
            worst = std::max(worst, rel_error(analytic[l].bias[i], fd[l].bias[i]));
    }
    return worst;
}

// Random small net + batch for gradient property tests.
struct RandomCase {
    dlab::nn::DenseNet net;
    Matrix x;
    std::vector<int> labels;
    std::vector<double> weights;
};

inline RandomCase random_case(Rng& rng, std::size_t max_hidden_layers = 2,
                              std::size_t max_width = 16) {
    const std::size_t input = 1 + rng.uniform_index(max_width);
    const std::size_t classes = 2 + rng.uniform_index(9);
    std::vector<std::size_t> hidden;
    const std::size_t n_hidden = rng.uniform_index(max_hidden_layers + 1);
    for (std::size_t i = 0; i < n_hidden; ++i) hidden.push_back(1 + rng.uniform_index(max_width));

    RandomCase c;
    c.net = dlab::nn::DenseNet::he_init(input, hidden, classes, rng);
    const std::size_t batch = 1 + rng.uniform_index(8);
    c.x = Matrix(batch, input);
    for (std::size_t i = 0; i < c.x.size(); ++i) c.x.data()[i] = rng.normal();
    for (std::size_t i = 0; i < batch; ++i) {
        c.labels.push_back(static_cast<int>(rng.uniform_index(classes)));
        c.weights.push_back(rng.uniform());
    }
    return c;
}

// Serialize all parameters to a byte-comparable vector.
inline std::vector<double> flatten(const dlab::nn::DenseNet& net) {
    std::vector<double> out;
    for (const auto& p : net.layers()) {
        out.insert(out.end(), p.weight.data(), p.weight.data() + p.weight.size());
        out.insert(out.end(), p.bias.begin(), p.bias.end());
    }
    return out;
}

// Small biased-Gaussian spec used across the trainer tests.
inline dlab::data::DatasetSpec small_gaussian_spec(int classes, std::size_t per_class,
                                                   double rho, std::uint64_t seed) {
    dlab::data::DatasetSpec spec;
    spec.kind = dlab::data::DatasetKind::GaussianSynthetic;
    spec.num_classes = classes;
    spec.bias_aligned_ratio = rho;
    spec.feature_dim = 2 * static_cast<std::size_t>(classes);
    spec.class_sizes.assign(static_cast<std::size_t>(classes), per_class);
    spec.seed = seed;
    spec.target_separation = 2.0;
    spec.bias_separation = 4.0;
    spec.noise_sigma = 1.0;
    return spec;
}

}  // namespace testutil
