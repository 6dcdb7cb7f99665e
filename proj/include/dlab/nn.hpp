#pragma once

#include <span>
#include <vector>

#include "dlab/matrix.hpp"
#include "dlab/rng.hpp"

namespace dlab::nn {

// One affine layer. Weight is stored [out x in]; bias is [out].
struct LayerParams {
    Matrix weight;
    std::vector<double> bias;

    std::size_t out_dim() const { return weight.rows(); }
    std::size_t in_dim() const { return weight.cols(); }

    bool operator==(const LayerParams&) const = default;
};

/// Multi-layer perceptron: ReLU on hidden layers, identity on the output
/// layer. Layer dimensions must chain; parameters are always finite.
class DenseNet {
public:
    DenseNet() = default;

    // He-normal initialisation for the given architecture. `hidden` may be
    // empty (a single affine layer).
    static DenseNet he_init(std::size_t input_dim, std::span<const std::size_t> hidden,
                            std::size_t output_dim, Rng& rng);

    // Build from explicit layer parameters; validates chaining and finiteness.
    static DenseNet from_layers(std::vector<LayerParams> layers);

    std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
    std::size_t output_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }
    std::size_t num_layers() const { return layers_.size(); }
    std::size_t num_hidden() const { return layers_.empty() ? 0 : layers_.size() - 1; }

    // Width of the last hidden layer; throws ArchitectureError if none.
    std::size_t last_hidden_width() const;

    LayerParams& layer(std::size_t i) { return layers_[i]; }
    const LayerParams& layer(std::size_t i) const { return layers_[i]; }
    std::vector<LayerParams>& layers() { return layers_; }
    const std::vector<LayerParams>& layers() const { return layers_; }

    bool same_architecture(const DenseNet& other) const;
    bool all_finite() const;

    bool operator==(const DenseNet& other) const = default;

private:
    explicit DenseNet(std::vector<LayerParams> layers) : layers_(std::move(layers)) {}
    std::vector<LayerParams> layers_;
};

// Everything the exact backward pass needs from one forward pass.
// pre[l] / post[l] are the pre- and post-activation of layer l; the last
// layer's activation is the identity, so post.back() holds the logits.
struct ForwardCache {
    Matrix input;
    std::vector<Matrix> pre;
    std::vector<Matrix> post;

    const Matrix& logits() const { return post.back(); }
    std::size_t batch_size() const { return input.rows(); }
};

/// Forward pass over a [B x D] batch. Throws ShapeError on a dimension
/// mismatch; the returned cache is sufficient for backward_weighted.
ForwardCache forward(const DenseNet& net, const Matrix& inputs);

/// Per-sample softmax cross-entropy, computed with max-subtraction and
/// clamped below at 0. Throws LabelError for labels outside [0, C).
std::vector<double> softmax_cross_entropy(const Matrix& logits, std::span<const int> labels);

using Gradients = std::vector<LayerParams>;

/// Exact gradient of sum_i w_i * loss_i with respect to every parameter.
/// Weights must be non-negative (WeightError otherwise).
Gradients backward_weighted(const DenseNet& net, const ForwardCache& cache,
                            std::span<const int> labels, std::span<const double> sample_weights);

/// Post-ReLU activations of the last hidden layer, the feature embedding
/// used for pseudo-attribute clustering. Throws ArchitectureError if the
/// net has no hidden layer.
Matrix extract_features(const DenseNet& net, const Matrix& inputs);

}  // namespace dlab::nn
