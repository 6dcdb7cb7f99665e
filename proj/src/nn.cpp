#include "dlab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dlab/errors.hpp"

namespace dlab::nn {

DenseNet DenseNet::he_init(std::size_t input_dim, std::span<const std::size_t> hidden,
                           std::size_t output_dim, Rng& rng) {
    if (input_dim == 0 || output_dim == 0)
        throw ArchitectureError("he_init: zero input or output dimension");
    std::vector<std::size_t> dims;
    dims.push_back(input_dim);
    for (std::size_t h : hidden) {
        if (h == 0) throw ArchitectureError("he_init: zero hidden width");
        dims.push_back(h);
    }
    dims.push_back(output_dim);

    std::vector<LayerParams> layers;
    layers.reserve(dims.size() - 1);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t in = dims[l], out = dims[l + 1];
        LayerParams p{Matrix(out, in), std::vector<double>(out, 0.0)};
        const double scale = std::sqrt(2.0 / static_cast<double>(in));
        for (std::size_t r = 0; r < out; ++r)
            for (std::size_t c = 0; c < in; ++c) p.weight(r, c) = scale * rng.normal();
        layers.push_back(std::move(p));
    }
    return DenseNet(std::move(layers));
}

DenseNet DenseNet::from_layers(std::vector<LayerParams> layers) {
    if (layers.empty()) throw ArchitectureError("from_layers: no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (layers[l].bias.size() != layers[l].out_dim())
            throw ShapeError("from_layers: bias size does not match layer " + std::to_string(l));
        if (l > 0 && layers[l].in_dim() != layers[l - 1].out_dim())
            throw ShapeError("from_layers: layer dimensions do not chain at layer " +
                             std::to_string(l));
        if (!layers[l].weight.all_finite())
            throw NumericError("from_layers: non-finite weight in layer " + std::to_string(l));
        for (double b : layers[l].bias)
            if (!std::isfinite(b))
                throw NumericError("from_layers: non-finite bias in layer " + std::to_string(l));
    }
    return DenseNet(std::move(layers));
}

std::size_t DenseNet::last_hidden_width() const {
    if (num_hidden() == 0)
        throw ArchitectureError("net has no hidden layer");
    return layers_[layers_.size() - 2].out_dim();
}

bool DenseNet::same_architecture(const DenseNet& other) const {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t l = 0; l < layers_.size(); ++l)
        if (layers_[l].in_dim() != other.layers_[l].in_dim() ||
            layers_[l].out_dim() != other.layers_[l].out_dim())
            return false;
    return true;
}

bool DenseNet::all_finite() const {
    for (const auto& p : layers_) {
        if (!p.weight.all_finite()) return false;
        for (double b : p.bias)
            if (!std::isfinite(b)) return false;
    }
    return true;
}

namespace {

// z = x * W^T + b, then optional ReLU into `post`.
void affine(const Matrix& x, const LayerParams& p, Matrix& pre) {
    gemm_nt(x, p.weight, pre);
    const std::size_t rows = pre.rows(), cols = pre.cols();
    for (std::size_t i = 0; i < rows; ++i) {
        double* r = pre.row(i);
        for (std::size_t j = 0; j < cols; ++j) r[j] += p.bias[j];
    }
}

Matrix relu(const Matrix& pre) {
    Matrix post(pre.rows(), pre.cols());
    const double* in = pre.data();
    double* out = post.data();
    for (std::size_t i = 0; i < pre.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
    return post;
}

}  // namespace

ForwardCache forward(const DenseNet& net, const Matrix& inputs) {
    if (net.num_layers() == 0) throw ArchitectureError("forward: empty net");
    if (inputs.cols() != net.input_dim())
        throw ShapeError("forward: input dim " + std::to_string(inputs.cols()) +
                         " != net input dim " + std::to_string(net.input_dim()));
    if (inputs.rows() == 0) throw ShapeError("forward: empty batch");

    ForwardCache cache;
    cache.input = inputs;
    cache.pre.reserve(net.num_layers());
    cache.post.reserve(net.num_layers());

    const Matrix* act = &cache.input;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        Matrix pre;
        affine(*act, net.layer(l), pre);
        cache.pre.push_back(std::move(pre));
        if (l + 1 < net.num_layers()) {
            cache.post.push_back(relu(cache.pre.back()));
        } else {
            cache.post.push_back(cache.pre.back());  // identity output layer
        }
        act = &cache.post.back();
    }
    return cache;
}

std::vector<double> softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
    const std::size_t b = logits.rows(), c = logits.cols();
    if (labels.size() != b) throw ShapeError("softmax_cross_entropy: label count != batch size");

    std::vector<double> loss(b);
    for (std::size_t i = 0; i < b; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= c)
            throw LabelError("softmax_cross_entropy: label " + std::to_string(y) +
                             " outside [0, " + std::to_string(c) + ")");
        const double* row = logits.row(i);
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
        loss[i] = std::max(0.0, std::log(sum) - (row[y] - mx));
    }
    return loss;
}

Gradients backward_weighted(const DenseNet& net, const ForwardCache& cache,
                            std::span<const int> labels, std::span<const double> sample_weights) {
    const std::size_t b = cache.batch_size();
    const std::size_t c = net.output_dim();
    if (labels.size() != b || sample_weights.size() != b)
        throw ShapeError("backward_weighted: labels/weights size != batch size");
    if (cache.pre.size() != net.num_layers())
        throw ShapeError("backward_weighted: cache does not match net");
    for (double w : sample_weights)
        if (w < 0.0 || !std::isfinite(w))
            throw WeightError("backward_weighted: sample weights must be finite and >= 0");

    // dL/dlogits for L = sum_i w_i * ce_i:  w_i * (softmax(logits_i) - onehot(y_i))
    const Matrix& logits = cache.logits();
    Matrix delta(b, c);
    for (std::size_t i = 0; i < b; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= c)
            throw LabelError("backward_weighted: label out of range");
        const double* row = logits.row(i);
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        double* drow = delta.row(i);
        for (std::size_t j = 0; j < c; ++j) {
            drow[j] = std::exp(row[j] - mx);
            sum += drow[j];
        }
        const double w = sample_weights[i];
        for (std::size_t j = 0; j < c; ++j) drow[j] = w * (drow[j] / sum);
        drow[y] -= w;
    }

    Gradients grads(net.num_layers());
    Matrix next_delta;
    for (std::size_t l = net.num_layers(); l-- > 0;) {
        const Matrix& input_act = (l == 0) ? cache.input : cache.post[l - 1];
        LayerParams& g = grads[l];
        gemm_tn(delta, input_act, g.weight);  // [out x in]
        g.bias.assign(net.layer(l).out_dim(), 0.0);
        for (std::size_t i = 0; i < b; ++i) {
            const double* drow = delta.row(i);
            for (std::size_t j = 0; j < g.bias.size(); ++j) g.bias[j] += drow[j];
        }
        if (l > 0) {
            gemm_nn(delta, net.layer(l).weight, next_delta);  // [B x in]
            // ReLU mask from the previous layer's pre-activation.
            const Matrix& pre = cache.pre[l - 1];
            for (std::size_t i = 0; i < next_delta.size(); ++i)
                if (pre.data()[i] <= 0.0) next_delta.data()[i] = 0.0;
            std::swap(delta, next_delta);
        }
    }
    return grads;
}

Matrix extract_features(const DenseNet& net, const Matrix& inputs) {
    if (net.num_hidden() == 0)
        throw ArchitectureError("extract_features: net has no hidden layer");
    ForwardCache cache = forward(net, inputs);
    return std::move(cache.post[cache.post.size() - 2]);
}

}  // namespace dlab::nn
