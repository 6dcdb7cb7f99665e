#include "dlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dlab/errors.hpp"
#include "dlab/rng.hpp"

namespace dlab::data {

std::size_t AttributeSchema::bias_index(const std::string& name) const {
    for (std::size_t i = 0; i < bias_attrs.size(); ++i)
        if (bias_attrs[i].name == name) return i;
    throw SchemaError("unknown bias attribute '" + name + "'");
}

bool AttributeSchema::has_bias(const std::string& name) const {
    for (const auto& a : bias_attrs)
        if (a.name == name) return true;
    return false;
}

int LabeledDataset::bias_value(std::size_t i, const std::string& name) const {
    return bias_labels[schema.bias_index(name)][i];
}

Example LabeledDataset::example(std::size_t i) const {
    Example e;
    auto f = features_of(i);
    e.features.assign(f.begin(), f.end());
    e.target = targets[i];
    for (std::size_t a = 0; a < schema.bias_attrs.size(); ++a)
        e.bias_labels[schema.bias_attrs[a].name] = bias_labels[a][i];
    return e;
}

void LabeledDataset::push_back(const Example& e) {
    if (feature_dim == 0) feature_dim = e.features.size();
    if (e.features.size() != feature_dim)
        throw SpecError("push_back: feature dim mismatch");
    if (bias_labels.size() != schema.bias_attrs.size())
        bias_labels.resize(schema.bias_attrs.size());
    features.insert(features.end(), e.features.begin(), e.features.end());
    targets.push_back(e.target);
    for (std::size_t a = 0; a < schema.bias_attrs.size(); ++a) {
        auto it = e.bias_labels.find(schema.bias_attrs[a].name);
        if (it == e.bias_labels.end())
            throw SchemaError("push_back: example missing bias attribute '" +
                              schema.bias_attrs[a].name + "'");
        bias_labels[a].push_back(it->second);
    }
}

void LabeledDataset::validate() const {
    const std::size_t n = size();
    if (features.size() != n * feature_dim)
        throw SpecError("dataset: feature storage size mismatch");
    if (bias_labels.size() != schema.bias_attrs.size())
        throw SpecError("dataset: bias label columns do not match schema");
    for (const auto& col : bias_labels)
        if (col.size() != n) throw SpecError("dataset: bias label column length mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        if (targets[i] < 0 || targets[i] >= schema.num_classes)
            throw SpecError("dataset: target out of range at example " + std::to_string(i));
        if (!std::isfinite(static_cast<double>(features[i * feature_dim])))
            throw SpecError("dataset: non-finite feature at example " + std::to_string(i));
    }
    for (std::size_t a = 0; a < bias_labels.size(); ++a)
        for (std::size_t i = 0; i < n; ++i)
            if (bias_labels[a][i] < 0 || bias_labels[a][i] >= schema.bias_attrs[a].cardinality)
                throw SpecError("dataset: bias value out of range");
}

Matrix TrainView::gather(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), feature_dim_);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const float* src = features_ + indices[r] * feature_dim_;
        double* dst = out.row(r);
        for (std::size_t c = 0; c < feature_dim_; ++c) dst[c] = static_cast<double>(src[c]);
    }
    return out;
}

Matrix TrainView::gather_all() const {
    Matrix out(size_, feature_dim_);
    for (std::size_t i = 0; i < size_ * feature_dim_; ++i)
        out.data()[i] = static_cast<double>(features_[i]);
    return out;
}

namespace {

void check_gaussian_spec(const DatasetSpec& spec, std::size_t extra_dims) {
    if (spec.kind != DatasetKind::GaussianSynthetic)
        throw SpecError("generate_biased_gaussians: spec kind is not gaussian_synthetic");
    if (spec.num_classes < 2) throw SpecError("gaussian spec: num_classes must be >= 2");
    if (!(spec.bias_aligned_ratio > 0.0 && spec.bias_aligned_ratio <= 1.0))
        throw SpecError("gaussian spec: bias_aligned_ratio must be in (0, 1]");
    if (spec.class_sizes.size() != static_cast<std::size_t>(spec.num_classes))
        throw SpecError("gaussian spec: class_sizes must have one entry per class");
    for (std::size_t s : spec.class_sizes)
        if (s < 1) throw SpecError("gaussian spec: class sizes must be >= 1");
    const std::size_t needed = 2 * static_cast<std::size_t>(spec.num_classes) + extra_dims;
    if (spec.feature_dim < needed)
        throw SpecError("gaussian spec: feature_dim must be >= " + std::to_string(needed));
    if (spec.noise_sigma <= 0.0) throw SpecError("gaussian spec: noise_sigma must be > 0");
    for (const auto& eb : spec.extra_biases) {
        if (eb.cardinality < 2) throw SpecError("gaussian spec: extra bias cardinality >= 2");
        if (!(eb.aligned_ratio > 0.0 && eb.aligned_ratio <= 1.0))
            throw SpecError("gaussian spec: extra bias aligned_ratio must be in (0, 1]");
    }
}

// Bias value: class-aligned with probability rho, else uniform over the
// other cardinality-1 values.
int draw_bias_value(Rng& rng, int aligned, int cardinality, double rho) {
    if (rng.uniform() < rho) return aligned;
    int v = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(cardinality - 1)));
    if (v >= aligned) ++v;
    return v;
}

}  // namespace

LabeledDataset generate_biased_gaussians(const DatasetSpec& spec) {
    std::size_t extra_dims = 0;
    for (const auto& eb : spec.extra_biases) extra_dims += static_cast<std::size_t>(eb.cardinality);
    check_gaussian_spec(spec, extra_dims);

    const int c = spec.num_classes;
    LabeledDataset ds;
    ds.schema.num_classes = c;
    ds.schema.bias_attrs.push_back({"bias", c});
    for (const auto& eb : spec.extra_biases) ds.schema.bias_attrs.push_back({eb.name, eb.cardinality});
    ds.feature_dim = spec.feature_dim;
    ds.bias_labels.resize(ds.schema.bias_attrs.size());

    Rng rng(spec.seed);
    const std::size_t total =
        std::accumulate(spec.class_sizes.begin(), spec.class_sizes.end(), std::size_t{0});
    ds.features.reserve(total * spec.feature_dim);
    ds.targets.reserve(total);

    std::vector<double> mean(spec.feature_dim);
    for (int cls = 0; cls < c; ++cls) {
        for (std::size_t n = 0; n < spec.class_sizes[cls]; ++n) {
            std::fill(mean.begin(), mean.end(), 0.0);
            mean[static_cast<std::size_t>(cls)] = spec.target_separation;

            const int bias = draw_bias_value(rng, cls, c, spec.bias_aligned_ratio);
            mean[static_cast<std::size_t>(c + bias)] = spec.bias_separation;

            ds.targets.push_back(cls);
            ds.bias_labels[0].push_back(bias);

            std::size_t offset = 2 * static_cast<std::size_t>(c);
            for (std::size_t a = 0; a < spec.extra_biases.size(); ++a) {
                const auto& eb = spec.extra_biases[a];
                const int aligned = cls % eb.cardinality;
                const int v = draw_bias_value(rng, aligned, eb.cardinality, eb.aligned_ratio);
                mean[offset + static_cast<std::size_t>(v)] = eb.separation;
                ds.bias_labels[a + 1].push_back(v);
                offset += static_cast<std::size_t>(eb.cardinality);
            }

            for (std::size_t d = 0; d < spec.feature_dim; ++d)
                ds.features.push_back(
                    static_cast<float>(mean[d] + spec.noise_sigma * rng.normal()));
        }
    }
    return ds;
}

GroupId group_of(const Example& e, std::span<const std::string> bias_attr_names) {
    GroupId g;
    g.target = e.target;
    g.bias_values.reserve(bias_attr_names.size());
    for (const auto& name : bias_attr_names) {
        auto it = e.bias_labels.find(name);
        if (it == e.bias_labels.end())
            throw SchemaError("group_of: unknown bias attribute '" + name + "'");
        g.bias_values.push_back(it->second);
    }
    return g;
}

GroupId group_of(const LabeledDataset& ds, std::size_t index,
                 std::span<const std::string> bias_attr_names) {
    GroupId g;
    g.target = ds.targets[index];
    g.bias_values.reserve(bias_attr_names.size());
    for (const auto& name : bias_attr_names)
        g.bias_values.push_back(ds.bias_labels[ds.schema.bias_index(name)][index]);
    return g;
}

std::vector<GroupId> enumerate_groups(const AttributeSchema& schema,
                                      std::span<const std::string> bias_attr_names) {
    std::vector<int> cards;
    cards.reserve(bias_attr_names.size());
    for (const auto& name : bias_attr_names)
        cards.push_back(schema.bias_attrs[schema.bias_index(name)].cardinality);

    std::vector<GroupId> out;
    for (int t = 0; t < schema.num_classes; ++t) {
        std::vector<int> values(cards.size(), 0);
        bool done = false;
        while (!done) {
            out.push_back({t, values});
            // advance the mixed-radix counter over bias values
            done = true;
            for (std::size_t pos = values.size(); pos-- > 0;) {
                if (++values[pos] < cards[pos]) {
                    done = false;
                    break;
                }
                values[pos] = 0;
            }
        }
    }
    return out;
}

namespace {

LabeledDataset subset(const LabeledDataset& ds, std::span<const std::size_t> idx) {
    LabeledDataset out;
    out.schema = ds.schema;
    out.feature_dim = ds.feature_dim;
    out.provenance = ds.provenance;
    out.bias_labels.resize(ds.bias_labels.size());
    out.features.reserve(idx.size() * ds.feature_dim);
    out.targets.reserve(idx.size());
    for (std::size_t i : idx) {
        auto f = ds.features_of(i);
        out.features.insert(out.features.end(), f.begin(), f.end());
        out.targets.push_back(ds.targets[i]);
        for (std::size_t a = 0; a < ds.bias_labels.size(); ++a)
            out.bias_labels[a].push_back(ds.bias_labels[a][i]);
    }
    return out;
}

// Cut [0, n) into parts via rounded cumulative boundaries; each part size
// differs from fraction * n by at most 1.
std::vector<std::size_t> boundaries(std::size_t n, std::span<const double> fractions) {
    std::vector<std::size_t> b(fractions.size() + 1, 0);
    double cum = 0.0;
    for (std::size_t j = 0; j < fractions.size(); ++j) {
        cum += fractions[j];
        b[j + 1] = static_cast<std::size_t>(std::llround(cum * static_cast<double>(n)));
    }
    b.back() = n;
    return b;
}

}  // namespace

std::vector<LabeledDataset> split(const LabeledDataset& ds, std::span<const double> fractions,
                                  std::uint64_t seed, Stratify stratify) {
    if (fractions.empty()) throw SpecError("split: no fractions");
    double sum = 0.0;
    for (double f : fractions) {
        if (f < 0.0) throw SpecError("split: negative fraction");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw SpecError("split: fractions must sum to 1");

    Rng rng(seed);
    std::vector<std::vector<std::size_t>> part_indices(fractions.size());

    if (stratify == Stratify::None) {
        std::vector<std::size_t> order(ds.size());
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        auto b = boundaries(ds.size(), fractions);
        for (std::size_t j = 0; j < fractions.size(); ++j)
            part_indices[j].assign(order.begin() + static_cast<long>(b[j]),
                                   order.begin() + static_cast<long>(b[j + 1]));
    } else {
        std::vector<std::string> names;
        for (const auto& a : ds.schema.bias_attrs) names.push_back(a.name);
        std::map<GroupId, std::vector<std::size_t>> by_group;
        for (std::size_t i = 0; i < ds.size(); ++i)
            by_group[group_of(ds, i, names)].push_back(i);
        for (auto& [gid, members] : by_group) {
            rng.shuffle(members);
            auto b = boundaries(members.size(), fractions);
            for (std::size_t j = 0; j < fractions.size(); ++j)
                part_indices[j].insert(part_indices[j].end(),
                                       members.begin() + static_cast<long>(b[j]),
                                       members.begin() + static_cast<long>(b[j + 1]));
        }
    }

    std::vector<LabeledDataset> parts;
    parts.reserve(fractions.size());
    for (auto& idx : part_indices) {
        std::sort(idx.begin(), idx.end());  // keep original order within each part
        parts.push_back(subset(ds, idx));
    }
    return parts;
}

}  // namespace dlab::data
