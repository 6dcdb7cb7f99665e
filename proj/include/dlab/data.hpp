#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dlab/matrix.hpp"

namespace dlab::data {

struct BiasAttribute {
    std::string name;
    int cardinality = 0;
};

// Names and cardinalities of the hidden bias attributes, plus the target
// class count. Shared by every example of a dataset.
struct AttributeSchema {
    int num_classes = 0;
    std::vector<BiasAttribute> bias_attrs;

    // Index into bias_attrs; throws SchemaError for unknown names.
    std::size_t bias_index(const std::string& name) const;
    bool has_bias(const std::string& name) const;
};

// A (target value, ordered bias values) cell. Order of bias values follows
// the attribute list the caller supplied, by contract.
struct GroupId {
    int target = 0;
    std::vector<int> bias_values;

    auto operator<=>(const GroupId&) const = default;
};

// One example, materialized. Training code never sees bias_labels; it works
// through TrainView, which exposes features and targets only.
struct Example {
    std::vector<float> features;
    int target = 0;
    std::map<std::string, int> bias_labels;
};

// Optional additional planted bias for the Gaussian generator (used by the
// multi-bias and unspecified-bias evaluation protocols).
struct ExtraBiasSpec {
    std::string name;
    int cardinality = 2;
    double aligned_ratio = 0.95;
    double separation = 2.0;
};

enum class DatasetKind { GaussianSynthetic, ColoredMnist };

struct DatasetSpec {
    DatasetKind kind = DatasetKind::GaussianSynthetic;
    int num_classes = 10;
    double bias_aligned_ratio = 0.95;
    std::size_t feature_dim = 20;
    std::vector<std::size_t> class_sizes;  // one entry per class
    std::uint64_t seed = 0;

    // gaussian_synthetic: between-cluster separations and within noise.
    // The bias separation exceeds the target separation so a naive model
    // prefers the bias shortcut.
    double target_separation = 2.0;
    double bias_separation = 4.0;
    double noise_sigma = 1.0;
    std::vector<ExtraBiasSpec> extra_biases;

    // colored_mnist
    std::vector<std::array<std::uint8_t, 3>> palette;
    std::string images_path;
    std::string labels_path;
    std::string test_images_path;
    std::string test_labels_path;
};

class LabeledDataset {
public:
    AttributeSchema schema;
    std::size_t feature_dim = 0;
    std::vector<float> features;                 // N x D, row-major
    std::vector<int> targets;                    // N
    std::vector<std::vector<int>> bias_labels;   // [attr][N], parallel to schema.bias_attrs
    std::string provenance;                      // spec JSON or source file paths

    std::size_t size() const { return targets.size(); }
    std::span<const float> features_of(std::size_t i) const {
        return {features.data() + i * feature_dim, feature_dim};
    }
    int target(std::size_t i) const { return targets[i]; }
    int bias_value(std::size_t i, const std::string& name) const;

    Example example(std::size_t i) const;
    void push_back(const Example& e);  // schema must already be set

    // Sanity: parallel arrays consistent, labels within schema ranges.
    void validate() const;
};

/// Bias-stripped view handed to trainers: features and target labels only.
/// Bias labels are unreachable through this type by construction.
class TrainView {
public:
    explicit TrainView(const LabeledDataset& ds)
        : feature_dim_(ds.feature_dim), num_classes_(ds.schema.num_classes),
          features_(ds.features.data()), targets_(ds.targets.data()), size_(ds.size()) {}

    std::size_t size() const { return size_; }
    std::size_t feature_dim() const { return feature_dim_; }
    int num_classes() const { return num_classes_; }
    std::span<const float> features_of(std::size_t i) const {
        return {features_ + i * feature_dim_, feature_dim_};
    }
    int target(std::size_t i) const { return targets_[i]; }

    // Gather rows into a double matrix for the math kernels.
    Matrix gather(std::span<const std::size_t> indices) const;
    Matrix gather_all() const;

private:
    std::size_t feature_dim_;
    int num_classes_;
    const float* features_;
    const int* targets_;
    std::size_t size_;
};

/// Synthetic biased Gaussians: the mean of each example encodes a target
/// component and a (larger) bias component; with probability rho the bias
/// value equals the class-aligned value, otherwise a uniformly random other
/// value.
LabeledDataset generate_biased_gaussians(const DatasetSpec& spec);

GroupId group_of(const Example& e, std::span<const std::string> bias_attr_names);
GroupId group_of(const LabeledDataset& ds, std::size_t index,
                 std::span<const std::string> bias_attr_names);

// All group ids over the product of the named attributes' value ranges, in
// lexicographic order.
std::vector<GroupId> enumerate_groups(const AttributeSchema& schema,
                                      std::span<const std::string> bias_attr_names);

enum class Stratify { None, Group };

/// Disjoint cover of the dataset by the given fractions (must sum to 1
/// within 1e-9). With Stratify::Group, each (target, all-bias) group's
/// proportion is preserved within rounding.
std::vector<LabeledDataset> split(const LabeledDataset& ds, std::span<const double> fractions,
                                  std::uint64_t seed, Stratify stratify = Stratify::None);

}  // namespace dlab::data
