#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "dlab/clustering.hpp"
#include "dlab/data.hpp"
#include "dlab/nn.hpp"

#include "json.hpp"

namespace dlab::eval {

struct GroupCell {
    data::GroupId id;
    std::size_t count = 0;
    std::size_t correct = 0;

    double accuracy() const {
        return count ? static_cast<double>(correct) / static_cast<double>(count) : 0.0;
    }
};

// Per-group accuracy table for one (model, split, bias-attribute set). Cells
// cover the full product space; groups below min_group_count are recorded
// but excluded from aggregates.
struct GroupMetrics {
    std::vector<GroupCell> cells;
    std::vector<std::string> bias_attrs;
    std::string split_name;
    std::size_t total = 0;
    std::size_t total_correct = 0;
    std::size_t min_group_count = 10;

    bool included(const GroupCell& c) const { return c.count >= std::max<std::size_t>(1, min_group_count); }
};

struct EvalOptions {
    std::size_t min_group_count = 10;
    std::string split_name = "test";
};

/// Argmax predictions (ties to the lowest class index), counted per
/// (target, bias values) group. Throws SchemaError for unknown attributes.
GroupMetrics group_accuracies(const nn::DenseNet& net, const data::LabeledDataset& ds,
                              std::span<const std::string> bias_attrs,
                              const EvalOptions& options = {});

/// Unweighted mean of per-group accuracies over included groups.
double unbiased_accuracy(const GroupMetrics& metrics);
/// Minimum per-group accuracy over included groups.
double worst_group_accuracy(const GroupMetrics& metrics);
double overall_accuracy(const GroupMetrics& metrics);

struct EvalReport {
    double overall = 0.0;
    double unbiased = 0.0;
    double worst_group = 0.0;
    double bias_gap_points = 0.0;  // (overall - unbiased) * 100
    bool bias_flagged = false;     // gap strictly greater than 5 points
    GroupMetrics metrics;
};

EvalReport make_report(GroupMetrics metrics);

/// overall - unbiased, in percentage points; > 5.0 marks the pair
/// algorithmically biased.
double bias_severity(const nn::DenseNet& net, const data::LabeledDataset& ds,
                     std::span<const std::string> bias_attrs, const EvalOptions& options = {});

struct MultiBiasReport {
    std::vector<EvalReport> reports;  // one per bias set
    double mean_unbiased = 0.0;
    double std_unbiased = 0.0;
    double mean_worst = 0.0;
    double std_worst = 0.0;
};

/// One report per bias set for a fixed model (no per-set retraining), plus
/// mean and sample standard deviation across sets.
MultiBiasReport multi_bias_report(const nn::DenseNet& net, const data::LabeledDataset& ds,
                                  const std::vector<std::vector<std::string>>& bias_sets,
                                  const EvalOptions& options = {});

struct Projection {
    Matrix coords;  // N x 2
    std::array<double, 2> explained_variance{0.0, 0.0};
};

/// Mean-centered projection onto the two leading principal directions,
/// deterministic up to the data (sign fixed by convention).
Projection project_embeddings(const Matrix& features);

// Serialization. The JSON report is byte-stable for identical inputs.
nlohmann::ordered_json report_to_json(const EvalReport& report);
void write_report_json(const std::string& path, const EvalReport& report);
void write_group_csv(const std::string& path, const GroupMetrics& metrics);
void write_projection_csv(const std::string& path, const Projection& projection,
                          std::span<const int> targets, const data::LabeledDataset& ds,
                          std::span<const cluster::ClusterId> cluster_ids);

}  // namespace dlab::eval
