#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dlab/data.hpp"
#include "dlab/debias.hpp"
#include "dlab/eval.hpp"

#include "json.hpp"

namespace dlab::cli {

struct MethodConfig {
    std::string name = "ours";  // ours | erm | group_dro
    double eta_q = 0.01;        // group_dro step size for q
};

struct EvalSettings {
    std::vector<std::vector<std::string>> bias_sets;  // defaults to the primary bias attribute
    std::size_t min_group_count = 10;
    std::size_t test_class_size = 200;  // gaussian test split, per class
    double test_bias_ratio = 0.0;       // 0 means 1/C (independent bias)
};

// Fully validated experiment description. Unknown config keys are rejected
// at parse time with the offending field path.
struct ExperimentConfig {
    data::DatasetSpec dataset;
    MethodConfig method;
    debias::TrainConfig train;
    EvalSettings eval;
    std::string output_dir = "runs";
    std::vector<std::uint64_t> seeds = {1};
};

ExperimentConfig parse_config(const nlohmann::json& j);
// Reads the file, returns the config; optionally hands back the raw bytes
// (the unit of config hashing).
ExperimentConfig parse_config_file(const std::string& path, std::string* raw_bytes = nullptr);

std::uint64_t config_hash(const std::string& raw_bytes);  // FNV-1a 64
std::string config_hash_hex(const std::string& raw_bytes);

// Dataset construction as the pipeline performs it: the spec's seed is
// replaced by a stream derived from the sub-run seed.
data::LabeledDataset build_train_dataset(const ExperimentConfig& cfg, std::uint64_t run_seed);
data::LabeledDataset build_test_dataset(const ExperimentConfig& cfg, std::uint64_t run_seed);

struct SeedRun {
    std::uint64_t seed = 0;
    std::string dir;
    eval::MultiBiasReport report;
};

struct RunRecord {
    std::string config_hash;
    std::string root_dir;
    std::vector<SeedRun> runs;
    nlohmann::ordered_json aggregate;
};

/// Full pipeline: dataset build -> (base train -> cluster ->) target train
/// -> evaluate, one sub-run per seed, with all artifacts written under
/// output_dir/<config hash>/.
RunRecord run_experiment(const ExperimentConfig& cfg, const std::string& raw_config);

struct KSweepRow {
    int k = 0;
    double mean_unbiased = 0.0;
    double std_unbiased = 0.0;
    double mean_worst = 0.0;
    double std_worst = 0.0;
};

/// Reuses one base model (and its features) per seed; refits clusters and
/// retrains the target per K. Writes CSV and an SVG line plot.
std::vector<KSweepRow> sweep_k(const ExperimentConfig& cfg, std::vector<int> k_values,
                               const std::string& raw_config);

struct AblationRow {
    debias::WeightingMode mode;
    std::string mode_name;
    double mean_unbiased = 0.0;
    double mean_worst = 0.0;
};

/// Table 5-style grid: Uniform / LossOnly / ScaleOnly / ScaleAndLoss with a
/// shared base model and clusters per seed.
std::vector<AblationRow> ablation_grid(const ExperimentConfig& cfg,
                                       const std::string& raw_config);

/// Evaluation only, against stored snapshots.
eval::MultiBiasReport evaluate_snapshot(const std::string& model_path,
                                        const std::string& dataset_path,
                                        const std::vector<std::vector<std::string>>& bias_sets,
                                        std::size_t min_group_count = 10);

const char* weighting_mode_name(debias::WeightingMode mode);

nlohmann::ordered_json multi_report_to_json(const eval::MultiBiasReport& report);

}  // namespace dlab::cli
