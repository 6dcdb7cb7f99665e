// Experiment harness CLI: structured config in, deterministic runs out.
//
// Exit codes: 0 success, 2 config error, 3 runtime/numerical error.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dlab/dataset_io.hpp"
#include "dlab/errors.hpp"
#include "dlab/experiment.hpp"
#include "dlab/mnist.hpp"

using namespace dlab;

namespace {

int cmd_run(const std::string& config_path) {
    std::string raw;
    cli::ExperimentConfig cfg = cli::parse_config_file(config_path, &raw);
    cli::RunRecord record = cli::run_experiment(cfg, raw);
    std::cout << "run " << record.config_hash << " -> " << record.root_dir << "\n";
    for (const auto& run : record.runs) {
        std::cout << "  seed " << run.seed;
        for (std::size_t s = 0; s < run.report.reports.size(); ++s) {
            const auto& r = run.report.reports[s];
            std::cout << "  [set " << s << "] overall " << r.overall << " unbiased "
                      << r.unbiased << " worst " << r.worst_group;
        }
        std::cout << "\n";
    }
    std::cout << record.aggregate.dump(2) << "\n";
    return 0;
}

int cmd_sweep_k(const std::string& config_path, const std::vector<int>& ks) {
    std::string raw;
    cli::ExperimentConfig cfg = cli::parse_config_file(config_path, &raw);
    const auto rows = cli::sweep_k(cfg, ks, raw);
    std::cout << "k,unbiased_mean,unbiased_std,worst_group_mean,worst_group_std\n";
    for (const auto& r : rows)
        std::cout << r.k << "," << r.mean_unbiased << "," << r.std_unbiased << ","
                  << r.mean_worst << "," << r.std_worst << "\n";
    return 0;
}

int cmd_ablation(const std::string& config_path) {
    std::string raw;
    cli::ExperimentConfig cfg = cli::parse_config_file(config_path, &raw);
    const auto rows = cli::ablation_grid(cfg, raw);
    std::cout << "mode,unbiased_mean,worst_group_mean\n";
    for (const auto& r : rows)
        std::cout << r.mode_name << "," << r.mean_unbiased << "," << r.mean_worst << "\n";
    return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& dataset_path,
                 const std::vector<std::string>& bias_args, std::size_t min_group_count,
                 const std::string& out_path) {
    std::vector<std::vector<std::string>> bias_sets;
    for (const auto& arg : bias_args) {
        std::vector<std::string> set;
        std::string token;
        for (char c : arg + ",") {
            if (c == ',') {
                if (!token.empty()) set.push_back(token);
                token.clear();
            } else {
                token += c;
            }
        }
        if (!set.empty()) bias_sets.push_back(std::move(set));
    }
    const auto report = cli::evaluate_snapshot(model_path, dataset_path, bias_sets,
                                               min_group_count);
    const auto j = cli::multi_report_to_json(report);
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << j.dump(2) << "\n";
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_make_data(const std::string& config_path, const std::string& out_path, bool test_split,
                  bool csv) {
    std::string raw;
    cli::ExperimentConfig cfg = cli::parse_config_file(config_path, &raw);
    const std::uint64_t seed = cfg.seeds.front();
    data::LabeledDataset ds = test_split ? cli::build_test_dataset(cfg, seed)
                                         : cli::build_train_dataset(cfg, seed);
    data::save_dataset(out_path, ds);
    if (csv) data::write_dataset_csv(out_path + ".csv", ds);
    std::cout << "wrote " << ds.size() << " examples (" << ds.feature_dim << " dims) to "
              << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Debiased-training laboratory: pseudo-attribute reweighting, ERM and "
                 "group DRO baselines, group-structured evaluation"};
    app.require_subcommand(1);

    std::string config_path, model_path, dataset_path, out_path;
    std::vector<int> ks = {1, 2, 4, 8, 16};
    std::vector<std::string> bias_args;
    std::size_t min_group_count = 10;
    bool test_split = false, csv = false;

    auto* run = app.add_subcommand("run", "Train and evaluate per the config");
    run->add_option("config", config_path, "experiment config JSON")->required();

    auto* sweep = app.add_subcommand("sweep-k", "Unbiased accuracy vs clusters per class");
    sweep->add_option("config", config_path, "experiment config JSON")->required();
    sweep->add_option("--k", ks, "K values to sweep");

    auto* ablation = app.add_subcommand("ablation", "Weighting-mode ablation grid");
    ablation->add_option("config", config_path, "experiment config JSON")->required();

    auto* evaluate = app.add_subcommand("evaluate", "Evaluate a model snapshot on a dataset");
    evaluate->add_option("model", model_path, "model snapshot (.bin)")->required();
    evaluate->add_option("dataset", dataset_path, "dataset snapshot (.dlds)")->required();
    evaluate->add_option("--bias", bias_args,
                         "bias set (comma-joined attribute names); repeatable");
    evaluate->add_option("--min-group-count", min_group_count,
                         "groups below this count are excluded from aggregates");
    evaluate->add_option("-o,--out", out_path, "also write the report JSON here");

    auto* make_data = app.add_subcommand("make-data", "Build and export a dataset snapshot");
    make_data->add_option("config", config_path, "experiment config JSON")->required();
    make_data->add_option("-o,--out", out_path, "output path (.dlds)")->required();
    make_data->add_flag("--test", test_split, "build the evaluation split instead of training");
    make_data->add_flag("--csv", csv, "also write a CSV copy");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path);
        if (sweep->parsed()) return cmd_sweep_k(config_path, ks);
        if (ablation->parsed()) return cmd_ablation(config_path);
        if (evaluate->parsed()) {
            if (bias_args.empty()) bias_args = {"bias"};
            return cmd_evaluate(model_path, dataset_path, bias_args, min_group_count, out_path);
        }
        if (make_data->parsed()) return cmd_make_data(config_path, out_path, test_split, csv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
