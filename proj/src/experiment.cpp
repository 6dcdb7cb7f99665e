#include "dlab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "dlab/baselines.hpp"
#include "dlab/dataset_io.hpp"
#include "dlab/errors.hpp"
#include "dlab/mnist.hpp"
#include "dlab/model_io.hpp"
#include "dlab/rng.hpp"
#include "dlab/svg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace dlab::cli {

namespace {

// Stream tags: one master seed per sub-run derives data, test data,
// training (init + shuffle), and clustering streams independently.
constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kTestStream = 2;
constexpr std::uint64_t kTrainStream = 3;
constexpr std::uint64_t kClusterStream = 4;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ConfigError(path + ": " + what);
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) fail(path, "expected an object");
    for (const auto& [key, unused] : obj.items()) {
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* a) { return key == a; }) == allowed.end())
            fail(path + "." + key, "unknown key");
    }
}

double get_number(const json& obj, const std::string& path, const char* key, double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number()) fail(path + "." + key, "expected a number");
    return obj[key].get<double>();
}

long get_integer(const json& obj, const std::string& path, const char* key, long fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number_integer()) fail(path + "." + key, "expected an integer");
    return obj[key].get<long>();
}

std::string get_string(const json& obj, const std::string& path, const char* key,
                       const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_string()) fail(path + "." + key, "expected a string");
    return obj[key].get<std::string>();
}

data::DatasetSpec parse_dataset(const json& j) {
    const std::string path = "dataset";
    check_keys(j, path,
               {"kind", "num_classes", "bias_aligned_ratio", "feature_dim", "class_size",
                "class_sizes", "seed", "target_separation", "bias_separation", "noise_sigma",
                "extra_biases", "palette", "images", "labels", "test_images", "test_labels"});

    data::DatasetSpec spec;
    const std::string kind = get_string(j, path, "kind", "gaussian_synthetic");
    if (kind == "gaussian_synthetic") spec.kind = data::DatasetKind::GaussianSynthetic;
    else if (kind == "colored_mnist") spec.kind = data::DatasetKind::ColoredMnist;
    else fail(path + ".kind", "must be gaussian_synthetic or colored_mnist");

    spec.num_classes = static_cast<int>(get_integer(j, path, "num_classes", 10));
    if (spec.num_classes < 2) fail(path + ".num_classes", "must be >= 2");
    spec.bias_aligned_ratio = get_number(j, path, "bias_aligned_ratio", 0.95);
    if (!(spec.bias_aligned_ratio > 0.0 && spec.bias_aligned_ratio <= 1.0))
        fail(path + ".bias_aligned_ratio", "must be in (0, 1]");
    spec.feature_dim =
        static_cast<std::size_t>(get_integer(j, path, "feature_dim",
                                             2 * static_cast<long>(spec.num_classes)));
    spec.seed = static_cast<std::uint64_t>(get_integer(j, path, "seed", 0));
    spec.target_separation = get_number(j, path, "target_separation", 2.0);
    spec.bias_separation = get_number(j, path, "bias_separation", 4.0);
    spec.noise_sigma = get_number(j, path, "noise_sigma", 1.0);

    if (j.contains("class_sizes")) {
        if (j.contains("class_size")) fail(path, "give class_size or class_sizes, not both");
        if (!j["class_sizes"].is_array()) fail(path + ".class_sizes", "expected an array");
        for (const auto& v : j["class_sizes"])
            spec.class_sizes.push_back(static_cast<std::size_t>(v.get<long>()));
    } else {
        const long per = get_integer(j, path, "class_size", 1000);
        if (per < 1) fail(path + ".class_size", "must be >= 1");
        spec.class_sizes.assign(static_cast<std::size_t>(spec.num_classes),
                                static_cast<std::size_t>(per));
    }
    if (spec.class_sizes.size() != static_cast<std::size_t>(spec.num_classes))
        fail(path + ".class_sizes", "must have one entry per class");

    if (j.contains("extra_biases")) {
        if (!j["extra_biases"].is_array()) fail(path + ".extra_biases", "expected an array");
        for (std::size_t i = 0; i < j["extra_biases"].size(); ++i) {
            const json& e = j["extra_biases"][i];
            const std::string epath = path + ".extra_biases[" + std::to_string(i) + "]";
            check_keys(e, epath, {"name", "cardinality", "aligned_ratio", "separation"});
            data::ExtraBiasSpec eb;
            eb.name = get_string(e, epath, "name", "");
            if (eb.name.empty()) fail(epath + ".name", "required");
            eb.cardinality = static_cast<int>(get_integer(e, epath, "cardinality", 2));
            eb.aligned_ratio = get_number(e, epath, "aligned_ratio", 0.95);
            eb.separation = get_number(e, epath, "separation", 2.0);
            spec.extra_biases.push_back(std::move(eb));
        }
    }

    if (j.contains("palette")) {
        if (!j["palette"].is_array()) fail(path + ".palette", "expected an array of [r,g,b]");
        for (const auto& c : j["palette"]) {
            if (!c.is_array() || c.size() != 3) fail(path + ".palette", "entries must be [r,g,b]");
            spec.palette.push_back({c[0].get<std::uint8_t>(), c[1].get<std::uint8_t>(),
                                    c[2].get<std::uint8_t>()});
        }
    }
    spec.images_path = get_string(j, path, "images", "");
    spec.labels_path = get_string(j, path, "labels", "");
    spec.test_images_path = get_string(j, path, "test_images", "");
    spec.test_labels_path = get_string(j, path, "test_labels", "");
    if (spec.kind == data::DatasetKind::ColoredMnist &&
        (spec.images_path.empty() || spec.labels_path.empty()))
        fail(path, "colored_mnist requires images and labels paths");
    return spec;
}

debias::TrainConfig parse_train(const json& j) {
    const std::string path = "train";
    check_keys(j, path,
               {"epochs", "batch_size", "learning_rate", "schedule", "hidden",
                "clusters_per_class", "momentum", "weighting", "weight_update", "weight_decay"});
    debias::TrainConfig cfg;
    cfg.epochs = static_cast<int>(get_integer(j, path, "epochs", 100));
    cfg.batch_size = static_cast<int>(get_integer(j, path, "batch_size", 128));
    cfg.learning_rate = get_number(j, path, "learning_rate", 1e-3);
    const std::string sched = get_string(j, path, "schedule", "cosine");
    if (sched == "cosine") cfg.schedule = nn::ScheduleKind::Cosine;
    else if (sched == "constant") cfg.schedule = nn::ScheduleKind::Constant;
    else fail(path + ".schedule", "must be cosine or constant");
    if (j.contains("hidden")) {
        if (!j["hidden"].is_array()) fail(path + ".hidden", "expected an array of widths");
        cfg.hidden.clear();
        for (const auto& v : j["hidden"]) {
            const long w = v.get<long>();
            if (w < 1) fail(path + ".hidden", "widths must be >= 1");
            cfg.hidden.push_back(static_cast<std::size_t>(w));
        }
        if (cfg.hidden.empty()) fail(path + ".hidden", "at least one hidden layer required");
    }
    cfg.clusters_per_class = static_cast<int>(get_integer(j, path, "clusters_per_class", 8));
    cfg.momentum = get_number(j, path, "momentum", 0.3);
    const std::string mode = get_string(j, path, "weighting", "scale_and_loss");
    if (mode == "scale_and_loss") cfg.mode = debias::WeightingMode::ScaleAndLoss;
    else if (mode == "loss_only") cfg.mode = debias::WeightingMode::LossOnly;
    else if (mode == "scale_only") cfg.mode = debias::WeightingMode::ScaleOnly;
    else if (mode == "uniform") cfg.mode = debias::WeightingMode::Uniform;
    else fail(path + ".weighting", "must be scale_and_loss, loss_only, scale_only or uniform");
    const std::string policy = get_string(j, path, "weight_update", "batch_partial");
    if (policy == "batch_partial") cfg.update_policy = debias::WeightUpdatePolicy::BatchPartial;
    else if (policy == "full_pass_every_epoch")
        cfg.update_policy = debias::WeightUpdatePolicy::FullPassEveryEpoch;
    else if (policy == "full_pass_every_step")
        cfg.update_policy = debias::WeightUpdatePolicy::FullPassEveryStep;
    else
        fail(path + ".weight_update",
             "must be batch_partial, full_pass_every_epoch or full_pass_every_step");
    cfg.weight_decay = get_number(j, path, "weight_decay", 0.0);
    try {
        cfg.validate();
    } catch (const Error& e) {
        fail(path, e.what());
    }
    return cfg;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
    check_keys(j, "config", {"dataset", "method", "train", "eval", "output_dir", "seeds"});
    ExperimentConfig cfg;
    if (!j.contains("dataset")) fail("config", "dataset section is required");
    cfg.dataset = parse_dataset(j["dataset"]);

    if (j.contains("method")) {
        check_keys(j["method"], "method", {"name", "eta_q"});
        cfg.method.name = get_string(j["method"], "method", "name", "ours");
        if (cfg.method.name != "ours" && cfg.method.name != "erm" &&
            cfg.method.name != "group_dro")
            fail("method.name", "must be ours, erm or group_dro");
        cfg.method.eta_q = get_number(j["method"], "method", "eta_q", 0.01);
    }

    if (j.contains("train")) cfg.train = parse_train(j["train"]);

    if (j.contains("eval")) {
        const json& e = j["eval"];
        check_keys(e, "eval", {"bias_sets", "min_group_count", "test_class_size",
                               "test_bias_ratio"});
        if (e.contains("bias_sets")) {
            if (!e["bias_sets"].is_array()) fail("eval.bias_sets", "expected an array of arrays");
            for (const auto& set : e["bias_sets"]) {
                if (!set.is_array() || set.empty())
                    fail("eval.bias_sets", "each bias set must be a non-empty array");
                std::vector<std::string> names;
                for (const auto& n : set) names.push_back(n.get<std::string>());
                cfg.eval.bias_sets.push_back(std::move(names));
            }
        }
        cfg.eval.min_group_count =
            static_cast<std::size_t>(get_integer(e, "eval", "min_group_count", 10));
        cfg.eval.test_class_size =
            static_cast<std::size_t>(get_integer(e, "eval", "test_class_size", 200));
        cfg.eval.test_bias_ratio = get_number(e, "eval", "test_bias_ratio", 0.0);
    }
    if (cfg.eval.bias_sets.empty()) {
        const std::string primary =
            cfg.dataset.kind == data::DatasetKind::ColoredMnist ? "color" : "bias";
        cfg.eval.bias_sets.push_back({primary});
    }

    cfg.output_dir = get_string(j, "config", "output_dir", "runs");
    if (j.contains("seeds")) {
        if (!j["seeds"].is_array() || j["seeds"].empty())
            fail("seeds", "expected a non-empty array of integers");
        cfg.seeds.clear();
        for (const auto& s : j["seeds"])
            cfg.seeds.push_back(static_cast<std::uint64_t>(s.get<long>()));
    }
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path, std::string* raw_bytes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path + ": cannot open config file");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string raw = buf.str();
    if (raw_bytes) *raw_bytes = raw;
    json j;
    try {
        j = json::parse(raw);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_config(j);
}

std::uint64_t config_hash(const std::string& raw_bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a 64
    for (unsigned char c : raw_bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string config_hash_hex(const std::string& raw_bytes) {
    static const char* digits = "0123456789abcdef";
    std::uint64_t h = config_hash(raw_bytes);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xF];
        h >>= 4;
    }
    return out;
}

namespace {

data::LabeledDataset build_gaussian(const data::DatasetSpec& spec, std::uint64_t seed,
                                    std::size_t per_class, double ratio) {
    data::DatasetSpec s = spec;
    s.seed = seed;
    if (per_class > 0) s.class_sizes.assign(static_cast<std::size_t>(s.num_classes), per_class);
    if (ratio > 0.0) s.bias_aligned_ratio = ratio;
    data::LabeledDataset ds = data::generate_biased_gaussians(s);
    ordered_json prov;
    prov["kind"] = "gaussian_synthetic";
    prov["seed"] = s.seed;
    prov["bias_aligned_ratio"] = s.bias_aligned_ratio;
    prov["class_size"] = s.class_sizes.front();
    ds.provenance = prov.dump();
    return ds;
}

data::LabeledDataset build_mnist(const data::DatasetSpec& spec, const std::string& images,
                                 const std::string& labels, std::uint64_t seed, double ratio) {
    auto [raw, y] = data::load_idx(images, labels);
    const data::Palette& palette = spec.palette.empty() ? data::default_palette() : spec.palette;
    data::LabeledDataset ds = data::colorize_mnist(raw, y, ratio, palette, seed);
    ordered_json prov;
    prov["kind"] = "colored_mnist";
    prov["images"] = images;
    prov["labels"] = labels;
    prov["seed"] = seed;
    prov["bias_aligned_ratio"] = ratio;
    ds.provenance = prov.dump();
    return ds;
}

}  // namespace

data::LabeledDataset build_train_dataset(const ExperimentConfig& cfg, std::uint64_t run_seed) {
    const std::uint64_t seed = derive_seed(run_seed, kDataStream);
    if (cfg.dataset.kind == data::DatasetKind::GaussianSynthetic)
        return build_gaussian(cfg.dataset, seed, 0, 0.0);
    return build_mnist(cfg.dataset, cfg.dataset.images_path, cfg.dataset.labels_path, seed,
                       cfg.dataset.bias_aligned_ratio);
}

data::LabeledDataset build_test_dataset(const ExperimentConfig& cfg, std::uint64_t run_seed) {
    const std::uint64_t seed = derive_seed(run_seed, kTestStream);
    double ratio = cfg.eval.test_bias_ratio;
    if (ratio <= 0.0) ratio = 1.0 / static_cast<double>(cfg.dataset.num_classes);
    if (cfg.dataset.kind == data::DatasetKind::GaussianSynthetic)
        return build_gaussian(cfg.dataset, seed, cfg.eval.test_class_size, ratio);
    if (cfg.dataset.test_images_path.empty() || cfg.dataset.test_labels_path.empty())
        throw ConfigError("dataset: colored_mnist evaluation requires test_images/test_labels");
    return build_mnist(cfg.dataset, cfg.dataset.test_images_path, cfg.dataset.test_labels_path,
                       seed, ratio);
}

const char* weighting_mode_name(debias::WeightingMode mode) {
    switch (mode) {
        case debias::WeightingMode::ScaleAndLoss: return "scale_and_loss";
        case debias::WeightingMode::LossOnly: return "loss_only";
        case debias::WeightingMode::ScaleOnly: return "scale_only";
        case debias::WeightingMode::Uniform: return "uniform";
    }
    return "?";
}

ordered_json multi_report_to_json(const eval::MultiBiasReport& report) {
    ordered_json j;
    ordered_json reports = ordered_json::array();
    for (const auto& r : report.reports) reports.push_back(eval::report_to_json(r));
    j["reports"] = std::move(reports);
    ordered_json agg;
    agg["mean_unbiased"] = report.mean_unbiased;
    agg["std_unbiased"] = report.std_unbiased;
    agg["mean_worst_group"] = report.mean_worst;
    agg["std_worst_group"] = report.std_worst;
    j["aggregate_over_bias_sets"] = std::move(agg);
    return j;
}

namespace {

debias::EpochLogger jsonl_logger(std::ofstream& out) {
    return [&out](const debias::EpochLog& log) {
        ordered_json j;
        j["epoch"] = log.epoch;
        j["step"] = log.step;
        j["lr"] = log.lr;
        j["mean_loss"] = log.mean_loss;
        j["min_omega"] = log.min_omega;
        j["max_omega"] = log.max_omega;
        j["batch_weight_entropy"] = log.batch_weight_entropy;
        out << j.dump() << "\n";
    };
}

// Features of the whole training set under the base model, chunked.
Matrix features_for(const nn::DenseNet& net, const data::TrainView& view) {
    const std::size_t h = net.last_hidden_width();
    Matrix feats(view.size(), h);
    constexpr std::size_t kChunk = 512;
    std::vector<std::size_t> idx;
    for (std::size_t begin = 0; begin < view.size(); begin += kChunk) {
        const std::size_t end = std::min(view.size(), begin + kChunk);
        idx.resize(end - begin);
        std::iota(idx.begin(), idx.end(), begin);
        const Matrix x = view.gather(idx);
        const Matrix f = nn::extract_features(net, x);
        for (std::size_t i = 0; i < f.rows(); ++i)
            std::copy(f.row(i), f.row(i) + h, feats.row(begin + i));
    }
    return feats;
}

struct TrainedModel {
    nn::DenseNet net;
    nn::DenseNet base;               // ours only
    cluster::ClusterModel clusters;  // ours only
    bool has_base = false;
};

TrainedModel train_for_method(const ExperimentConfig& cfg, const data::LabeledDataset& train_ds,
                              std::uint64_t run_seed, const fs::path& dir) {
    data::TrainView view(train_ds);
    debias::TrainConfig tcfg = cfg.train;
    tcfg.seed = derive_seed(run_seed, kTrainStream);

    TrainedModel out;
    if (cfg.method.name == "erm") {
        std::ofstream log(dir / "train_log.jsonl");
        out.net = baselines::train_erm(view, tcfg, jsonl_logger(log));
    } else if (cfg.method.name == "group_dro") {
        const auto& bias_set = cfg.eval.bias_sets.front();
        std::vector<data::GroupId> groups;
        groups.reserve(train_ds.size());
        for (std::size_t i = 0; i < train_ds.size(); ++i)
            groups.push_back(data::group_of(train_ds, i, bias_set));
        std::ofstream log(dir / "train_log.jsonl");
        std::ofstream qlog(dir / "q_history.jsonl");
        baselines::QSnapshotLogger qsnap = [&qlog](int epoch, const baselines::GroupDroState& s) {
            ordered_json j;
            j["epoch"] = epoch;
            j["q"] = s.q;
            qlog << j.dump() << "\n";
        };
        out.net = baselines::train_group_dro(view, groups, tcfg, {cfg.method.eta_q},
                                             jsonl_logger(log), qsnap);
    } else {  // ours
        {
            std::ofstream base_log(dir / "base_train_log.jsonl");
            out.base = debias::train_base(view, tcfg, jsonl_logger(base_log));
        }
        const Matrix feats = features_for(out.base, view);
        out.clusters = cluster::fit_pseudo_attributes(
            feats, std::span<const int>(train_ds.targets), train_ds.schema.num_classes,
            tcfg.clusters_per_class, derive_seed(run_seed, kClusterStream));
        out.has_base = true;

        // projection export of the base-model embedding (the observation
        // behind the method), tagged with labels, bias values and clusters
        const eval::Projection proj = eval::project_embeddings(feats);
        eval::write_projection_csv((dir / "projection.csv").string(), proj,
                                   train_ds.targets, train_ds, out.clusters.assignments());

        std::ofstream log(dir / "train_log.jsonl");
        out.net = debias::train_debiased(view, out.base, out.clusters, tcfg, jsonl_logger(log));
    }
    return out;
}

void append_stats(ordered_json& agg, const std::string& key, const std::vector<double>& values) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double sd = 0.0;
    if (values.size() > 1) {
        for (double v : values) sd += (v - mean) * (v - mean);
        sd = std::sqrt(sd / static_cast<double>(values.size() - 1));
    }
    agg[key + "_mean"] = mean;
    agg[key + "_std"] = sd;
    agg[key + "_per_seed"] = values;
}

}  // namespace

RunRecord run_experiment(const ExperimentConfig& cfg, const std::string& raw_config) {
    RunRecord record;
    record.config_hash = config_hash_hex(raw_config);
    const fs::path root = fs::path(cfg.output_dir) / record.config_hash;
    fs::create_directories(root);
    record.root_dir = root.string();
    {
        std::ofstream copy(root / "config.json", std::ios::binary);
        copy << raw_config;
    }

    for (std::uint64_t seed : cfg.seeds) {
        const fs::path dir = root / ("seed-" + std::to_string(seed));
        fs::create_directories(dir);

        const auto t0 = std::chrono::steady_clock::now();
        data::LabeledDataset train_ds = build_train_dataset(cfg, seed);
        data::LabeledDataset test_ds = build_test_dataset(cfg, seed);

        TrainedModel trained = train_for_method(cfg, train_ds, seed, dir);

        eval::EvalOptions opts;
        opts.min_group_count = cfg.eval.min_group_count;
        eval::MultiBiasReport report =
            eval::multi_bias_report(trained.net, test_ds, cfg.eval.bias_sets, opts);

        const std::uint64_t hash = config_hash(raw_config);
        nn::save_model((dir / "model.bin").string(), trained.net, hash);
        if (trained.has_base) {
            nn::save_model((dir / "base_model.bin").string(), trained.base, hash);
            cluster::save_cluster_model((dir / "clusters.bin").string(), trained.clusters, hash);
        }
        for (std::size_t s = 0; s < report.reports.size(); ++s)
            eval::write_group_csv((dir / ("groups-" + std::to_string(s) + ".csv")).string(),
                                  report.reports[s].metrics);

        ordered_json rj;
        rj["seed"] = seed;
        rj["method"] = cfg.method.name;
        rj["config_hash"] = record.config_hash;
        rj.update(multi_report_to_json(report));
        {
            std::ofstream out(dir / "report.json");
            out << rj.dump(2) << "\n";
        }
        const auto t1 = std::chrono::steady_clock::now();
        {
            ordered_json meta;
            meta["seed"] = seed;
            meta["wall_clock_seconds"] = std::chrono::duration<double>(t1 - t0).count();
            meta["artifacts"] = {"report.json", "model.bin", "train_log.jsonl"};
            std::ofstream out(dir / "run_meta.json");
            out << meta.dump(2) << "\n";
        }

        record.runs.push_back({seed, dir.string(), std::move(report)});
    }

    // aggregate over seeds, per bias set
    ordered_json agg;
    agg["config_hash"] = record.config_hash;
    agg["method"] = cfg.method.name;
    agg["seeds"] = cfg.seeds;
    ordered_json sets = ordered_json::array();
    for (std::size_t s = 0; s < cfg.eval.bias_sets.size(); ++s) {
        ordered_json set_json;
        set_json["bias_attributes"] = cfg.eval.bias_sets[s];
        std::vector<double> overall, unbiased, worst;
        for (const auto& run : record.runs) {
            overall.push_back(run.report.reports[s].overall);
            unbiased.push_back(run.report.reports[s].unbiased);
            worst.push_back(run.report.reports[s].worst_group);
        }
        append_stats(set_json, "overall", overall);
        append_stats(set_json, "unbiased", unbiased);
        append_stats(set_json, "worst_group", worst);
        sets.push_back(std::move(set_json));
    }
    agg["bias_sets"] = std::move(sets);
    record.aggregate = agg;
    {
        std::ofstream out(root / "aggregate.json");
        out << agg.dump(2) << "\n";
    }
    return record;
}

std::vector<KSweepRow> sweep_k(const ExperimentConfig& cfg, std::vector<int> k_values,
                               const std::string& raw_config) {
    if (cfg.method.name != "ours")
        throw ConfigError("sweep_k: method must be ours");
    if (k_values.empty()) throw SpecError("sweep_k: no K values");
    for (int k : k_values)
        if (k < 1) throw SpecError("sweep_k: K must be >= 1");

    const fs::path root = fs::path(cfg.output_dir) / (config_hash_hex(raw_config) + "-sweepk");
    fs::create_directories(root);

    std::map<int, std::vector<double>> unbiased_by_k, worst_by_k;
    for (std::uint64_t seed : cfg.seeds) {
        data::LabeledDataset train_ds = build_train_dataset(cfg, seed);
        data::LabeledDataset test_ds = build_test_dataset(cfg, seed);
        data::TrainView view(train_ds);

        debias::TrainConfig tcfg = cfg.train;
        tcfg.seed = derive_seed(seed, kTrainStream);
        const nn::DenseNet base = debias::train_base(view, tcfg);
        const Matrix feats = features_for(base, view);

        for (int k : k_values) {
            debias::TrainConfig kcfg = tcfg;
            kcfg.clusters_per_class = k;
            const cluster::ClusterModel clusters = cluster::fit_pseudo_attributes(
                feats, std::span<const int>(train_ds.targets), train_ds.schema.num_classes, k,
                derive_seed(derive_seed(seed, kClusterStream), static_cast<std::uint64_t>(k)));
            const nn::DenseNet net = debias::train_debiased(view, base, clusters, kcfg);
            eval::EvalOptions opts;
            opts.min_group_count = cfg.eval.min_group_count;
            const eval::EvalReport report = eval::make_report(
                eval::group_accuracies(net, test_ds, cfg.eval.bias_sets.front(), opts));
            unbiased_by_k[k].push_back(report.unbiased);
            worst_by_k[k].push_back(report.worst_group);
        }
    }

    std::vector<KSweepRow> rows;
    for (int k : k_values) {
        KSweepRow row;
        row.k = k;
        const auto& u = unbiased_by_k[k];
        const auto& w = worst_by_k[k];
        const double n = static_cast<double>(u.size());
        for (double v : u) row.mean_unbiased += v;
        row.mean_unbiased /= n;
        for (double v : w) row.mean_worst += v;
        row.mean_worst /= n;
        if (u.size() > 1) {
            double su = 0.0, sw = 0.0;
            for (double v : u) su += (v - row.mean_unbiased) * (v - row.mean_unbiased);
            for (double v : w) sw += (v - row.mean_worst) * (v - row.mean_worst);
            row.std_unbiased = std::sqrt(su / (n - 1.0));
            row.std_worst = std::sqrt(sw / (n - 1.0));
        }
        rows.push_back(row);
    }

    {
        std::ofstream csv(root / "k_sweep.csv");
        csv << "k,unbiased_mean,unbiased_std,worst_group_mean,worst_group_std\n";
        for (const auto& r : rows)
            csv << r.k << "," << r.mean_unbiased << "," << r.std_unbiased << "," << r.mean_worst
                << "," << r.std_worst << "\n";
    }
    PlotSeries unb{"unbiased", {}, {}}, wst{"worst-group", {}, {}};
    for (const auto& r : rows) {
        unb.x.push_back(r.k);
        unb.y.push_back(r.mean_unbiased);
        wst.x.push_back(r.k);
        wst.y.push_back(r.mean_worst);
    }
    write_line_plot_svg((root / "k_sweep.svg").string(), "Sensitivity to the number of clusters",
                        "clusters per class (K)", "accuracy", {unb, wst});
    return rows;
}

std::vector<AblationRow> ablation_grid(const ExperimentConfig& cfg,
                                       const std::string& raw_config) {
    if (cfg.method.name != "ours")
        throw ConfigError("ablation_grid: method must be ours");

    const fs::path root = fs::path(cfg.output_dir) / (config_hash_hex(raw_config) + "-ablation");
    fs::create_directories(root);

    const debias::WeightingMode modes[] = {
        debias::WeightingMode::Uniform, debias::WeightingMode::LossOnly,
        debias::WeightingMode::ScaleOnly, debias::WeightingMode::ScaleAndLoss};

    std::map<int, std::vector<double>> unbiased_by_mode, worst_by_mode;
    for (std::uint64_t seed : cfg.seeds) {
        data::LabeledDataset train_ds = build_train_dataset(cfg, seed);
        data::LabeledDataset test_ds = build_test_dataset(cfg, seed);
        data::TrainView view(train_ds);

        debias::TrainConfig tcfg = cfg.train;
        tcfg.seed = derive_seed(seed, kTrainStream);
        const nn::DenseNet base = debias::train_base(view, tcfg);
        const Matrix feats = features_for(base, view);
        const cluster::ClusterModel clusters = cluster::fit_pseudo_attributes(
            feats, std::span<const int>(train_ds.targets), train_ds.schema.num_classes,
            tcfg.clusters_per_class, derive_seed(seed, kClusterStream));

        for (int m = 0; m < 4; ++m) {
            debias::TrainConfig mcfg = tcfg;
            mcfg.mode = modes[m];
            const nn::DenseNet net = debias::train_debiased(view, base, clusters, mcfg);
            eval::EvalOptions opts;
            opts.min_group_count = cfg.eval.min_group_count;
            const eval::EvalReport report = eval::make_report(
                eval::group_accuracies(net, test_ds, cfg.eval.bias_sets.front(), opts));
            unbiased_by_mode[m].push_back(report.unbiased);
            worst_by_mode[m].push_back(report.worst_group);
        }
    }

    std::vector<AblationRow> rows;
    for (int m = 0; m < 4; ++m) {
        AblationRow row;
        row.mode = modes[m];
        row.mode_name = weighting_mode_name(modes[m]);
        const double n = static_cast<double>(unbiased_by_mode[m].size());
        for (double v : unbiased_by_mode[m]) row.mean_unbiased += v;
        for (double v : worst_by_mode[m]) row.mean_worst += v;
        row.mean_unbiased /= n;
        row.mean_worst /= n;
        rows.push_back(row);
    }

    {
        std::ofstream csv(root / "ablation.csv");
        csv << "mode,unbiased_mean,worst_group_mean\n";
        for (const auto& r : rows)
            csv << r.mode_name << "," << r.mean_unbiased << "," << r.mean_worst << "\n";
    }
    return rows;
}

eval::MultiBiasReport evaluate_snapshot(const std::string& model_path,
                                        const std::string& dataset_path,
                                        const std::vector<std::vector<std::string>>& bias_sets,
                                        std::size_t min_group_count) {
    const nn::DenseNet net = nn::load_model(model_path);
    const data::LabeledDataset ds = data::load_dataset(dataset_path);
    eval::EvalOptions opts;
    opts.min_group_count = min_group_count;
    return eval::multi_bias_report(net, ds, bias_sets, opts);
}

}  // namespace dlab::cli
