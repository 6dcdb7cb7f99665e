#include "dlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "dlab/errors.hpp"

namespace dlab::eval {

namespace {

std::vector<int> predict(const nn::DenseNet& net, const data::LabeledDataset& ds) {
    if (ds.feature_dim != net.input_dim())
        throw CompatError("evaluate: dataset feature dim " + std::to_string(ds.feature_dim) +
                          " != model input dim " + std::to_string(net.input_dim()));
    std::vector<int> preds(ds.size());
    constexpr std::size_t kChunk = 512;
    for (std::size_t begin = 0; begin < ds.size(); begin += kChunk) {
        const std::size_t end = std::min(ds.size(), begin + kChunk);
        Matrix x(end - begin, ds.feature_dim);
        for (std::size_t i = begin; i < end; ++i) {
            const auto f = ds.features_of(i);
            double* row = x.row(i - begin);
            for (std::size_t c = 0; c < ds.feature_dim; ++c) row[c] = static_cast<double>(f[c]);
        }
        const nn::ForwardCache cache = nn::forward(net, x);
        const Matrix& logits = cache.logits();
        for (std::size_t i = begin; i < end; ++i) {
            const double* row = logits.row(i - begin);
            int best = 0;
            for (std::size_t c = 1; c < logits.cols(); ++c)
                if (row[c] > row[best]) best = static_cast<int>(c);
            preds[i] = best;
        }
    }
    return preds;
}

}  // namespace

GroupMetrics group_accuracies(const nn::DenseNet& net, const data::LabeledDataset& ds,
                              std::span<const std::string> bias_attrs,
                              const EvalOptions& options) {
    for (const auto& name : bias_attrs) ds.schema.bias_index(name);  // SchemaError if unknown

    GroupMetrics m;
    m.bias_attrs.assign(bias_attrs.begin(), bias_attrs.end());
    m.split_name = options.split_name;
    m.min_group_count = options.min_group_count;

    const std::vector<data::GroupId> all = data::enumerate_groups(ds.schema, bias_attrs);
    std::map<data::GroupId, std::size_t> index;
    m.cells.reserve(all.size());
    for (const auto& g : all) {
        index[g] = m.cells.size();
        m.cells.push_back({g, 0, 0});
    }

    const std::vector<int> preds = predict(net, ds);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        GroupCell& cell = m.cells[index.at(data::group_of(ds, i, bias_attrs))];
        cell.count += 1;
        m.total += 1;
        if (preds[i] == ds.targets[i]) {
            cell.correct += 1;
            m.total_correct += 1;
        }
    }
    return m;
}

double unbiased_accuracy(const GroupMetrics& metrics) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : metrics.cells) {
        if (metrics.included(c)) {
            sum += c.accuracy();
            ++n;
        }
    }
    if (n == 0) throw EvalError("unbiased_accuracy: no group meets the count threshold");
    return sum / static_cast<double>(n);
}

double worst_group_accuracy(const GroupMetrics& metrics) {
    double worst = 2.0;
    for (const auto& c : metrics.cells)
        if (metrics.included(c)) worst = std::min(worst, c.accuracy());
    if (worst > 1.5) throw EvalError("worst_group_accuracy: no group meets the count threshold");
    return worst;
}

double overall_accuracy(const GroupMetrics& metrics) {
    if (metrics.total == 0) throw EvalError("overall_accuracy: empty evaluation split");
    return static_cast<double>(metrics.total_correct) / static_cast<double>(metrics.total);
}

EvalReport make_report(GroupMetrics metrics) {
    EvalReport r;
    r.overall = overall_accuracy(metrics);
    r.unbiased = unbiased_accuracy(metrics);
    r.worst_group = worst_group_accuracy(metrics);
    r.bias_gap_points = (r.overall - r.unbiased) * 100.0;
    r.bias_flagged = r.bias_gap_points > 5.0;
    r.metrics = std::move(metrics);
    return r;
}

double bias_severity(const nn::DenseNet& net, const data::LabeledDataset& ds,
                     std::span<const std::string> bias_attrs, const EvalOptions& options) {
    return make_report(group_accuracies(net, ds, bias_attrs, options)).bias_gap_points;
}

MultiBiasReport multi_bias_report(const nn::DenseNet& net, const data::LabeledDataset& ds,
                                  const std::vector<std::vector<std::string>>& bias_sets,
                                  const EvalOptions& options) {
    if (bias_sets.empty()) throw SpecError("multi_bias_report: no bias sets");
    MultiBiasReport out;
    for (const auto& set : bias_sets) {
        if (set.empty()) throw SpecError("multi_bias_report: empty bias set");
        out.reports.push_back(make_report(group_accuracies(net, ds, set, options)));
    }

    const auto mean_of = [&](auto&& get) {
        double s = 0.0;
        for (const auto& r : out.reports) s += get(r);
        return s / static_cast<double>(out.reports.size());
    };
    const auto std_of = [&](auto&& get, double mean) {
        if (out.reports.size() < 2) return 0.0;
        double s = 0.0;
        for (const auto& r : out.reports) {
            const double d = get(r) - mean;
            s += d * d;
        }
        return std::sqrt(s / static_cast<double>(out.reports.size() - 1));
    };
    const auto unb = [](const EvalReport& r) { return r.unbiased; };
    const auto wrs = [](const EvalReport& r) { return r.worst_group; };
    out.mean_unbiased = mean_of(unb);
    out.std_unbiased = std_of(unb, out.mean_unbiased);
    out.mean_worst = mean_of(wrs);
    out.std_worst = std_of(wrs, out.mean_worst);
    return out;
}

namespace {

// Power iteration with deflation for the leading eigenpair of a symmetric
// matrix. Deterministic start vector; returns eigenvalue, writes vector.
double leading_eigen(const Matrix& cov, const std::vector<const std::vector<double>*>& deflate,
                     std::vector<double>& v) {
    const std::size_t h = cov.rows();
    v.assign(h, 1.0 / std::sqrt(static_cast<double>(h)));
    std::vector<double> next(h);
    double lambda = 0.0;
    for (int iter = 0; iter < 1000; ++iter) {
        // project out already-found directions
        for (const auto* d : deflate) {
            double dot = 0.0;
            for (std::size_t i = 0; i < h; ++i) dot += v[i] * (*d)[i];
            for (std::size_t i = 0; i < h; ++i) v[i] -= dot * (*d)[i];
        }
        for (std::size_t i = 0; i < h; ++i) {
            double s = 0.0;
            const double* row = cov.row(i);
            for (std::size_t j = 0; j < h; ++j) s += row[j] * v[j];
            next[i] = s;
        }
        double norm = 0.0;
        for (double x : next) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-300) break;  // zero variance left
        double diff = 0.0;
        for (std::size_t i = 0; i < h; ++i) {
            next[i] /= norm;
            diff = std::max(diff, std::abs(next[i] - v[i]));
        }
        v = next;
        lambda = norm;
        if (diff < 1e-13) break;
    }
    // sign convention: largest-magnitude component positive
    std::size_t arg = 0;
    for (std::size_t i = 1; i < h; ++i)
        if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
    if (v[arg] < 0.0)
        for (double& x : v) x = -x;
    return lambda;
}

}  // namespace

Projection project_embeddings(const Matrix& features) {
    const std::size_t n = features.rows(), h = features.cols();
    if (h < 2) throw ShapeError("project_embeddings: feature dim must be >= 2");
    if (n < 2) throw ShapeError("project_embeddings: need at least 2 points");

    std::vector<double> mean(h, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = features.row(i);
        for (std::size_t j = 0; j < h; ++j) mean[j] += row[j];
    }
    for (double& m : mean) m /= static_cast<double>(n);

    Matrix centered(n, h);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < h; ++j) centered(i, j) = features(i, j) - mean[j];

    Matrix cov(h, h);
    gemm_tn(centered, centered, cov);
    const double inv = 1.0 / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < cov.size(); ++i) cov.data()[i] *= inv;

    std::vector<double> v1, v2;
    const double l1 = leading_eigen(cov, {}, v1);
    const double l2 = leading_eigen(cov, {&v1}, v2);

    Projection p;
    p.coords = Matrix(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        double c0 = 0.0, c1 = 0.0;
        const double* row = centered.row(i);
        for (std::size_t j = 0; j < h; ++j) {
            c0 += row[j] * v1[j];
            c1 += row[j] * v2[j];
        }
        p.coords(i, 0) = c0;
        p.coords(i, 1) = c1;
    }
    p.explained_variance = {l1, l2};
    return p;
}

nlohmann::ordered_json report_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["split"] = report.metrics.split_name;
    j["bias_attributes"] = report.metrics.bias_attrs;
    j["overall_accuracy"] = report.overall;
    j["unbiased_accuracy"] = report.unbiased;
    j["worst_group_accuracy"] = report.worst_group;
    j["bias_gap_points"] = report.bias_gap_points;
    j["algorithmic_bias_flagged"] = report.bias_flagged;
    j["min_group_count"] = report.metrics.min_group_count;
    nlohmann::ordered_json groups = nlohmann::ordered_json::array();
    for (const auto& c : report.metrics.cells) {
        nlohmann::ordered_json g;
        g["target"] = c.id.target;
        g["bias_values"] = c.id.bias_values;
        g["count"] = c.count;
        g["correct"] = c.correct;
        g["accuracy"] = c.accuracy();
        g["included"] = report.metrics.included(c);
        groups.push_back(std::move(g));
    }
    j["groups"] = std::move(groups);
    return j;
}

void write_report_json(const std::string& path, const EvalReport& report) {
    std::ofstream out(path);
    if (!out) throw FormatError(path + ": cannot open for writing");
    out << report_to_json(report).dump(2) << "\n";
}

void write_group_csv(const std::string& path, const GroupMetrics& metrics) {
    std::ofstream out(path);
    if (!out) throw FormatError(path + ": cannot open for writing");
    out << "target_value";
    for (const auto& a : metrics.bias_attrs) out << "," << a;
    out << ",count,correct,accuracy\n";
    for (const auto& c : metrics.cells) {
        out << c.id.target;
        for (int v : c.id.bias_values) out << "," << v;
        out << "," << c.count << "," << c.correct << "," << c.accuracy() << "\n";
    }
}

void write_projection_csv(const std::string& path, const Projection& projection,
                          std::span<const int> targets, const data::LabeledDataset& ds,
                          std::span<const cluster::ClusterId> cluster_ids) {
    std::ofstream out(path);
    if (!out) throw FormatError(path + ": cannot open for writing");
    out << "x,y,target";
    for (const auto& a : ds.schema.bias_attrs) out << "," << a.name;
    out << ",cluster\n";
    for (std::size_t i = 0; i < projection.coords.rows(); ++i) {
        out << projection.coords(i, 0) << "," << projection.coords(i, 1) << "," << targets[i];
        for (std::size_t a = 0; a < ds.schema.bias_attrs.size(); ++a)
            out << "," << ds.bias_labels[a][i];
        if (i < cluster_ids.size())
            out << "," << cluster_ids[i].cls << ":" << cluster_ids[i].local;
        else
            out << ",";
        out << "\n";
    }
}

}  // namespace dlab::eval
