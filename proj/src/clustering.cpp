#include "dlab/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "dlab/errors.hpp"
#include "dlab/rng.hpp"

namespace dlab::cluster {

namespace {

double sq_dist(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// k-means++ seeding: first centroid uniform, then proportional to squared
// distance to the nearest chosen centroid.
Matrix seed_centroids(const Matrix& points, int k, Rng& rng) {
    const std::size_t n = points.rows(), h = points.cols();
    Matrix centroids(static_cast<std::size_t>(k), h);

    std::size_t first = static_cast<std::size_t>(rng.uniform_index(n));
    for (std::size_t j = 0; j < h; ++j) centroids(0, j) = points(first, j);

    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(points.row(i), centroids.row(0), h);

    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (double d : d2) total += d;
        std::size_t chosen;
        if (total <= 0.0) {
            // all points already coincide with a centroid
            chosen = static_cast<std::size_t>(rng.uniform_index(n));
        } else {
            double r = rng.uniform() * total;
            chosen = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                r -= d2[i];
                if (r <= 0.0) {
                    chosen = i;
                    break;
                }
            }
        }
        for (std::size_t j = 0; j < h; ++j)
            centroids(static_cast<std::size_t>(c), j) = points(chosen, j);
        for (std::size_t i = 0; i < n; ++i)
            d2[i] = std::min(d2[i], sq_dist(points.row(i), centroids.row(static_cast<std::size_t>(c)), h));
    }
    return centroids;
}

struct LloydOutcome {
    Matrix centroids;
    std::vector<int> assignments;
    std::vector<std::size_t> sizes;
    double wcss = 0.0;
    int iterations = 0;
};

LloydOutcome lloyd(const Matrix& points, Matrix centroids, const KMeansOptions& opts) {
    const std::size_t n = points.rows(), h = points.cols();
    const std::size_t k = centroids.rows();

    LloydOutcome out;
    out.assignments.assign(n, 0);
    out.sizes.assign(k, 0);
    double prev_wcss = std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < opts.max_iter; ++iter) {
        // assignment step; ties go to the lowest cluster index
        double wcss = 0.0;
        std::fill(out.sizes.begin(), out.sizes.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = sq_dist(points.row(i), centroids.row(0), h);
            for (std::size_t c = 1; c < k; ++c) {
                const double d = sq_dist(points.row(i), centroids.row(c), h);
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<int>(c);
                }
            }
            out.assignments[i] = best;
            out.sizes[static_cast<std::size_t>(best)] += 1;
            wcss += best_d;
        }
        out.iterations = iter + 1;
        if (opts.check_monotonic && wcss > prev_wcss + 1e-9 * (1.0 + prev_wcss))
            throw NumericError("kmeans: WCSS increased across an iteration");
        prev_wcss = wcss;
        out.wcss = wcss;

        // update step
        Matrix next(k, h, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double* p = points.row(i);
            double* c = next.row(static_cast<std::size_t>(out.assignments[i]));
            for (std::size_t j = 0; j < h; ++j) c[j] += p[j];
        }
        double max_move = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            if (out.sizes[c] > 0) {
                const double inv = 1.0 / static_cast<double>(out.sizes[c]);
                for (std::size_t j = 0; j < h; ++j) next(c, j) *= inv;
            } else {
                // Re-seed an empty cluster to the point farthest from its
                // nearest centroid; if everything is already covered the
                // cluster stays where it is and ends with N_k = 0.
                std::size_t far_idx = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double d = sq_dist(points.row(i),
                                             centroids.row(static_cast<std::size_t>(out.assignments[i])), h);
                    if (d > far_d) {
                        far_d = d;
                        far_idx = i;
                    }
                }
                if (far_d > 0.0) {
                    for (std::size_t j = 0; j < h; ++j) next(c, j) = points(far_idx, j);
                } else {
                    for (std::size_t j = 0; j < h; ++j) next(c, j) = centroids(c, j);
                }
            }
            max_move = std::max(max_move, sq_dist(next.row(c), centroids.row(c), h));
        }
        centroids = std::move(next);
        if (std::sqrt(max_move) < opts.tol) break;
    }

    // final assignment against the converged centroids
    double wcss = 0.0;
    std::fill(out.sizes.begin(), out.sizes.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        int best = 0;
        double best_d = sq_dist(points.row(i), centroids.row(0), h);
        for (std::size_t c = 1; c < k; ++c) {
            const double d = sq_dist(points.row(i), centroids.row(c), h);
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(c);
            }
        }
        out.assignments[i] = best;
        out.sizes[static_cast<std::size_t>(best)] += 1;
        wcss += best_d;
    }
    out.wcss = wcss;
    out.centroids = std::move(centroids);
    return out;
}

}  // namespace

KMeansResult kmeans_fit(const Matrix& points, int k, std::uint64_t seed,
                        const KMeansOptions& opts) {
    if (points.rows() < 1) throw InputError("kmeans_fit: need at least one point");
    if (k < 1) throw InputError("kmeans_fit: K must be >= 1");
    if (!points.all_finite()) throw InputError("kmeans_fit: non-finite input point");

    Rng rng(seed);
    LloydOutcome best;
    bool have = false;
    const int restarts = std::max(1, opts.restarts);
    for (int r = 0; r < restarts; ++r) {
        Rng restart_rng = rng.derive(static_cast<std::uint64_t>(r));
        LloydOutcome out = lloyd(points, seed_centroids(points, k, restart_rng), opts);
        if (!have || out.wcss < best.wcss) {
            best = std::move(out);
            have = true;
        }
    }

    KMeansResult res;
    res.centroids = std::move(best.centroids);
    res.assignments = std::move(best.assignments);
    res.sizes = std::move(best.sizes);
    res.wcss = best.wcss;
    res.iterations = best.iterations;
    return res;
}

bool ClusterModel::fitted(int cls) const {
    return cls >= 0 && cls < num_classes_ && !per_class_[static_cast<std::size_t>(cls)].empty();
}

const Matrix& ClusterModel::centroids(int cls) const {
    if (!fitted(cls))
        throw ModelError("ClusterModel: class " + std::to_string(cls) + " has no fitted clusters");
    return per_class_[static_cast<std::size_t>(cls)];
}

void ClusterModel::set_class(int cls, Matrix centroids) {
    per_class_[static_cast<std::size_t>(cls)] = std::move(centroids);
}

void ClusterModel::set_assignments(std::vector<ClusterId> assignments) {
    assignments_ = std::move(assignments);
    sizes_.assign(total_clusters(), 0);
    for (const ClusterId& id : assignments_) sizes_[flat_index(id)] += 1;
}

ClusterModel fit_pseudo_attributes(const Matrix& features, std::span<const int> targets,
                                   int num_classes, int k, std::uint64_t seed,
                                   const KMeansOptions& opts) {
    if (features.rows() != targets.size())
        throw InputError("fit_pseudo_attributes: features/targets size mismatch");
    if (num_classes < 1 || k < 1) throw InputError("fit_pseudo_attributes: bad C or K");

    ClusterModel model(num_classes, k, features.cols());
    std::vector<ClusterId> assignments(targets.size());

    Rng rng(seed);
    for (int cls = 0; cls < num_classes; ++cls) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < targets.size(); ++i)
            if (targets[i] == cls) members.push_back(i);
        if (members.empty()) continue;  // zero clusters for this class

        Matrix pts(members.size(), features.cols());
        for (std::size_t r = 0; r < members.size(); ++r) {
            const double* src = features.row(members[r]);
            std::copy(src, src + features.cols(), pts.row(r));
        }
        KMeansResult res = kmeans_fit(pts, k, rng.derive(static_cast<std::uint64_t>(cls)).seed(), opts);
        model.set_class(cls, std::move(res.centroids));
        for (std::size_t r = 0; r < members.size(); ++r)
            assignments[members[r]] = {cls, res.assignments[r]};
    }
    model.set_assignments(std::move(assignments));
    return model;
}

ClusterId assign(const ClusterModel& model, std::span<const double> feature, int cls) {
    const Matrix& cents = model.centroids(cls);  // throws if unfitted
    if (feature.size() != model.feature_dim())
        throw InputError("assign: feature dimension mismatch");
    int best = 0;
    double best_d = sq_dist(feature.data(), cents.row(0), feature.size());
    for (std::size_t c = 1; c < cents.rows(); ++c) {
        const double d = sq_dist(feature.data(), cents.row(c), feature.size());
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return {cls, best};
}

namespace {

constexpr std::uint32_t kClusterMagic = 0x444c434dU;  // "DLCM"

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
    T v;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw FormatError(path + ": truncated cluster snapshot");
    return v;
}

}  // namespace

void save_cluster_model(const std::string& path, const ClusterModel& model,
                        std::uint64_t config_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(path + ": cannot open for writing");
    write_pod(out, kClusterMagic);
    write_pod(out, std::uint32_t{1});
    write_pod(out, config_hash);
    write_pod(out, static_cast<std::int32_t>(model.num_classes()));
    write_pod(out, static_cast<std::int32_t>(model.clusters_per_class()));
    write_pod(out, static_cast<std::uint64_t>(model.feature_dim()));
    for (int cls = 0; cls < model.num_classes(); ++cls) {
        const std::uint8_t has = model.fitted(cls) ? 1 : 0;
        write_pod(out, has);
        if (has) {
            const Matrix& c = model.centroids(cls);
            out.write(reinterpret_cast<const char*>(c.data()),
                      static_cast<std::streamsize>(c.size() * sizeof(double)));
        }
    }
    write_pod(out, static_cast<std::uint64_t>(model.assignments().size()));
    for (const ClusterId& id : model.assignments()) {
        write_pod(out, static_cast<std::int32_t>(id.cls));
        write_pod(out, static_cast<std::int32_t>(id.local));
    }
    if (!out) throw FormatError(path + ": write failed");
}

ClusterModel load_cluster_model(const std::string& path, std::uint64_t* config_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open");
    if (read_pod<std::uint32_t>(in, path) != kClusterMagic)
        throw FormatError(path + ": bad cluster snapshot magic");
    if (read_pod<std::uint32_t>(in, path) != 1)
        throw FormatError(path + ": unsupported cluster snapshot version");
    const std::uint64_t hash = read_pod<std::uint64_t>(in, path);
    if (config_hash) *config_hash = hash;
    const int num_classes = read_pod<std::int32_t>(in, path);
    const int k = read_pod<std::int32_t>(in, path);
    const std::uint64_t dim = read_pod<std::uint64_t>(in, path);

    ClusterModel model(num_classes, k, dim);
    for (int cls = 0; cls < num_classes; ++cls) {
        if (read_pod<std::uint8_t>(in, path)) {
            Matrix c(static_cast<std::size_t>(k), dim);
            if (!in.read(reinterpret_cast<char*>(c.data()),
                         static_cast<std::streamsize>(c.size() * sizeof(double))))
                throw FormatError(path + ": truncated centroid data");
            model.set_class(cls, std::move(c));
        }
    }
    const std::uint64_t n = read_pod<std::uint64_t>(in, path);
    std::vector<ClusterId> assignments(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        assignments[i].cls = read_pod<std::int32_t>(in, path);
        assignments[i].local = read_pod<std::int32_t>(in, path);
    }
    model.set_assignments(std::move(assignments));
    return model;
}

}  // namespace dlab::cluster
