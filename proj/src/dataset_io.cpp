#include "dlab/dataset_io.hpp"

#include <fstream>

#include "dlab/errors.hpp"

namespace dlab::data {

namespace {

constexpr std::uint32_t kDatasetMagic = 0x444c4453U;  // "DLDS"

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
    T v;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw FormatError(path + ": truncated dataset snapshot");
    return v;
}

void write_string(std::ostream& out, const std::string& s) {
    write_pod(out, static_cast<std::uint64_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const std::string& path) {
    const std::uint64_t len = read_pod<std::uint64_t>(in, path);
    std::string s(len, '\0');
    if (len && !in.read(s.data(), static_cast<std::streamsize>(len)))
        throw FormatError(path + ": truncated string");
    return s;
}

}  // namespace

void save_dataset(const std::string& path, const LabeledDataset& ds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(path + ": cannot open for writing");
    write_pod(out, kDatasetMagic);
    write_pod(out, std::uint32_t{1});
    write_pod(out, static_cast<std::uint64_t>(ds.size()));
    write_pod(out, static_cast<std::uint64_t>(ds.feature_dim));
    write_pod(out, static_cast<std::int32_t>(ds.schema.num_classes));
    write_pod(out, static_cast<std::uint32_t>(ds.schema.bias_attrs.size()));
    for (const auto& attr : ds.schema.bias_attrs) {
        write_string(out, attr.name);
        write_pod(out, static_cast<std::int32_t>(attr.cardinality));
    }
    write_string(out, ds.provenance);
    out.write(reinterpret_cast<const char*>(ds.features.data()),
              static_cast<std::streamsize>(ds.features.size() * sizeof(float)));
    for (std::size_t i = 0; i < ds.size(); ++i)
        write_pod(out, static_cast<std::int32_t>(ds.targets[i]));
    for (const auto& col : ds.bias_labels)
        for (int v : col) write_pod(out, static_cast<std::int32_t>(v));
    if (!out) throw FormatError(path + ": write failed");
}

LabeledDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open");
    if (read_pod<std::uint32_t>(in, path) != kDatasetMagic)
        throw FormatError(path + ": bad dataset snapshot magic");
    if (read_pod<std::uint32_t>(in, path) != 1)
        throw FormatError(path + ": unsupported dataset snapshot version");

    LabeledDataset ds;
    const std::uint64_t n = read_pod<std::uint64_t>(in, path);
    ds.feature_dim = read_pod<std::uint64_t>(in, path);
    ds.schema.num_classes = read_pod<std::int32_t>(in, path);
    const std::uint32_t attrs = read_pod<std::uint32_t>(in, path);
    for (std::uint32_t a = 0; a < attrs; ++a) {
        BiasAttribute attr;
        attr.name = read_string(in, path);
        attr.cardinality = read_pod<std::int32_t>(in, path);
        ds.schema.bias_attrs.push_back(std::move(attr));
    }
    ds.provenance = read_string(in, path);

    ds.features.resize(n * ds.feature_dim);
    if (n && !in.read(reinterpret_cast<char*>(ds.features.data()),
                      static_cast<std::streamsize>(ds.features.size() * sizeof(float))))
        throw FormatError(path + ": truncated feature data");
    ds.targets.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) ds.targets[i] = read_pod<std::int32_t>(in, path);
    ds.bias_labels.resize(attrs);
    for (std::uint32_t a = 0; a < attrs; ++a) {
        ds.bias_labels[a].resize(n);
        for (std::uint64_t i = 0; i < n; ++i)
            ds.bias_labels[a][i] = read_pod<std::int32_t>(in, path);
    }
    ds.validate();
    return ds;
}

void write_dataset_csv(const std::string& path, const LabeledDataset& ds) {
    std::ofstream out(path);
    if (!out) throw FormatError(path + ": cannot open for writing");
    for (std::size_t d = 0; d < ds.feature_dim; ++d) out << "f" << d << ",";
    out << "target";
    for (const auto& attr : ds.schema.bias_attrs) out << "," << attr.name;
    out << "\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto f = ds.features_of(i);
        for (float v : f) out << v << ",";
        out << ds.targets[i];
        for (std::size_t a = 0; a < ds.bias_labels.size(); ++a)
            out << "," << ds.bias_labels[a][i];
        out << "\n";
    }
}

}  // namespace dlab::data
