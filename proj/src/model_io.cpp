#include "dlab/model_io.hpp"

#include <fstream>

#include "dlab/errors.hpp"

namespace dlab::nn {

namespace {

constexpr std::uint32_t kModelMagic = 0x444c4e4eU;  // "DLNN"

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
    T v;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw FormatError(path + ": truncated model snapshot");
    return v;
}

}  // namespace

void save_model(const std::string& path, const DenseNet& net, std::uint64_t config_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(path + ": cannot open for writing");
    write_pod(out, kModelMagic);
    write_pod(out, std::uint32_t{1});
    write_pod(out, config_hash);
    write_pod(out, static_cast<std::uint64_t>(net.num_layers()));
    for (const auto& layer : net.layers()) {
        write_pod(out, static_cast<std::uint64_t>(layer.out_dim()));
        write_pod(out, static_cast<std::uint64_t>(layer.in_dim()));
        out.write(reinterpret_cast<const char*>(layer.weight.data()),
                  static_cast<std::streamsize>(layer.weight.size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(layer.bias.data()),
                  static_cast<std::streamsize>(layer.bias.size() * sizeof(double)));
    }
    if (!out) throw FormatError(path + ": write failed");
}

DenseNet load_model(const std::string& path, std::uint64_t* config_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open");
    if (read_pod<std::uint32_t>(in, path) != kModelMagic)
        throw FormatError(path + ": bad model snapshot magic");
    if (read_pod<std::uint32_t>(in, path) != 1)
        throw FormatError(path + ": unsupported model snapshot version");
    const std::uint64_t hash = read_pod<std::uint64_t>(in, path);
    if (config_hash) *config_hash = hash;

    const std::uint64_t layers = read_pod<std::uint64_t>(in, path);
    std::vector<LayerParams> params;
    params.reserve(layers);
    for (std::uint64_t l = 0; l < layers; ++l) {
        const std::uint64_t out_dim = read_pod<std::uint64_t>(in, path);
        const std::uint64_t in_dim = read_pod<std::uint64_t>(in, path);
        LayerParams p{Matrix(out_dim, in_dim), std::vector<double>(out_dim)};
        if (!in.read(reinterpret_cast<char*>(p.weight.data()),
                     static_cast<std::streamsize>(p.weight.size() * sizeof(double))))
            throw FormatError(path + ": truncated weight data");
        if (!in.read(reinterpret_cast<char*>(p.bias.data()),
                     static_cast<std::streamsize>(p.bias.size() * sizeof(double))))
            throw FormatError(path + ": truncated bias data");
        params.push_back(std::move(p));
    }
    return DenseNet::from_layers(std::move(params));
}

}  // namespace dlab::nn
