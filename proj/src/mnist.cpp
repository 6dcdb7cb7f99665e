#include "dlab/mnist.hpp"

#include <fstream>

#include "dlab/errors.hpp"
#include "dlab/rng.hpp"

namespace dlab::data {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::string& path) {
    std::uint8_t b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw FormatError(path + ": truncated IDX header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
    const std::uint8_t b[4] = {std::uint8_t(v >> 24), std::uint8_t(v >> 16),
                               std::uint8_t(v >> 8), std::uint8_t(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

RawImages load_idx_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open");
    const std::uint32_t magic = read_be32(in, path);
    if (magic != kImageMagic)
        throw FormatError(path + ": bad image magic (expected 0x00000803)");
    RawImages img;
    img.count = read_be32(in, path);
    img.rows = read_be32(in, path);
    img.cols = read_be32(in, path);
    const std::size_t n = img.count * img.rows * img.cols;
    img.pixels.resize(n);
    if (!in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(n)))
        throw FormatError(path + ": truncated pixel data");
    return img;
}

std::vector<std::uint8_t> load_idx_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open");
    const std::uint32_t magic = read_be32(in, path);
    if (magic != kLabelMagic)
        throw FormatError(path + ": bad label magic (expected 0x00000801)");
    const std::uint32_t count = read_be32(in, path);
    std::vector<std::uint8_t> labels(count);
    if (!in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(count)))
        throw FormatError(path + ": truncated label data");
    return labels;
}

std::pair<RawImages, std::vector<std::uint8_t>> load_idx(const std::string& images_path,
                                                         const std::string& labels_path) {
    RawImages img = load_idx_images(images_path);
    std::vector<std::uint8_t> labels = load_idx_labels(labels_path);
    if (img.count != labels.size())
        throw FormatError(images_path + ": image count " + std::to_string(img.count) +
                          " != label count " + std::to_string(labels.size()) + " in " +
                          labels_path);
    return {std::move(img), std::move(labels)};
}

void write_idx_images(const std::string& path, const RawImages& images) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(path + ": cannot open for writing");
    write_be32(out, kImageMagic);
    write_be32(out, static_cast<std::uint32_t>(images.count));
    write_be32(out, static_cast<std::uint32_t>(images.rows));
    write_be32(out, static_cast<std::uint32_t>(images.cols));
    out.write(reinterpret_cast<const char*>(images.pixels.data()),
              static_cast<std::streamsize>(images.pixels.size()));
    if (!out) throw FormatError(path + ": write failed");
}

void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(path + ": cannot open for writing");
    write_be32(out, kLabelMagic);
    write_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()),
              static_cast<std::streamsize>(labels.size()));
    if (!out) throw FormatError(path + ": write failed");
}

const Palette& default_palette() {
    // HSV wheel at 36-degree steps, S = V = 1.
    static const Palette p = {{
        {255, 0, 0},   {255, 153, 0}, {204, 255, 0}, {51, 255, 0},  {0, 255, 102},
        {0, 255, 255}, {0, 102, 255}, {51, 0, 255},  {204, 0, 255}, {255, 0, 153},
    }};
    return p;
}

LabeledDataset colorize_mnist(const RawImages& images, std::span<const std::uint8_t> labels,
                              double aligned_ratio, const Palette& palette, std::uint64_t seed) {
    const int num_classes = static_cast<int>(palette.size());
    if (palette.size() < 2) throw SpecError("colorize_mnist: palette needs >= 2 colors");
    if (images.count != labels.size())
        throw SpecError("colorize_mnist: image/label count mismatch");
    if (!(aligned_ratio > 0.0 && aligned_ratio <= 1.0))
        throw SpecError("colorize_mnist: aligned_ratio must be in (0, 1]");
    for (std::uint8_t y : labels)
        if (y >= palette.size())
            throw SpecError("colorize_mnist: label exceeds palette size");

    const std::size_t plane = images.rows * images.cols;
    LabeledDataset ds;
    ds.schema.num_classes = num_classes;
    ds.schema.bias_attrs.push_back({"color", num_classes});
    ds.feature_dim = 3 * plane;
    ds.bias_labels.resize(1);
    ds.features.reserve(images.count * ds.feature_dim);
    ds.targets.reserve(images.count);

    Rng rng(seed);
    for (std::size_t i = 0; i < images.count; ++i) {
        const int digit = labels[i];
        int color = digit;
        if (rng.uniform() >= aligned_ratio) {
            int v = static_cast<int>(rng.uniform_index(palette.size() - 1));
            if (v >= digit) ++v;
            color = v;
        }
        ds.targets.push_back(digit);
        ds.bias_labels[0].push_back(color);

        const std::uint8_t* px = images.pixels.data() + i * plane;
        for (int ch = 0; ch < 3; ++ch) {
            const float tint = static_cast<float>(palette[static_cast<std::size_t>(color)][ch]) / 255.0f;
            for (std::size_t p = 0; p < plane; ++p)
                ds.features.push_back(tint * static_cast<float>(px[p]) / 255.0f);
        }
    }
    return ds;
}

}  // namespace dlab::data
