#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dlab/data.hpp"

namespace dlab::data {

// Raw grayscale images as parsed from an IDX file: count x rows x cols,
// pixel values in [0, 255].
struct RawImages {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> pixels;
};

// Big-endian IDX parsing. Image magic 0x00000803, label magic 0x00000801.
// Throws FormatError naming the offending file on bad magic, truncation,
// or an image/label count mismatch.
RawImages load_idx_images(const std::string& path);
std::vector<std::uint8_t> load_idx_labels(const std::string& path);
std::pair<RawImages, std::vector<std::uint8_t>> load_idx(const std::string& images_path,
                                                         const std::string& labels_path);

void write_idx_images(const std::string& path, const RawImages& images);
void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

using Palette = std::vector<std::array<std::uint8_t, 3>>;

// Ten maximally separated hues (36-degree steps, full saturation/value).
const Palette& default_palette();

/// Foreground colorization: each image becomes a [3 x rows x cols] tensor
/// flattened channel-major, values in [0, 1]; pixels with intensity > 0 are
/// tinted by the assigned color. The bias label is the palette index; with
/// probability `aligned_ratio` the color is the digit's own, else uniform
/// over the other palette entries.
LabeledDataset colorize_mnist(const RawImages& images, std::span<const std::uint8_t> labels,
                              double aligned_ratio, const Palette& palette, std::uint64_t seed);

}  // namespace dlab::data
