#pragma once

#include <cstdint>
#include <string>

#include "dlab/nn.hpp"

namespace dlab::nn {

// Binary model snapshot with an embedded config hash (little-endian doubles).
void save_model(const std::string& path, const DenseNet& net, std::uint64_t config_hash);
DenseNet load_model(const std::string& path, std::uint64_t* config_hash = nullptr);

}  // namespace dlab::nn
