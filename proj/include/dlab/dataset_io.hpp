#pragma once

#include <string>

#include "dlab/data.hpp"

namespace dlab::data {

// Binary dataset snapshot (.dlds): header + schema + provenance, then
// float32 feature rows and int32 label columns. Write-then-read is identity.
void save_dataset(const std::string& path, const LabeledDataset& ds);
LabeledDataset load_dataset(const std::string& path);

// Flat CSV: one feature column per dimension, then target and bias columns.
void write_dataset_csv(const std::string& path, const LabeledDataset& ds);

}  // namespace dlab::data
