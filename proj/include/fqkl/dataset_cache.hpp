#pragma once

#include <filesystem>

#include "fqkl/data.hpp"

namespace fqkl {

/// Dataset cache file (.fqkd): a small header (magic "FQKD", version, class
/// count, label names, sample rate) followed by a checkpoint-container blob
/// holding the `windows`, `labels` and `subjects` tensors.
void save_dataset_cache(const std::filesystem::path& path, const WindowedDataset& ds);
WindowedDataset load_dataset_cache(const std::filesystem::path& path);

}  // namespace fqkl
