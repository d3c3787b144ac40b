#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fqkl/param_tree.hpp"

namespace fqkl {

/// Checkpoint container, all integers little-endian:
///   magic "FQKC" | version u8 | tensor count u64
///   per tensor: name length u32 | UTF-8 name | dtype u8 (0 = f64, 1 = f32)
///               | rank u8 | extents u64 each | raw values
/// f64 round-trips bit-exactly; f32 halves the size and is widened to f64 on
/// load.
std::vector<std::uint8_t> serialize_checkpoint(const ParamTree& params, bool as_f32 = false);
ParamTree deserialize_checkpoint(std::span<const std::uint8_t> blob);

void save_checkpoint_file(const std::filesystem::path& path, const ParamTree& params,
                          bool as_f32 = false);
ParamTree load_checkpoint_file(const std::filesystem::path& path);

}  // namespace fqkl
