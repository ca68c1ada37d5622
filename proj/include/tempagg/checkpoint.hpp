#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tempagg/tensor.hpp"

namespace tempagg {

// Parameter file: magic "TAGG1", then per entry: name length (u32 LE),
// UTF-8 name, rank (u32 LE), extents (u32 LE each), raw little-endian
// 32-bit floats. Entries are written in the order given.
void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, TensorPtr>>& entries);

std::vector<std::pair<std::string, TensorPtr>> load_checkpoint(const std::filesystem::path& path);

} // namespace tempagg
