#pragma once

#include <filesystem>
#include <string>

#include "chunkgrpo/network.hpp"

namespace chunkgrpo {

/// Binary checkpoint layout (all integers little-endian):
///
///   offset  size  field
///   0       8     magic "CGRPOCKP"
///   8       4     uint32 format version (1)
///   12      4     uint32 length N of the architecture string
///   16      N     architecture string, Architecture::describe() form
///   16+N    8     uint64 parameter count P
///   24+N    8*P   IEEE-754 binary64 parameter values
inline constexpr char kCheckpointMagic[8] = {'C', 'G', 'R', 'P', 'O', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const ParamVector& params);
ParamVector decode_checkpoint(const std::string& bytes);

void save_checkpoint(const ParamVector& params, const std::filesystem::path& path);
ParamVector load_checkpoint(const std::filesystem::path& path);

}  // namespace chunkgrpo
