#pragma once

#include <filesystem>
#include <iosfwd>

#include "ctgrpo/policy.hpp"

namespace ctgrpo {

/// Binary checkpoint layout (all integers and floats little-endian):
///   magic   8 bytes  "CTGRPOCK"
///   version u32      (1)
///   role    u32      (0 trainable, 1 old snapshot, 2 reference)
///   vocab, dim, input            u32 x 3
///   tensor count                 u32
///   shape table                  (rows u32, cols u32) per tensor
///   values                       f64 array in layout order
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const PolicyParams& params);
PolicyParams read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::filesystem::path& path);

}  // namespace ctgrpo
