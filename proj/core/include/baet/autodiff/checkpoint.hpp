#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

#include "baet/autodiff/parameters.hpp"

namespace baet::ad {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary parameter checkpoint, all integers little-endian:
///
///   magic    8 bytes  "BAETCKPT"
///   version  u32      kCheckpointVersion
///   count    u32      number of entries
///   entry    count times:
///     name_len u32, name bytes (UTF-8, no terminator)
///     kind     u8   (0 weight, 1 bias, 2 embedding)
///     rows     u32, cols u32
///     values   rows*cols IEEE-754 float32, row-major
///
/// Values are narrowed to 32 bits on save.
inline constexpr unsigned kCheckpointVersion = 1;

void save_checkpoint(const ParameterSet& params, std::ostream& out);
void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path);
ParameterSet load_checkpoint(std::istream& in);
ParameterSet load_checkpoint(const std::filesystem::path& path);

}  // namespace baet::ad
