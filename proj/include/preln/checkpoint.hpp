#pragma once

#include <filesystem>
#include <iosfwd>

#include "preln/model.hpp"

namespace preln {

// Layout:
//   preln-checkpoint
//   format_version = 1
//   model.<key> = <value>          one line per ModelConfig field
//   tensor = <name> <rows> <cols>  one line per tensor, declaration order
//   end_header
// then every tensor as little-endian IEEE-754 float64, row-major, in the
// order of the tensor lines.
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  Parameters<double> params;
};

template <typename S>
void write_checkpoint(std::ostream& out, const ModelConfig& config, const Parameters<S>& params);
Checkpoint read_checkpoint(std::istream& in);

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const Parameters<S>& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace preln
