#pragma once

#include <string>
#include <utility>
#include <vector>

#include "prema/tensor.hpp"

namespace prema {

// Parameter entry as read back from a checkpoint file.
struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;
  bool stored_f32 = false;
};

// Binary format: "PRMA", u32 version=1, u32 entry count, then per entry
// u16 name length + name, u8 dtype (0=f32, 1=f64), u8 rank, rank x u64 dims,
// raw little-endian values; a u32 CRC32 of all preceding bytes trails the
// file and is verified on load.
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& entries,
                     bool f32_mode = false);

std::vector<CheckpointEntry> load_checkpoint(const std::string& path);

// Copy loaded values into same-named targets; every target must be matched
// with identical shape.
void apply_checkpoint(const std::vector<CheckpointEntry>& entries,
                      const std::vector<std::pair<std::string, Tensor>>& targets);

}  // namespace prema
