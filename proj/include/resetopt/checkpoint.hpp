#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "resetopt/mlp.hpp"
#include "resetopt/optimizers.hpp"

namespace resetopt {

// Binary checkpoint, all integers and doubles little-endian:
//
//   offset  size        field
//   0       8           magic "RSOPTCK1"
//   8       4           u32 number of layer widths L
//   12      8*L         u64 layer widths
//   ..      8           u64 parameter count N
//   ..      8*N         f64 parameters (FlatParams layout)
//   ..      1           u8 1 if an optimizer state follows, else 0
//   ..      8           u64 step counter i
//   ..      8           u64 moment length M (== N)
//   ..      8*M         f64 first moment m
//   ..      8*M         f64 second moment v
struct Checkpoint {
  std::vector<std::size_t> layer_widths;
  FlatParams params;
  std::optional<OptimizerState> optimizer;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace resetopt
