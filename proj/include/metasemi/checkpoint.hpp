#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "metasemi/mlp.hpp"

namespace metasemi {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Plain-text parameter snapshot:
///
///   metasemi-checkpoint 1
///   layers <L> <s0> ... <sL-1>
///   params <P>
///   teacher <0|1>
///   <P student values>
///   <P teacher values, if present>
///
/// Values are written with 17 significant digits, so loading reproduces every
/// finite double bit for bit.
struct Checkpoint {
  std::vector<std::size_t> layer_sizes;
  ParamVector student;
  std::optional<ParamVector> teacher;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr int kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace metasemi
