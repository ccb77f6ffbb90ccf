#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "opdyn/neural_ode.hpp"

namespace opdyn {

// Trained model plus the information needed to resume or predict with it.
struct Checkpoint {
  NetworkSpec spec;
  Parameters params;
  PauliBasis basis;
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_validation = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;
  // Free-form provenance (resolved config, source trajectory, ...).
  Metadata meta;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little endian):
//   "OPDYNCKP"            8 bytes
//   version               u32
//   header length         u64, then that many bytes of "key=value\n" text
//   parameter count       u64, then raw IEEE-754 doubles
//   history length        u64, then (i64 epoch, f64 train, f64 validation)
// Doubles are stored as raw bits, so a write/read round trip is exact.
void write_checkpoint(std::ostream& out, const Checkpoint& ckp);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckp);
Checkpoint read_checkpoint(std::istream& in);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace opdyn
