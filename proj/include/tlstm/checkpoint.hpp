#pragma once

// Versioned binary container: magic, format version, a JSON header and a
// sequence of named float64 arrays.
//
//   8 bytes   "TLSTMCKP"
//   u32       format version
//   u64       header length, then that many bytes of UTF-8 JSON
//   payload   arrays in header order, little-endian f64
//
// The header's "arrays" member lists {name, shape} for each payload array.

#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "json.hpp"

#include "tlstm/parameters.hpp"

namespace tlstm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointFile {
  nlohmann::json header;  // caller fields; "arrays" is reserved
  ParameterSet arrays;
};

/// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const CheckpointFile& file);
CheckpointFile load_checkpoint(const std::filesystem::path& path);

}  // namespace tlstm
