#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace lfc {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Named parameter blocks plus a free-form JSON metadata object.
///
/// On disk: the 7 bytes "LFCCKPT", a u32 format version, a u64 header
/// length, the UTF-8 JSON header, then every block's values as raw
/// little-endian IEEE-754 doubles in header order. The header lists blocks
/// as {"name", "size"} and carries the metadata under "meta".
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, std::vector<double>>> blocks;

  const std::vector<double>& block(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

/// Atomic write (temp file then rename).
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace lfc
