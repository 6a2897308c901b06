#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixvox/model.hpp"
#include "mixvox/params.hpp"

namespace mixvox {

inline constexpr uint32_t kCheckpointVersion = 1;

/// "MXVX", version (u32), config echo (length-prefixed), block count (u32),
/// then blocks of: tag (u8), name (length-prefixed), payload length (u64),
/// payload.
struct Checkpoint {
  std::string config_text;
  Model model;
  std::optional<Adam> adam;
  uint64_t step = 0;
};

std::vector<uint8_t> encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(std::span<const uint8_t> bytes);
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mixvox
