#pragma once

// Flat binary parameter container:
//
//   bytes 0..3    magic "EMA1"
//   bytes 4..7    kind tag (u32 LE): 1 = EMA, 2 = CA, 3 = SE
//   bytes 8..11   channels C (u32 LE)
//   bytes 12..15  groups G for EMA, reduction r for CA/SE (u32 LE)
//   then every buffer in declaration order as f64 LE, no padding.

#include <cstdint>
#include <filesystem>
#include <variant>
#include <vector>

#include "ema/attention.hpp"

namespace ema {

using AnyParams = std::variant<EmaParams, CaParams, SeParams>;

std::uint32_t kind_tag(AttentionKind kind);

std::vector<std::uint8_t> encode_params(const AnyParams& params);
/// Throws FormatError on bad magic, unknown tag, invalid hyperparameters or a
/// payload whose element count differs from what the header implies.
AnyParams decode_params(std::span<const std::uint8_t> bytes);

void save_params(const std::filesystem::path& path, const AnyParams& params);
AnyParams load_params(const std::filesystem::path& path);

}  // namespace ema
