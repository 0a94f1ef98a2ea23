#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vaentropy/autodiff/params.hpp"
#include "vaentropy/models/vae.hpp"

namespace vaentropy::harness {

// Layout (little-endian):
//   "VAEC"  u32 version = 1  u32 record count
//   per record: u32 name length, name bytes (UTF-8), u32 rank, u32 dims[rank],
//               f64 payload[product(dims)]
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const autodiff::ParamVector& params);
/// Errors are DataError with the byte offset: bad magic (offset 0), unsupported
/// version (offset 4), truncation, and dimension products that overflow.
autodiff::ParamVector decode_checkpoint(std::span<const std::uint8_t> bytes);

void checkpoint_save(const models::VaeModel& model, const std::filesystem::path& path);
/// Rebuilds the architecture from the stored slot names and shapes.
models::VaeModel checkpoint_load(const std::filesystem::path& path);

}  // namespace vaentropy::harness
