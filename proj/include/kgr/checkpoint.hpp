// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint container, all integers little-endian:
//
//   "KGN1" u32 version u32 entry_count
//   entry: u32 name_len, name, u8 dtype, u32 ndim, u64 dims[ndim],
//          u64 payload_bytes, payload
//
// dtype 0 is float32, 1 raw bytes, 2 int64. Parameters are float32;
// entries under "meta." hold the config text, vocabulary, graph and seed.
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "kgr/model.hpp"

namespace kgr {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { kF32 = 0, kBytes = 1, kI64 = 2 };

struct CheckpointEntry {
  std::string name;
  DType dtype = DType::kF32;
  std::vector<std::uint64_t> shape;
  std::string payload;
};

std::string encode_entries(const std::vector<CheckpointEntry>& entries, std::uint32_t version = kCheckpointVersion);
/// Throws FormatError on bad magic, version mismatch or truncation.
std::vector<CheckpointEntry> decode_entries(std::string_view bytes);

std::string serialize_checkpoint(const ReportModel& model);
ReportModel deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::string& path, const ReportModel& model);
ReportModel load_checkpoint(const std::string& path);

}  // namespace kgr
