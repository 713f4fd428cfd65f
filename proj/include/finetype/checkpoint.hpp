// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "finetype/param_store.hpp"

namespace finetype {

enum class StorageType { f64, f32 };

inline constexpr int kCheckpointFormatVersion = 1;

/// Parameter values plus free-form metadata (model kind, config, labels).
/// Adam moments are not persisted; a restored store starts a fresh optimizer.
struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  std::map<std::string, std::string> meta;
  ParamStore params;
};

// File layout (see docs/checkpoint_format.md):
//
//   FINETYPE-CHECKPOINT\n
//   format_version <int>\n
//   meta <key> <value to end of line>\n           (zero or more)
//   param <name> <f64|f32> <d0xd1x..> <offset> <count>\n   (one per tensor)
//   end_manifest <data_bytes>\n
//   <little-endian IEEE-754 arrays, manifest order, offsets from here>
void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const std::map<std::string, std::string>& meta,
                     StorageType storage = StorageType::f64);

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Encodes to / decodes from an in-memory byte string (same layout).
std::string encode_checkpoint(const ParamStore& params,
                              const std::map<std::string, std::string>& meta,
                              StorageType storage = StorageType::f64);
Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin = "<memory>");

}  // namespace finetype
