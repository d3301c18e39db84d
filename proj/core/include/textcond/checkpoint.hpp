#pragma once

#include <filesystem>
#include <string>

#include "textcond/training.hpp"

namespace textcond {

/// Binary checkpoint, little-endian:
///   "TCG1" | u32 version = 1 | u32 header_len | header_len bytes of JSON
///   | every tensor of ModelParams::tensors() as row-major f64
///   | if the header says so, Adam m then v for each tensor in the same order.
/// The JSON header carries dims, guidance mode, vocabulary words, per-tensor
/// names and sizes, Adam step counters and training metadata.
std::string serialize_checkpoint(const Checkpoint& ck);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace textcond
