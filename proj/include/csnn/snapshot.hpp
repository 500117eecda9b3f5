#pragma once

#include <filesystem>

#include "csnn/network.hpp"

namespace csnn {

// Versioned binary container: magic "CSNN", u32 format version, per-layer
// blocks (geometry, rule, f32 weights/masks/bn stats, little-endian),
// trailing CRC32 over the payload. Round-trips bit-exactly.
void save_snapshot(const Network& net, const std::filesystem::path& path);
Network load_snapshot(const std::filesystem::path& path);

}  // namespace csnn
