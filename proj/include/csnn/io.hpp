#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace csnn {

// Temp-file + rename so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path,
                       const void* data, std::size_t size);
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& text);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

std::uint32_t crc32(const void* data, std::size_t size);

// FNV-1a over raw bytes; used for dataset/content digests.
std::uint64_t fnv1a64(const void* data, std::size_t size);

// Binary PPM (P6, rgb) / PGM (P5, gray), 8-bit.
void write_ppm(const std::filesystem::path& path, std::size_t h, std::size_t w,
               const std::vector<std::uint8_t>& rgb);
void write_pgm(const std::filesystem::path& path, std::size_t h, std::size_t w,
               const std::vector<std::uint8_t>& gray);

}  // namespace csnn
