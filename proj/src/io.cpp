#include "csnn/io.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include "csnn/common.hpp"

namespace csnn {

void write_file_atomic(const std::filesystem::path& path, const void* data,
                       std::size_t size) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(static_cast<const char*>(data),
              static_cast<std::streamsize>(size));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::string& text) {
  write_file_atomic(path, text.data(), text.size());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw DataError("cannot open " + path.string());
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(size));
  if (size > 0) in.read(reinterpret_cast<char*>(buf.data()), size);
  if (!in) throw DataError("short read from " + path.string());
  return buf;
}

std::string read_text_file(const std::filesystem::path& path) {
  const auto buf = read_file(path);
  return std::string(buf.begin(), buf.end());
}

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k)
      c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
    table[i] = c;
  }
  return table;
}

}  // namespace

std::uint32_t crc32(const void* data, std::size_t size) {
  static const auto table = make_crc_table();
  const auto* p = static_cast<const std::uint8_t*>(data);
  std::uint32_t c = 0xffffffffu;
  for (std::size_t i = 0; i < size; ++i)
    c = table[(c ^ p[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_ppm(const std::filesystem::path& path, std::size_t h, std::size_t w,
               const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != h * w * 3) throw DimensionError("ppm buffer size mismatch");
  std::string header =
      "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), rgb.begin(), rgb.end());
  write_file_atomic(path, out.data(), out.size());
}

void write_pgm(const std::filesystem::path& path, std::size_t h, std::size_t w,
               const std::vector<std::uint8_t>& gray) {
  if (gray.size() != h * w) throw DimensionError("pgm buffer size mismatch");
  std::string header =
      "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), gray.begin(), gray.end());
  write_file_atomic(path, out.data(), out.size());
}

}  // namespace csnn
