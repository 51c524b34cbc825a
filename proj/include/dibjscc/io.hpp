#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dibjscc/errors.hpp"

namespace dibjscc {

inline std::vector<std::uint8_t> read_binary_file(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  auto len = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(len));
  if (len > 0) in.read(reinterpret_cast<char*>(buf.data()), len);
  if (!in) throw io_error("short read on " + path.string());
  return buf;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  auto bytes = read_binary_file(path);
  return std::string(bytes.begin(), bytes.end());
}

// Writes via a sibling temp file and rename, so readers never observe a
// partially written file.
inline void write_binary_file(const std::filesystem::path& path,
                              const void* data, std::size_t len) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot create " + tmp.string());
    if (len > 0) out.write(static_cast<const char*>(data),
                           static_cast<std::streamsize>(len));
    if (!out) throw io_error("short write on " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw io_error("rename " + tmp.string() + " -> " + path.string() +
                         ": " + ec.message());
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& text) {
  write_binary_file(path, text.data(), text.size());
}

inline nlohmann::json load_json_file(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw io_error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline void save_json_file(const std::filesystem::path& path,
                           const nlohmann::json& j, int indent = 2) {
  write_text_file(path, j.dump(indent) + "\n");
}

namespace detail {

// Fixed little-endian u32 framing for binary headers.
inline void append_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  buf.push_back(static_cast<std::uint8_t>(v & 0xff));
  buf.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  buf.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  buf.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

inline std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

}  // namespace dibjscc
