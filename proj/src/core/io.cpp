#include "s2g/core/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace s2g {

namespace {

static_assert(std::endian::native == std::endian::little,
              "array files are little-endian; add byte swapping for this target");

void write_header(std::ofstream& os, std::uint32_t count, std::uint32_t dim) {
  os.write(reinterpret_cast<const char*>(&count), 4);
  os.write(reinterpret_cast<const char*>(&dim), 4);
}

template <typename T>
void write_array(const std::filesystem::path& path, std::uint32_t count, std::uint32_t dim,
                 std::span<const T> values) {
  if (static_cast<std::uint64_t>(count) * dim != values.size()) {
    throw DataError(path.string() + ": value count does not match header " +
                    std::to_string(count) + "x" + std::to_string(dim));
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  write_header(os, count, dim);
  os.write(reinterpret_cast<const char*>(values.data()),
           static_cast<std::streamsize>(values.size() * sizeof(T)));
  if (!os) throw DataError("write failed: " + path.string());
}

template <typename T>
ArrayFile<T> read_array(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  ArrayFile<T> out;
  std::array<char, 8> header{};
  is.read(header.data(), 8);
  if (is.gcount() != 8) {
    throw DataError(path.filename().string() + ": truncated header (expected 8 bytes)");
  }
  std::memcpy(&out.count, header.data(), 4);
  std::memcpy(&out.dim, header.data() + 4, 4);
  const std::uint64_t n = static_cast<std::uint64_t>(out.count) * out.dim;
  out.values.resize(n);
  is.read(reinterpret_cast<char*>(out.values.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (static_cast<std::uint64_t>(is.gcount()) != n * sizeof(T)) {
    throw DataError(path.filename().string() + ": truncated data section (expected " +
                    std::to_string(n) + " values of " + std::to_string(sizeof(T)) +
                    " bytes, got " + std::to_string(is.gcount()) + " bytes)");
  }
  is.peek();
  if (!is.eof()) throw DataError(path.filename().string() + ": trailing bytes after data section");
  return out;
}

}  // namespace

void write_f32_array(const std::filesystem::path& path, std::uint32_t count, std::uint32_t dim,
                     std::span<const float> values) {
  write_array<float>(path, count, dim, values);
}

ArrayFile<float> read_f32_array(const std::filesystem::path& path) {
  return read_array<float>(path);
}

void write_u8_array(const std::filesystem::path& path, std::uint32_t count, std::uint32_t dim,
                    std::span<const std::uint8_t> values) {
  write_array<std::uint8_t>(path, count, dim, values);
}

ArrayFile<std::uint8_t> read_u8_array(const std::filesystem::path& path) {
  return read_array<std::uint8_t>(path);
}

KeyValues parse_key_values(const std::string& text, const std::string& source) {
  KeyValues kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError(source + ":" + std::to_string(lineno) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_key_values(ss.str(), path.string());
}

void write_key_values(const std::filesystem::path& path, const KeyValues& kv) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

}  // namespace s2g
