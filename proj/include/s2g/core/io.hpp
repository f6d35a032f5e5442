#pragma once

// Little-endian array files: an 8-byte header of two uint32 values
// (count, dim) followed by count*dim elements.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace s2g {

/// Malformed or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
struct ArrayFile {
  std::uint32_t count = 0;
  std::uint32_t dim = 0;
  std::vector<T> values;
};

void write_f32_array(const std::filesystem::path& path, std::uint32_t count, std::uint32_t dim,
                     std::span<const float> values);
ArrayFile<float> read_f32_array(const std::filesystem::path& path);

void write_u8_array(const std::filesystem::path& path, std::uint32_t count, std::uint32_t dim,
                    std::span<const std::uint8_t> values);
ArrayFile<std::uint8_t> read_u8_array(const std::filesystem::path& path);

/// Flat `key=value` text (blank lines and '#' comments ignored).
using KeyValues = std::map<std::string, std::string>;
KeyValues read_key_values(const std::filesystem::path& path);
KeyValues parse_key_values(const std::string& text, const std::string& source);
void write_key_values(const std::filesystem::path& path, const KeyValues& kv);

/// Shortest decimal text that round-trips the double exactly.
std::string format_double(double v);

}  // namespace s2g
