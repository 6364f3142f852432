#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace oki {

// -- error taxonomy ----------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input document (bad JSON, bad TSV row, bad binary header).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Structurally invalid data: is-a cycles, dangling references.
class StructureError : public Error {
 public:
  using Error::Error;
};

// Unknown id / missing entry.
class LookupError : public Error {
 public:
  using Error::Error;
};

// Violated value-level precondition (zero vector, empty text, bad range).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Dimension mismatch between vectors / matrices / caches.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class CacheError : public Error {
 public:
  using Error::Error;
};

// Remote service failure that survived the retry policy.
class ProviderError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class PipelineError : public Error {
 public:
  using Error::Error;
};

// -- string helpers ----------------------------------------------------------

inline bool is_ascii_alnum(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

inline char lower_ascii_char(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

std::string lower_ascii(std::string_view s);
bool iequals_ascii(std::string_view a, std::string_view b);
std::string trim(std::string_view s);
std::string collapse_whitespace(std::string_view s);  // also trims
std::vector<std::string> split(std::string_view s, char sep);

// -- hashing / rng -----------------------------------------------------------

std::uint64_t fnv1a64(std::string_view s);
std::uint64_t mix64(std::uint64_t a, std::uint64_t b);

// Deterministic PRNG with a platform-independent sequence. Used wherever a
// seeded draw must reproduce bit-for-bit across standard libraries.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform draw in [0, n); n must be > 0
  std::uint64_t bounded(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  double unit() {  // [0, 1)
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

template <typename T>
void deterministic_shuffle(std::vector<T>& v, SplitMix64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.bounded(i));
    std::swap(v[i - 1], v[j]);
  }
}

std::string sha256_hex(std::string_view data);

// -- file helpers ------------------------------------------------------------

bool file_exists(const std::filesystem::path& p);
std::string read_text_file(const std::filesystem::path& p);
// Write via temp file + rename so readers never observe partial output.
void atomic_write_file(const std::filesystem::path& p, std::string_view content);
std::string file_digest(const std::filesystem::path& p);  // sha256 of contents

// Calls fn(line, line_number) for every non-empty line (1-based numbering).
void for_each_line(std::istream& in,
                   const std::function<void(const std::string&, std::size_t)>& fn);

// -- little-endian binary io -------------------------------------------------

void put_u8(std::string& out, std::uint8_t v);
void put_u32(std::string& out, std::uint32_t v);
void put_u64(std::string& out, std::uint64_t v);
void put_f32(std::string& out, float v);
void put_f64(std::string& out, double v);

class BinaryReader {
 public:
  explicit BinaryReader(std::string_view data) : data_(data) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string bytes(std::size_t n);
  bool exhausted() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n);
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace oki
