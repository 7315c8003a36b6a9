#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "disent/tensor.hpp"

namespace disent::io {

// Versioned little-endian containers:
//   magic (4 bytes) | format_version (u32) | payload ... | fnv1a64(payload) (u64)
// Readers reject wrong magic, unknown versions, truncation and checksum
// mismatches with a LoadError that names the file format version.

class Writer {
 public:
  Writer(std::string_view magic, std::uint32_t version);

  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v);
  void f64(double v);
  void str(std::string_view s);
  void tensor(const Tensor& t);
  void i32s(const std::vector<int>& v);

  /// Writes to a temporary sibling and renames, so readers never see a partial file.
  void save(const std::filesystem::path& path) const;
  std::string bytes() const;

 private:
  std::string buf_;
};

class Reader {
 public:
  /// Reads and validates the whole file. `what` names the container in errors.
  Reader(const std::filesystem::path& path, std::string_view magic, std::uint32_t version, std::string what);

  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32();
  double f64();
  std::string str();
  Tensor tensor();
  std::vector<int> i32s();

  /// Throws unless every payload byte was consumed.
  void finish() const;

 private:
  void need(std::size_t n) const;
  [[noreturn]] void fail(const std::string& msg) const;

  std::string buf_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;
  std::string what_;
  std::uint32_t version_;
};

}  // namespace disent::io
