#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "netspectra/common.hpp"

namespace netspectra {

/// Writes via a temporary file in the same directory, then renames.
void atomic_write(const std::string& path, const std::string& payload);

/// Hex SHA-256 of a byte string (content hash used in run manifests).
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

std::string read_file(const std::string& path);

// Little-endian float64 payload helpers shared by the binary formats.
void append_f64(std::string& out, const double* data, std::size_t count);
void read_f64(const std::string& bytes, std::size_t offset, double* out, std::size_t count);

struct CsvWriter {
  explicit CsvWriter(std::string path);
  void header(const std::vector<std::string>& columns);
  void comment(const std::string& line);  // "# ..." preamble line
  void row(const std::vector<double>& values);
  void row_raw(const std::string& line);
  void flush();  // atomic write on flush

 private:
  std::string path_;
  std::string buffer_;
  bool flushed_ = false;
};

}  // namespace netspectra
