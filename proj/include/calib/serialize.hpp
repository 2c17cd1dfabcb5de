#pragma once

// Versioned binary checkpoint container shared by every model kind.
//
// Layout: 8-byte magic "CALIBCKP", u32 format version, u32 byte-order marker
// 0x01020304 written in host order, u32 model kind, then a sequence of
// records. Integers are u64 and reals IEEE-754 doubles in host byte order; a
// reader on a host of the other endianness rejects the file on the marker.
// Matrices are stored as (rows, cols) followed by column-major data.

#include "calib/linalg.hpp"

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace calib::io {

enum class ModelKind : std::uint32_t { Lda = 1, Qda = 2, Cda = 3, Pca = 4 };

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointWriter {
 public:
  CheckpointWriter(const std::string& path, ModelKind kind);

  void put_u64(std::uint64_t v);
  void put_f64(double v);
  void put_string(const std::string& s);
  void put_vector(const Vector& v);
  void put_matrix(const Matrix& m);
  // Flushes and throws IoError if any write failed.
  void finish();

 private:
  void raw(const void* data, std::size_t n);

  std::string path_;
  std::ofstream out_;
};

class CheckpointReader {
 public:
  // Validates magic, version and byte order; throws BadMagic / FormatError.
  explicit CheckpointReader(const std::string& path);

  ModelKind kind() const noexcept { return kind_; }

  std::uint64_t get_u64();
  double get_f64();
  std::string get_string();
  // Exact shapes; declared lengths are checked before any allocation.
  Vector get_vector(std::uint64_t expected_size);
  Matrix get_matrix(std::uint64_t expected_rows, std::uint64_t expected_cols);
  // Shapes bounded from above only.
  Vector get_vector_any(std::uint64_t max_size);
  Matrix get_matrix_any(std::uint64_t max_rows, std::uint64_t max_cols);
  // Throws FormatError when bytes remain after the last record.
  void expect_end();

 private:
  void raw(void* data, std::size_t n);

  std::string path_;
  std::ifstream in_;
  ModelKind kind_ = ModelKind::Lda;
};

ModelKind peek_kind(const std::string& path);
const char* to_string(ModelKind kind) noexcept;

}  // namespace calib::io
