#include "calib/serialize.hpp"

#include "calib/error.hpp"

#include <array>
#include <cstring>

namespace calib::io {

namespace {

constexpr std::array<char, 8> kMagic = {'C', 'A', 'L', 'I', 'B', 'C', 'K', 'P'};
constexpr std::uint32_t kByteOrder = 0x01020304u;
constexpr std::uint64_t kMaxString = 1u << 20;

}  // namespace

const char* to_string(ModelKind kind) noexcept {
  switch (kind) {
    case ModelKind::Lda: return "lda";
    case ModelKind::Qda: return "qda";
    case ModelKind::Cda: return "cda";
    case ModelKind::Pca: return "pca";
  }
  return "unknown";
}

CheckpointWriter::CheckpointWriter(const std::string& path, ModelKind kind)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) fail(ErrorCode::IoError, "cannot open " + path + " for writing");
  raw(kMagic.data(), kMagic.size());
  const std::uint32_t header[3] = {kCheckpointVersion, kByteOrder, static_cast<std::uint32_t>(kind)};
  raw(header, sizeof header);
}

void CheckpointWriter::raw(const void* data, std::size_t n) {
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void CheckpointWriter::put_u64(std::uint64_t v) { raw(&v, sizeof v); }
void CheckpointWriter::put_f64(double v) { raw(&v, sizeof v); }

void CheckpointWriter::put_string(const std::string& s) {
  put_u64(s.size());
  raw(s.data(), s.size());
}

void CheckpointWriter::put_vector(const Vector& v) {
  put_u64(static_cast<std::uint64_t>(v.size()));
  raw(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
}

void CheckpointWriter::put_matrix(const Matrix& m) {
  put_u64(static_cast<std::uint64_t>(m.rows()));
  put_u64(static_cast<std::uint64_t>(m.cols()));
  raw(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
}

void CheckpointWriter::finish() {
  out_.flush();
  if (!out_) fail(ErrorCode::IoError, "failed writing " + path_);
  out_.close();
}

CheckpointReader::CheckpointReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
  if (!in_) fail(ErrorCode::IoError, "cannot open " + path);
  std::array<char, 8> magic{};
  raw(magic.data(), magic.size());
  if (magic != kMagic) fail(ErrorCode::BadMagic, path + " is not a calib checkpoint");
  std::uint32_t header[3];
  raw(header, sizeof header);
  if (header[1] != kByteOrder) fail(ErrorCode::FormatError, path + " was written with a different byte order");
  if (header[0] != kCheckpointVersion) {
    fail(ErrorCode::FormatError, path + " has unsupported version " + std::to_string(header[0]));
  }
  if (header[2] < 1 || header[2] > 4) fail(ErrorCode::FormatError, path + " has unknown model kind");
  kind_ = static_cast<ModelKind>(header[2]);
}

void CheckpointReader::raw(void* data, std::size_t n) {
  in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) fail(ErrorCode::TruncatedFile, path_ + " ends early");
}

std::uint64_t CheckpointReader::get_u64() {
  std::uint64_t v;
  raw(&v, sizeof v);
  return v;
}

double CheckpointReader::get_f64() {
  double v;
  raw(&v, sizeof v);
  return v;
}

std::string CheckpointReader::get_string() {
  const std::uint64_t n = get_u64();
  if (n > kMaxString) fail(ErrorCode::FormatError, "string record too long");
  std::string s(n, '\0');
  raw(s.data(), n);
  return s;
}

Vector CheckpointReader::get_vector_any(std::uint64_t max_size) {
  const std::uint64_t n = get_u64();
  if (n > max_size) fail(ErrorCode::FormatError, "vector record larger than declared shape");
  Vector v(static_cast<Eigen::Index>(n));
  raw(v.data(), sizeof(double) * n);
  return v;
}

Vector CheckpointReader::get_vector(std::uint64_t expected_size) {
  Vector v = get_vector_any(expected_size);
  if (static_cast<std::uint64_t>(v.size()) != expected_size) {
    fail(ErrorCode::FormatError, "vector record has size " + std::to_string(v.size()) + ", expected " +
                                     std::to_string(expected_size));
  }
  return v;
}

Matrix CheckpointReader::get_matrix_any(std::uint64_t max_rows, std::uint64_t max_cols) {
  const std::uint64_t r = get_u64();
  const std::uint64_t c = get_u64();
  if (r > max_rows || c > max_cols) fail(ErrorCode::FormatError, "matrix record larger than declared shape");
  Matrix m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  raw(m.data(), sizeof(double) * r * c);
  return m;
}

Matrix CheckpointReader::get_matrix(std::uint64_t expected_rows, std::uint64_t expected_cols) {
  Matrix m = get_matrix_any(expected_rows, expected_cols);
  if (static_cast<std::uint64_t>(m.rows()) != expected_rows || static_cast<std::uint64_t>(m.cols()) != expected_cols) {
    fail(ErrorCode::FormatError, "matrix record has the wrong shape");
  }
  return m;
}

void CheckpointReader::expect_end() {
  if (in_.peek() != std::char_traits<char>::eof()) fail(ErrorCode::FormatError, path_ + " has trailing bytes");
}

ModelKind peek_kind(const std::string& path) { return CheckpointReader(path).kind(); }

}  // namespace calib::io
