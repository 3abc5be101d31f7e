#pragma once

// Logit-gradient dumps (LGRD).
//
// Binary layout, all little-endian:
//   offset 0   4 bytes   ASCII "LGRD"
//   offset 4   uint32    version (= 1)
//   offset 8   uint32    N (examples)
//   offset 12  uint32    C (classes / logits)
//   offset 16  uint32    D (weights)
//   offset 20  N*C*D     float64 values, example-major, logit-next, weight-last
//   then       N         int32 labels in [0, C)
// The file length must match exactly.
//
// CSV alternative (selected by a .csv extension): N*C rows of D reals in the
// same order, no header; labels in the sidecar "<stem>.labels.csv", one
// integer per line. C is inferred as rows / labels.

#include "lossgeom/csv.hpp"
#include "lossgeom/gradient_hessian.hpp"
#include "lossgeom/types.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace lossgeom {

struct LogitGradientDump {
  GradientTensor tensor;
  std::vector<int> labels;
};

class DumpError : public IoError {
 public:
  enum class Kind { unreadable, bad_magic, bad_version, bad_header, truncated, trailing_data, label_out_of_range, malformed };

  DumpError(Kind kind, const std::string& message) : IoError(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::array<char, 4> dump_magic = {'L', 'G', 'R', 'D'};
inline constexpr std::uint32_t dump_version = 1;
inline constexpr std::size_t dump_header_bytes = 20;

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

inline void check_dump(const LogitGradientDump& dump) {
  const auto& t = dump.tensor;
  if (t.n_examples < 1 || t.n_classes < 1 || t.n_weights() < 1 || t.data.rows() != t.n_examples * t.n_classes)
    throw ValidationError("dump tensor has inconsistent shape");
  if (static_cast<Index>(dump.labels.size()) != t.n_examples)
    throw ValidationError("dump label count does not match N");
}

inline void check_label_range(const std::vector<int>& labels, Index c, const std::string& path) {
  for (std::size_t mu = 0; mu < labels.size(); ++mu)
    if (labels[mu] < 0 || labels[mu] >= c)
      throw DumpError(DumpError::Kind::label_out_of_range,
                      path + ": label " + std::to_string(labels[mu]) + " of example " + std::to_string(mu) +
                          " is outside [0, " + std::to_string(c) + ")");
}

inline std::filesystem::path label_sidecar(const std::filesystem::path& csv_path) {
  auto sidecar = csv_path;
  sidecar.replace_extension(".labels.csv");
  return sidecar;
}

}  // namespace detail

inline void write_dump_binary(const std::filesystem::path& path, const LogitGradientDump& dump) {
  detail::check_dump(dump);
  const auto& t = dump.tensor;
  std::vector<unsigned char> bytes;
  bytes.reserve(dump_header_bytes + static_cast<std::size_t>(t.data.size()) * 8 + dump.labels.size() * 4);
  bytes.insert(bytes.end(), dump_magic.begin(), dump_magic.end());
  detail::put_u32(bytes, dump_version);
  detail::put_u32(bytes, static_cast<std::uint32_t>(t.n_examples));
  detail::put_u32(bytes, static_cast<std::uint32_t>(t.n_classes));
  detail::put_u32(bytes, static_cast<std::uint32_t>(t.n_weights()));
  const double* values = t.data.data();
  for (Index i = 0; i < t.data.size(); ++i) detail::put_u64(bytes, std::bit_cast<std::uint64_t>(values[i]));
  for (int y : dump.labels) detail::put_u32(bytes, static_cast<std::uint32_t>(y));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline LogitGradientDump read_dump_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DumpError(DumpError::Kind::unreadable, "cannot open dump '" + path.string() + "'");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = path.string();

  if (bytes.size() >= 4 && std::memcmp(bytes.data(), dump_magic.data(), 4) != 0)
    throw DumpError(DumpError::Kind::bad_magic, where + ": bad magic, expected \"LGRD\"");
  if (bytes.size() < dump_header_bytes)
    throw DumpError(DumpError::Kind::truncated, where + ": truncated header, expected " +
                                                    std::to_string(dump_header_bytes) + " bytes, got " +
                                                    std::to_string(bytes.size()));
  const std::uint32_t version = detail::get_u32(bytes.data() + 4);
  if (version != dump_version)
    throw DumpError(DumpError::Kind::bad_version, where + ": unsupported version " + std::to_string(version));
  const std::uint64_t n = detail::get_u32(bytes.data() + 8);
  const std::uint64_t c = detail::get_u32(bytes.data() + 12);
  const std::uint64_t d = detail::get_u32(bytes.data() + 16);
  if (n == 0 || c == 0 || d == 0)
    throw DumpError(DumpError::Kind::bad_header, where + ": N, C and D must be positive");

  const unsigned __int128 expected = static_cast<unsigned __int128>(dump_header_bytes) +
                                     static_cast<unsigned __int128>(n) * c * d * 8 +
                                     static_cast<unsigned __int128>(n) * 4;
  const auto expected_text = [&] {
    std::string s;
    unsigned __int128 v = expected;
    do {
      s.insert(s.begin(), static_cast<char>('0' + static_cast<int>(v % 10)));
      v /= 10;
    } while (v != 0);
    return s;
  }();
  if (bytes.size() < expected)
    throw DumpError(DumpError::Kind::truncated, where + ": truncated payload, expected " + expected_text +
                                                    " bytes, got " + std::to_string(bytes.size()));
  if (bytes.size() > expected)
    throw DumpError(DumpError::Kind::trailing_data, where + ": " +
                                                        std::to_string(bytes.size() - static_cast<std::size_t>(expected)) +
                                                        " unexpected trailing bytes after " + expected_text);

  LogitGradientDump dump;
  auto& t = dump.tensor;
  t.n_examples = static_cast<Index>(n);
  t.n_classes = static_cast<Index>(c);
  t.data.resize(static_cast<Index>(n * c), static_cast<Index>(d));
  const unsigned char* p = bytes.data() + dump_header_bytes;
  double* values = t.data.data();
  for (Index i = 0; i < t.data.size(); ++i, p += 8) values[i] = std::bit_cast<double>(detail::get_u64(p));
  dump.labels.resize(n);
  for (auto& y : dump.labels) {
    y = static_cast<int>(static_cast<std::int32_t>(detail::get_u32(p)));
    p += 4;
  }
  detail::check_label_range(dump.labels, t.n_classes, where);
  return dump;
}

inline void write_dump_csv(const std::filesystem::path& path, const LogitGradientDump& dump) {
  detail::check_dump(dump);
  CsvTable values;
  const auto& t = dump.tensor;
  values.rows.resize(static_cast<std::size_t>(t.data.rows()));
  for (Index r = 0; r < t.data.rows(); ++r)
    values.rows[static_cast<std::size_t>(r)].assign(t.data.row(r).data(), t.data.row(r).data() + t.n_weights());
  write_csv(path, values);
  CsvTable labels;
  for (int y : dump.labels) labels.rows.push_back({static_cast<double>(y)});
  write_csv(detail::label_sidecar(path), labels);
}

inline LogitGradientDump read_dump_csv(const std::filesystem::path& path) {
  const auto sidecar = detail::label_sidecar(path);
  CsvTable values;
  CsvTable labels;
  try {
    values = read_csv(path, false);
    labels = read_csv(sidecar, false);
  } catch (const IoError& e) {
    throw DumpError(DumpError::Kind::malformed, e.what());
  }
  const std::size_t n = labels.rows.size();
  if (n == 0 || values.rows.empty())
    throw DumpError(DumpError::Kind::malformed, path.string() + ": empty gradient or label file");
  if (values.rows.size() % n != 0)
    throw DumpError(DumpError::Kind::truncated, path.string() + ": " + std::to_string(values.rows.size()) +
                                                    " gradient rows is not a multiple of " + std::to_string(n) +
                                                    " labels");
  const std::size_t d = values.rows.front().size();
  LogitGradientDump dump;
  auto& t = dump.tensor;
  t.n_examples = static_cast<Index>(n);
  t.n_classes = static_cast<Index>(values.rows.size() / n);
  t.data.resize(static_cast<Index>(values.rows.size()), static_cast<Index>(d));
  for (std::size_t r = 0; r < values.rows.size(); ++r) {
    if (values.rows[r].size() != d)
      throw DumpError(DumpError::Kind::malformed, path.string() + ":" + std::to_string(r + 1) + ": expected " +
                                                      std::to_string(d) + " columns, got " +
                                                      std::to_string(values.rows[r].size()));
    for (std::size_t j = 0; j < d; ++j) t.data(static_cast<Index>(r), static_cast<Index>(j)) = values.rows[r][j];
  }
  for (std::size_t mu = 0; mu < n; ++mu) {
    const auto& row = labels.rows[mu];
    if (row.size() != 1 || !(std::abs(row[0]) < 2147483648.0) || row[0] != std::trunc(row[0]))
      throw DumpError(DumpError::Kind::malformed, sidecar.string() + ":" + std::to_string(mu + 1) +
                                                      ": expected one integer label");
    dump.labels.push_back(static_cast<int>(row[0]));
  }
  detail::check_label_range(dump.labels, t.n_classes, sidecar.string());
  return dump;
}

inline bool is_csv_path(const std::filesystem::path& path) { return path.extension() == ".csv"; }

inline void write_dump(const std::filesystem::path& path, const LogitGradientDump& dump) {
  is_csv_path(path) ? write_dump_csv(path, dump) : write_dump_binary(path, dump);
}

inline LogitGradientDump read_dump(const std::filesystem::path& path) {
  return is_csv_path(path) ? read_dump_csv(path) : read_dump_binary(path);
}

}  // namespace lossgeom
