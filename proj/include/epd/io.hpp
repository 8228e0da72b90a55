#pragma once

#include <string>
#include <vector>

#include "epd/common.hpp"

namespace epd::io {

/// Numeric CSV table with a header row.
struct CsvTable {
  std::vector<std::string> header;
  Matrix values;  // rows x columns

  Index column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);

/// Raw float64 little-endian pixels plus a `<path>.txt` sidecar "width height D".
void write_raw_image(const std::string& path, const Vector& data, Index width, Index height, Index n_materials);

struct RawImage {
  Vector data;
  Index width = 0;
  Index height = 0;
  Index n_materials = 1;
};

RawImage read_raw_image(const std::string& path);

/// Raw float64 vector without sidecar (sinograms).
void write_raw_vector(const std::string& path, const Vector& data);
Vector read_raw_vector(const std::string& path);

/// 16-bit binary PGM, values clamped to [lo, hi].
void write_pgm16(const std::string& path, const Eigen::Ref<const Vector>& pixels, Index width, Index height,
                 double lo = 0.0, double hi = 1.0);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace epd::io
