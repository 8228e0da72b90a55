#include "epd/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <sstream>

namespace epd::io {

static_assert(std::endian::native == std::endian::little, "raw files are written in native little-endian order");

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  return out;
}

}  // namespace

Index CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error("csv: missing column '" + name + "'");
  return static_cast<Index>(it - header.begin());
}

CsvTable read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  CsvTable t;
  std::string line;
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto cells = split(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) throw Error(path + ": row has " + std::to_string(cells.size()) + " cells");
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw Error(path + ": non-numeric cell '" + c + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw Error(path + ": empty csv");
  t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) t.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  }
  return t;
}

void write_raw_vector(const std::string& path, const Vector& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!os) throw Error("failed writing " + path);
}

Vector read_raw_vector(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw Error("cannot open " + path);
  const auto bytes = static_cast<std::size_t>(is.tellg());
  if (bytes % sizeof(double) != 0) throw Error(path + ": size is not a multiple of 8");
  is.seekg(0);
  Vector v(static_cast<Index>(bytes / sizeof(double)));
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
  if (!is) throw Error(path + ": read failed");
  return v;
}

void write_raw_image(const std::string& path, const Vector& data, Index width, Index height, Index n_materials) {
  require_size(data.size(), width * height * n_materials, "write_raw_image");
  write_raw_vector(path, data);
  std::ofstream side(path + ".txt");
  side << width << ' ' << height << ' ' << n_materials << '\n';
  if (!side) throw Error("failed writing sidecar for " + path);
}

RawImage read_raw_image(const std::string& path) {
  RawImage img;
  std::ifstream side(path + ".txt");
  if (!side || !(side >> img.width >> img.height >> img.n_materials)) throw Error("missing or bad sidecar for " + path);
  img.data = read_raw_vector(path);
  require_size(img.data.size(), img.width * img.height * img.n_materials, path.c_str());
  return img;
}

void write_pgm16(const std::string& path, const Eigen::Ref<const Vector>& pixels, Index width, Index height, double lo,
                 double hi) {
  require_size(pixels.size(), width * height, "write_pgm16");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  os << "P5\n" << width << ' ' << height << "\n65535\n";
  const double span = hi > lo ? hi - lo : 1.0;
  for (Index i = 0; i < pixels.size(); ++i) {
    const double t = std::clamp((pixels(i) - lo) / span, 0.0, 1.0);
    const auto v = static_cast<std::uint16_t>(std::lround(t * 65535.0));
    const std::array<char, 2> be{static_cast<char>(v >> 8), static_cast<char>(v & 0xff)};
    os.write(be.data(), 2);
  }
  if (!os) throw Error("failed writing " + path);
}

std::string sha256_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
  std::array<char, 1 << 16> buf{};
  while (is) {
    is.read(buf.data(), buf.size());
    if (is.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(is.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xf]);
  }
  return out;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return {buf.data(), res.ptr};
}

}  // namespace epd::io
