#include "epd/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "epd/io.hpp"

namespace epd {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  return os;
}

double basis_coefficient(double p, double c, double energy) {
  const double r = 40.0 / energy;
  return p * r * r * r + c * std::pow(r, 0.3);
}

constexpr double kWaterPhoto = 0.05, kWaterCompton = 0.2;
constexpr double kBonePhoto = 1.0, kBoneCompton = 0.3;

}  // namespace

bool EllipseSpec::contains(double x, double y) const {
  const double dx = x - cx;
  const double dy = y - cy;
  const double c = std::cos(rotation);
  const double s = std::sin(rotation);
  const double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
}

std::vector<EllipseSpec> load_ellipses(const std::string& path) {
  const io::CsvTable t = io::read_csv(path);
  const Index cx = t.column("cx"), cy = t.column("cy"), ca = t.column("a"), cb = t.column("b");
  const Index rot = t.column("rotation");
  std::vector<Index> value_cols;
  for (Index d = 1;; ++d) {
    const auto it = std::find(t.header.begin(), t.header.end(), "value_" + std::to_string(d));
    if (it == t.header.end()) break;
    value_cols.push_back(static_cast<Index>(it - t.header.begin()));
  }
  if (value_cols.empty()) throw Error(path + ": no value_1 column");
  std::vector<EllipseSpec> out;
  for (Index r = 0; r < t.values.rows(); ++r) {
    EllipseSpec e{t.values(r, cx), t.values(r, cy), t.values(r, ca), t.values(r, cb), t.values(r, rot), {}};
    if (!(e.a > 0.0 && e.b > 0.0)) throw DomainError(path + ": semi-axes must be > 0 (row " + std::to_string(r + 1) + ")");
    for (Index c : value_cols) e.values.push_back(t.values(r, c));
    out.push_back(std::move(e));
  }
  return out;
}

void save_ellipses(const std::vector<EllipseSpec>& specs, const std::string& path) {
  auto os = open_out(path);
  const std::size_t d = specs.empty() ? 2 : specs.front().values.size();
  os << "cx,cy,a,b,rotation";
  for (std::size_t i = 1; i <= d; ++i) os << ",value_" << i;
  os << '\n';
  for (const auto& e : specs) {
    os << io::format_double(e.cx) << ',' << io::format_double(e.cy) << ',' << io::format_double(e.a) << ','
       << io::format_double(e.b) << ',' << io::format_double(e.rotation);
    for (double v : e.values) os << ',' << io::format_double(v);
    os << '\n';
  }
}

std::vector<EllipseSpec> default_head_phantom() {
  // values are (water, bone)
  return {
      {0.0, 0.0, 4.2, 4.6, 0.0, {0.0, 0.8}},      // skull
      {0.0, 0.0, 3.85, 4.25, 0.0, {0.9, -0.8}},   // brain replaces the skull interior
      {-1.0, 1.2, 0.5, 1.2, 0.3, {-0.3, 0.0}},    // ventricles
      {1.0, 1.2, 0.5, 1.2, -0.3, {-0.3, 0.0}},
      {0.0, -2.2, 1.4, 0.6, 0.0, {0.0, 0.5}},     // skull base
      {-2.4, -1.0, 0.5, 0.35, 0.0, {-0.4, 0.6}},  // inner ear bones
      {2.4, -1.0, 0.5, 0.35, 0.0, {-0.4, 0.6}},
      {0.0, 2.8, 0.45, 0.45, 0.0, {0.1, 0.0}},    // soft lesion
      {1.6, -0.2, 0.3, 0.3, 0.0, {-0.2, 0.25}},   // calcification
  };
}

Vector generate_phantom(const std::vector<EllipseSpec>& specs, Index n_side, Index n_materials, double domain_extent) {
  if (n_side < 8) throw DomainError("generate_phantom: n_side must be >= 8");
  if (n_materials < 1) throw DomainError("generate_phantom: need at least one material");
  for (const auto& e : specs) {
    if (static_cast<Index>(e.values.size()) != n_materials) throw DimensionError("ellipse material count mismatch");
    if (!(e.a > 0.0 && e.b > 0.0)) throw DomainError("ellipse semi-axes must be > 0");
  }
  const Index n = n_side * n_side;
  const double h = 2.0 * domain_extent / static_cast<double>(n_side);
  Vector f = Vector::Zero(n * n_materials);
  for (Index r = 0; r < n_side; ++r) {
    const double y = domain_extent - (static_cast<double>(r) + 0.5) * h;
    for (Index c = 0; c < n_side; ++c) {
      const double x = -domain_extent + (static_cast<double>(c) + 0.5) * h;
      for (const auto& e : specs) {
        if (!e.contains(x, y)) continue;
        for (Index d = 0; d < n_materials; ++d) f(d * n + r * n_side + c) += e.values[static_cast<std::size_t>(d)];
      }
    }
  }
  return f.cwiseMax(0.0).cwiseMin(1.0);
}

double measure_snr_db(const Vector& clean, const Vector& noisy) {
  require_size(noisy.size(), clean.size(), "measure_snr_db");
  const double noise = (noisy - clean).squaredNorm();
  if (noise == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(clean.squaredNorm() / noise);
}

Vector simulate_data(const SpectralForwardOp& op, const Vector& f_truth, std::optional<double> snr_db,
                     std::uint64_t seed) {
  Vector g = forward(op, f_truth);
  if (!snr_db || std::isinf(*snr_db)) return g;
  if (std::isnan(*snr_db)) throw DomainError("simulate_data: snr_db is NaN");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector e(g.size());
  for (Index i = 0; i < e.size(); ++i) e(i) = normal(rng);
  const double target = g.norm() * std::pow(10.0, -*snr_db / 20.0);
  const double en = e.norm();
  if (en > 0.0) g += (target / en) * e;
  return g;
}

Index MaterialTable::find(double energy) const {
  for (Index i = 0; i < energies_kev.size(); ++i) {
    if (std::abs(energies_kev(i) - energy) <= 1e-9 * std::max(1.0, std::abs(energy))) return i;
  }
  throw DomainError("material table has no entry for " + io::format_double(energy) + " keV");
}

MaterialTable load_material_table(const std::string& path) {
  const io::CsvTable t = io::read_csv(path);
  const Index ec = t.column("energy_kev");
  MaterialTable out;
  out.energies_kev = t.values.col(ec);
  out.synthesis.resize(t.values.rows(), t.values.cols() - 1);
  for (Index c = 0, d = 0; c < t.values.cols(); ++c) {
    if (c != ec) out.synthesis.col(d++) = t.values.col(c);
  }
  return out;
}

void save_material_table(const MaterialTable& t, const std::string& path) {
  auto os = open_out(path);
  os << "energy_kev";
  for (Index d = 1; d <= t.synthesis.cols(); ++d) os << ",c_material_" << d;
  os << '\n';
  for (Index i = 0; i < t.energies_kev.size(); ++i) {
    os << io::format_double(t.energies_kev(i));
    for (Index d = 0; d < t.synthesis.cols(); ++d) os << ',' << io::format_double(t.synthesis(i, d));
    os << '\n';
  }
}

Vector synthesize_energy_image(const Vector& f, const MaterialTable& table, double energy_kev) {
  const Index row = table.find(energy_kev);
  const Index d = table.synthesis.cols();
  if (d == 0 || f.size() % d != 0) throw DimensionError("synthesize_energy_image: image size not divisible by D");
  return as_columns(f, f.size() / d) * table.synthesis.row(row).transpose();
}

SyntheticTables make_synthetic_tables(Index n_bins, double scale) {
  if (n_bins < 1) throw DomainError("make_synthetic_tables: need at least one bin");
  SyntheticTables t;
  t.bin_energies_kev.resize(n_bins);
  t.spectra.resize(n_bins, 2);
  t.coeffs.resize(2, n_bins);
  for (Index m = 0; m < n_bins; ++m) {
    const double e = 30.0 + 14.0 * static_cast<double>(m);
    t.bin_energies_kev(m) = e;
    const double lo = (e - 40.0) / 10.0;
    const double hi = (e - 100.0) / 15.0;
    t.spectra(m, 0) = e <= 70.0 ? std::exp(-0.5 * lo * lo) : 0.0;
    t.spectra(m, 1) = std::exp(-0.5 * hi * hi);
    t.coeffs(0, m) = scale * basis_coefficient(kWaterPhoto, kWaterCompton, e);
    t.coeffs(1, m) = scale * basis_coefficient(kBonePhoto, kBoneCompton, e);
  }
  normalize_spectra(t.spectra);
  t.synthesis.energies_kev = Vector{{60.0, 100.0}};
  t.synthesis.synthesis.resize(2, 2);
  for (Index i = 0; i < 2; ++i) {
    const double e = t.synthesis.energies_kev(i);
    t.synthesis.synthesis(i, 0) = basis_coefficient(kWaterPhoto, kWaterCompton, e);
    t.synthesis.synthesis(i, 1) = basis_coefficient(kBonePhoto, kBoneCompton, e);
  }
  return t;
}

void save_spectra_csv(const Matrix& spectra, const std::string& path) {
  auto os = open_out(path);
  os << "energy_bin_index";
  for (Index k = 1; k <= spectra.cols(); ++k) os << ",weight_spectrum_" << k;
  os << '\n';
  for (Index m = 0; m < spectra.rows(); ++m) {
    os << m;
    for (Index k = 0; k < spectra.cols(); ++k) os << ',' << io::format_double(spectra(m, k));
    os << '\n';
  }
}

void save_materials_csv(const Matrix& coeffs, const std::string& path) {
  auto os = open_out(path);
  os << "energy_bin_index";
  for (Index d = 1; d <= coeffs.rows(); ++d) os << ",b_material_" << d;
  os << '\n';
  for (Index m = 0; m < coeffs.cols(); ++m) {
    os << m;
    for (Index d = 0; d < coeffs.rows(); ++d) os << ',' << io::format_double(coeffs(d, m));
    os << '\n';
  }
}

}  // namespace epd
