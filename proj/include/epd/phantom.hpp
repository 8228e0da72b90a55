#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "epd/common.hpp"
#include "epd/spectral.hpp"

namespace epd {

/// Ellipse with per-material additive values; rotation is counterclockwise in radians.
struct EllipseSpec {
  double cx = 0.0;
  double cy = 0.0;
  double a = 1.0;
  double b = 1.0;
  double rotation = 0.0;
  std::vector<double> values;

  bool contains(double x, double y) const;
};

/// Columns cx, cy, a, b, rotation, value_1, ..., value_D.
std::vector<EllipseSpec> load_ellipses(const std::string& path);
void save_ellipses(const std::vector<EllipseSpec>& specs, const std::string& path);

/// Two-material head-like phantom in [-5, 5]^2: bone skull ring, water brain, small inserts.
std::vector<EllipseSpec> default_head_phantom();

/// Pixel value is the sum of the values of every ellipse containing the pixel center,
/// clamped to [0, 1]. Pixel (r, c) has center (-L + (c + 1/2) h, L - (r + 1/2) h).
Vector generate_phantom(const std::vector<EllipseSpec>& specs, Index n_side, Index n_materials,
                        double domain_extent = 5.0);

/// 10 log10(|clean|^2 / |noisy - clean|^2); +inf when they coincide.
double measure_snr_db(const Vector& clean, const Vector& noisy);

/// K(f_truth), plus white Gaussian noise scaled to the exact SNR when snr_db is finite.
Vector simulate_data(const SpectralForwardOp& op, const Vector& f_truth, std::optional<double> snr_db,
                     std::uint64_t seed);

/// Synthesis coefficients c_d(E) for monochromatic images.
struct MaterialTable {
  Vector energies_kev;
  Matrix synthesis;  ///< one row per energy, one column per material

  Index find(double energy) const;
};

/// Columns energy_kev, c_material_1, ..., c_material_D.
MaterialTable load_material_table(const std::string& path);
void save_material_table(const MaterialTable& t, const std::string& path);

/// sum_d c_d(E) f_d pixelwise.
Vector synthesize_energy_image(const Vector& f, const MaterialTable& table, double energy_kev);

/// Synthetic two-spectrum, two-material (water, bone) tables.
struct SyntheticTables {
  Vector bin_energies_kev;  ///< M energy-bin centers
  Matrix spectra;           ///< M x 2, normalized
  Matrix coeffs;            ///< 2 x M
  MaterialTable synthesis;  ///< 60 and 100 keV rows
};

/// Attenuation-like coefficients scale * (p_d (40/E)^3 + c_d (40/E)^0.3) on M bins
/// starting at 30 keV with 14 keV spacing; a low spectrum peaking near 40 keV and cut
/// above 70 keV, a high spectrum peaking near 100 keV.
SyntheticTables make_synthetic_tables(Index n_bins = 8, double scale = 1.0);

void save_spectra_csv(const Matrix& spectra, const std::string& path);
void save_materials_csv(const Matrix& coeffs, const std::string& path);

}  // namespace epd
