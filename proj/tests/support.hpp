#pragma once

#include <random>
#include <vector>

#include "epd/linops.hpp"
#include "epd/phantom.hpp"
#include "epd/spectral.hpp"

namespace epd::testing {

inline SystemMatrix sparse_from_dense(const Matrix& a) {
  SystemMatrix m;
  m.rows = a.sparseView().cast<double>();
  return m;
}

inline Vector uniform(Index n, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Vector x(n);
  for (Index i = 0; i < n; ++i) x(i) = d(rng);
  return x;
}

inline Vector gaussian(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Vector x(n);
  for (Index i = 0; i < n; ++i) x(i) = d(rng);
  return x;
}

inline double rel_diff(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

inline double rel_diff(const Vector& a, const Vector& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

/// Model with one spectrum per ray taken from `spectra` columns by index.
inline SpectralForwardOp make_op(const Matrix& a, const Matrix& spectra, const Matrix& coeffs,
                                 std::vector<Index> ray_spectrum) {
  return SpectralForwardOp(sparse_from_dense(a), SpectralModel{spectra, coeffs, std::move(ray_spectrum)});
}

/// Dual-scan geometry with the synthetic two-material tables, scaled so K is well curved.
struct SmallProblem {
  GeometrySpec geometry;
  SpectralForwardOp op;
};

inline SmallProblem small_problem(Index n_side, Index n_bins, Index views, Index energy_bins = 8, double scale = 0.08) {
  GeometrySpec g = GeometrySpec::dual_scan(n_side, n_bins, views, std::numbers::pi / 120.0);
  const SyntheticTables t = make_synthetic_tables(energy_bins, scale);
  SpectralModel model{t.spectra, t.coeffs, SpectralModel::dual_assignment(g)};
  return {g, SpectralForwardOp(build_parallel_projector(g), std::move(model))};
}

/// Same projector with a single energy bin, so K is linear.
inline SpectralForwardOp linear_variant(const SpectralForwardOp& op, double b1 = 0.2, double b2 = 0.5) {
  Matrix spectra = Matrix::Ones(1, op.model().n_spectra());
  Matrix coeffs(op.n_materials(), 1);
  for (Index d = 0; d < op.n_materials(); ++d) coeffs(d, 0) = d == 0 ? b1 : b2;
  return SpectralForwardOp(op.matrix(), SpectralModel{spectra, coeffs, op.model().ray_spectrum});
}

}  // namespace epd::testing
