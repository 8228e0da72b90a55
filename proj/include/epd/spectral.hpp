#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "epd/common.hpp"
#include "epd/linops.hpp"

namespace epd {

/// Spectra and basis-material coefficients for the log-sum-exp forward model
///
///   K_j(f) = ln sum_m s_jm exp(-sum_d b_dm a_j^T f_d).
///
/// Each ray uses one of the stored spectra; `ray_spectrum[j]` names which.
struct SpectralModel {
  Matrix spectra;                    ///< M x S, column k is spectrum k (nonnegative, sums to 1)
  Matrix coeffs;                     ///< D x M, b_dm > 0
  std::vector<Index> ray_spectrum;   ///< J entries in [0, S)

  Index n_energy_bins() const { return coeffs.cols(); }
  Index n_materials() const { return coeffs.rows(); }
  Index n_spectra() const { return spectra.cols(); }
  Index n_rays() const { return static_cast<Index>(ray_spectrum.size()); }

  /// True when K is linear in f (one bin, or every b_d constant across bins).
  bool is_linear() const;

  void validate() const;

  /// Assigns spectrum 0 to the low-energy views and spectrum 1 to the high-energy views.
  static std::vector<Index> dual_assignment(const GeometrySpec& geom);
};

/// Loads spectra (energy_bin_index, weight_spectrum_1, ...) and materials
/// (energy_bin_index, b_material_1, ...) CSV files. Spectra are renormalized;
/// a warning is written to `warnings` when a column was off by more than 1e-9.
SpectralModel load_spectral_model(const std::string& spectra_csv, const std::string& materials_csv,
                                  std::vector<Index> ray_spectrum, std::string* warnings = nullptr);

/// Renormalizes each spectrum column to unit sum; returns the largest deviation seen.
double normalize_spectra(Matrix& spectra);

/// K for spectral CT: the shared single-material projector plus the model.
class SpectralForwardOp {
 public:
  SpectralForwardOp(SystemMatrix matrix, SpectralModel model);

  const SystemMatrix& matrix() const { return matrix_; }
  const SpectralModel& model() const { return model_; }
  Index n_rays() const { return matrix_.n_rows(); }
  Index n_pixels() const { return matrix_.n_cols(); }
  Index n_materials() const { return model_.n_materials(); }
  Index image_size() const { return n_pixels() * n_materials(); }
  const Vector& row_norms() const { return row_norms_; }

  /// Line integrals p_jd = a_j^T f_d as a J x D matrix.
  Matrix project(const Vector& f) const;
  /// sum_d A^T (W_d) stacked over materials; W is J x D.
  Vector back_project(const Matrix& w) const;

  /// K evaluated from precomputed line integrals.
  Vector forward_from_projection(const Matrix& p) const;
  /// Softmax weights (J x M) from line integrals.
  Matrix softmax_from_projection(const Matrix& p) const;
  /// c_jd = omega_j^T b_d, so that grad K_j = -(c_j1 a_j, ..., c_jD a_j).
  Matrix gradient_coefficients(const Matrix& p) const;
  /// Coefficients at f = 0, where omega_j = s_j.
  Matrix gradient_coefficients_at_zero() const;

 private:
  SystemMatrix matrix_;
  SpectralModel model_;
  Matrix log_spectra_;  // M x S, -inf where s = 0
  Vector row_norms_;
};

/// The gradient rows of K at a point, stored as coefficients c_jd.
struct LinearizationState {
  Vector point;
  Matrix coefficients;  // J x D
};

LinearizationState linearize(const SpectralForwardOp& op, const Vector& f);

Vector forward(const SpectralForwardOp& op, const Vector& f);
/// Per-ray softmax weights, one row per ray (J x M).
Matrix softmax_weights(const SpectralForwardOp& op, const Vector& f);
/// [grad K(f)]^T u.
Vector grad_transpose_apply(const SpectralForwardOp& op, const Vector& f, const Vector& u);
Vector grad_transpose_apply(const SpectralForwardOp& op, const LinearizationState& lin, const Vector& u);
/// [grad K(f)] d.
Vector jacobian_apply(const SpectralForwardOp& op, const Vector& f, const Vector& d);
Vector jacobian_apply(const SpectralForwardOp& op, const LinearizationState& lin, const Vector& d);

enum class LipschitzMode { Analytic, Empirical };

/// Lipschitz constant of each gradient map grad K_j (largest over rays).
/// Analytic: max_j |a_j|^2 sum_d sum_{m<n} (b_dm - b_dn)^2 / 4.
/// Empirical: max over sampled f of finite-difference power iterations on the per-ray Hessian.
double lipschitz_estimate(const SpectralForwardOp& op, LipschitzMode mode, int samples = 50, std::uint64_t seed = 11);

/// Bound on the Lipschitz constant of f -> grad K(f) as a J x DN operator:
/// max_j |a_j| * |A| * sum_d sum_{m<n} (b_dm - b_dn)^2 / 4.
double jacobian_lipschitz_bound(const SpectralForwardOp& op, double matrix_norm);

/// Global bound sup_f |grad K(f)| <= |A| sqrt(sum_d max_m b_dm^2).
double jacobian_norm_bound(const SpectralForwardOp& op, double matrix_norm);

/// sup over f >= 0 of |grad K(f)|, attained at f = 0 when the coefficient rows are
/// comonotone across energy bins (every b_d orders the bins the same way): then each
/// c_jd(f) decreases along f >= 0 and the entrywise-nonnegative Gram matrix
/// sum_d diag(c_d) A A^T diag(c_d) is dominated by its value at 0. Empty when the rows
/// are not comonotone.
std::optional<double> jacobian_norm_nonneg_bound(const SpectralForwardOp& op);

/// True when sign(b_dm - b_dn) agrees across materials for every pair of bins.
bool coefficients_comonotone(const SpectralModel& model);

/// |grad K(f)| by power iteration.
NormEstimate jacobian_norm(const SpectralForwardOp& op, const Vector& f, int iters = 200, double tol = 1e-8);

/// Diagonal factors r_jd = c_jd(f) / c_jd(f2), J x D. Requires f, f2 >= 0.
Matrix ratio_matrix(const SpectralForwardOp& op, const Vector& f, const Vector& f2);

/// C_R = sum_d max_{m,n} |b_dm - b_dn| * max_d |b_d| / min_m b_dm * max_j |a_j|.
double constant_CR(const SpectralForwardOp& op);

/// Log-mean-exp operator with arbitrary normalized term weights:
///   K_j(f) = ln sum_m w_jm exp(-c_jm^T f).
class GeneralizedLSEOp {
 public:
  /// `terms` holds one row per (output, term); outputs own consecutive rows,
  /// `offsets` has n_outputs + 1 entries.
  GeneralizedLSEOp(Eigen::SparseMatrix<double, Eigen::RowMajor> terms, Vector weights, std::vector<Index> offsets);

  /// Nonlinear partial volume: output j averages sub-rays rows[groups[j]] with weight 1/N_j.
  static GeneralizedLSEOp npve(const SystemMatrix& subrays, const std::vector<std::vector<Index>>& groups);

  Index n_outputs() const { return static_cast<Index>(offsets_.size()) - 1; }
  Index n_cols() const { return terms_.cols(); }
  const Eigen::SparseMatrix<double, Eigen::RowMajor>& terms() const { return terms_; }
  const Vector& weights() const { return weights_; }
  const std::vector<Index>& offsets() const { return offsets_; }

 private:
  Eigen::SparseMatrix<double, Eigen::RowMajor> terms_;
  Vector weights_;
  std::vector<Index> offsets_;
};

Vector forward_general(const GeneralizedLSEOp& op, const Vector& f);

}  // namespace epd
