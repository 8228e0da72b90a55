#pragma once

namespace epd {

/// Constants describing a neighborhood of a solution and the local behaviour of K there.
struct NeighborhoodParams {
  double rho_f = 1.0;
  double rho_u = 1.0;
  double rho_v = 1.0;
  double kappa = 0.5;
  double s = 0.5;
  double gamma_fstar = 1.0;
  double gamma_1 = 0.0;
  double lambda_1 = 0.0;
  double L = 0.0;
  double c_k = 0.0;
  double c_r = 0.0;
  double eta = 0.0;      ///< rho_f c_r / (1 - rho_f c_r)
  double c_tilde = 0.0;  ///< c_k + L rho_f / 2

  /// Recomputes eta and c_tilde from the primary constants.
  void refresh_derived();
  void validate() const;
};

}  // namespace epd
