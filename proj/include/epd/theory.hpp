#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "epd/common.hpp"
#include "epd/neighborhood.hpp"
#include "epd/solver.hpp"
#include "epd/spectral.hpp"

namespace epd {

inline constexpr Index kDenseCap = 2000;

/// Dense row-major-pixel copy of a sparse matrix.
Matrix to_dense(const SystemMatrix& m);
/// grad K(f) as a dense J x DN matrix.
Matrix dense_jacobian(const SpectralForwardOp& op, const Vector& f);

/// Dense M(f) = [I/tau, -J^T, -A^T; -J, I/sigma_K, 0; -A, 0, I/sigma_A].
/// The A blocks are omitted when lambda = 0, since the TV dual is then identically zero.
struct MetricMatrix {
  Matrix m;
  Vector point;
  Index n_f = 0;
  Index n_u = 0;
  Index n_v = 0;
};

MetricMatrix assemble_M(const Vector& f, const SolverConfig& cfg, const OperatorBundle& ops, Index cap = kDenseCap);

struct PsdCheck {
  double min_eigenvalue = 0.0;
  bool pass = false;
};

PsdCheck check_psd(const Matrix& m, double tol = 1e-10);
inline PsdCheck check_psd(const MetricMatrix& m, double tol = 1e-10) { return check_psd(m.m, tol); }

struct BBlockCheck {
  PsdCheck m_minus_b1;
  PsdCheck b1;
  PsdCheck m_minus_b2;
  PsdCheck b2;
  bool all() const { return m_minus_b1.pass && b1.pass && m_minus_b2.pass && b2.pass; }
};

/// Eigen-checks of M - B_i and B_i with kappa, s from params.
BBlockCheck check_B_blocks(const Vector& f, const SolverConfig& cfg, const NeighborhoodParams& params,
                           const OperatorBundle& ops, double tol = 1e-10, Index cap = kDenseCap);

/// |(df, du, dv)|^2 in M(f), evaluated without forming M.
double metric_norm_sq(const Vector& df, const Vector& du, const Vector& dv, const Vector& f, const SolverConfig& cfg,
                      const OperatorBundle& ops);
double metric_distance(const SolverState& a, const SolverState& b, const Vector& f, const SolverConfig& cfg,
                       const OperatorBundle& ops);

struct InitialConditionCheck {
  double distance = 0.0;  ///< |beta0 - beta_hat| in M(f_theta^0)
  double bound = 0.0;     ///< min{r_f sqrt(kappa/tau), r_u sqrt(kappa/sigma_K), r_v sqrt(kappa/sigma_A)}
  double r_f = 0.0, r_u = 0.0, r_v = 0.0;
  double c_f = 0.0, c_u = 0.0, c_v = 0.0;
  bool feasible = false;  ///< some admissible (r_f, r_u, r_v) was found
  bool pass = false;
};

/// Searches admissible radii r <= rho for the largest bound and compares it with the distance.
/// `norm_a` is |A| (0 when the TV term is inactive).
InitialConditionCheck check_initial_condition(const SolverState& beta0, const SolverState& beta_hat,
                                              const NeighborhoodParams& params, const SolverConfig& cfg,
                                              const OperatorBundle& ops, double norm_a);

/// Uniform point in the ball of radius rho around center, optionally projected onto f >= 0.
Vector sample_ball(const Vector& center, double rho, std::mt19937_64& rng, bool nonneg);

struct SampledBound {
  double worst_ratio = 0.0;  ///< largest lhs / rhs seen
  double bound = 0.0;        ///< the constant the ratio is compared with
  int samples = 0;
  bool pass = false;
};

/// max |K(f) - K(f2) - grad K(f2)(f - f2)| / |K(f) - K(f2)| over nonnegative pairs in the
/// ball; compared with eta = rho C_R / (1 - rho C_R). Requires rho < 1 / C_R.
SampledBound verify_remainder_bound(const SpectralForwardOp& op, const Vector& center, double rho, int trials = 100,
                            std::uint64_t seed = 5, double slack = 1e-9);

/// max |R(f, f2) - I| / (C_R |f - f2|) over random nonnegative pairs; compared with 1.
SampledBound verify_ratio_bound(const SpectralForwardOp& op, int trials = 100, std::uint64_t seed = 3);

/// max |grad K(f) - grad K(x)| / |f - x| over pairs in a ball; compared with L.
SampledBound verify_local_lipschitz(const SpectralForwardOp& op, double L, const Vector& center, double rho,
                                    int trials = 20, std::uint64_t seed = 9);

/// Tightest constants implied by sampled violations of the nonlinearity restriction.
struct NonlinearityProbe {
  double gamma_1_alone = 0.0;   ///< needed with lambda_1 = 0
  double lambda_1_alone = 0.0;  ///< needed with gamma_1 = 0
  double u_hat_norm = 0.0;
  bool u_hat_zero = false;      ///< regime where the restriction cannot hold
  int samples = 0;
};

NonlinearityProbe probe_nonlinearity(const SpectralForwardOp& op, const Vector& f_hat, const Vector& u_hat,
                                     const NeighborhoodParams& params, int trials = 100, std::uint64_t seed = 13);

/// Builds neighborhood constants from measured operator quantities:
/// c_k from the nonnegative-orthant supremum (global bound as fallback), L from the operator-level Lipschitz bound, c_r from the closed form.
NeighborhoodParams make_neighborhood(const SpectralForwardOp& op, double matrix_norm, double rho_f, double rho_u,
                                     double rho_v, double kappa, double s);

/// key = value lines.
class VerificationReport {
 public:
  void add(const std::string& key, double value);
  void add(const std::string& key, bool value);
  void add(const std::string& key, const std::string& value);
  void write(std::ostream& os) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace epd
