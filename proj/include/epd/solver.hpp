#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "epd/common.hpp"
#include "epd/linops.hpp"
#include "epd/neighborhood.hpp"
#include "epd/spectral.hpp"

namespace epd {

/// The six extended primal-dual schemes, the nonconvex Chambolle-Pock baseline
/// (gradient frozen at 0) and the linear primal-dual method.
enum class SchemeId { EpdExact, EpdLinearized, ExactNlPdhgm, LinearizedNlPdhgm, VariantV, VariantVI, Ncpd, LinearCp };

std::string_view scheme_name(SchemeId id);
/// Accepts the names produced by scheme_name; throws DomainError otherwise.
SchemeId parse_scheme(std::string_view name);
std::vector<SchemeId> all_schemes();

struct SolverConfig {
  double tau = 0.2;
  double sigma_k = 0.2;
  double sigma_a = 0.2;
  double theta = 1.0;
  double lambda = 0.0;
  Index max_iters = 1000;
  Index log_every = 100;
  std::uint64_t seed = 0;
  std::optional<double> termination;  ///< stop once the optimality residual drops below this
  bool force = false;                 ///< run even when the step-size certificate fails

  void validate() const;
};

/// Everything a step needs besides the state: K, the TV operator and the data.
struct OperatorBundle {
  const SpectralForwardOp* k = nullptr;
  GradientOperator grad;
  Vector data;

  OperatorBundle(const SpectralForwardOp& op, Vector g);
  const SpectralForwardOp& op() const { return *k; }
};

struct SolverState {
  Vector f;
  Vector f_prev;
  Vector f_theta;
  Vector u;
  Vector v;
  Index iter = 0;
  LinearizationState linearization;  ///< gradient used by the most recent primal update
  Matrix proj;                       ///< A F, one column per material
  Matrix proj_theta;                 ///< A F_theta
};

/// Zero images and zero duals.
SolverState init_state(const OperatorBundle& ops);
/// Warm start from given primal and dual values; f_prev = f_theta = f.
SolverState init_state(const OperatorBundle& ops, const Vector& f, const Vector& u, const Vector& v);

/// One iteration of the selected scheme.
SolverState step(const SolverState& state, SchemeId scheme, const OperatorBundle& ops, const SolverConfig& cfg);

/// |f - P_G(f - tau(grad K(f)^T u + A^T v))| + |u - P_F*(u + sigma_K K(f))| + |v - P_E*(v + sigma_A A f)|.
double optimality_residual(const SolverState& state, const OperatorBundle& ops, const SolverConfig& cfg);

struct StepSizeCertificate {
  double tau = 0.0;
  double sigma_k = 0.0;
  double sigma_a = 0.0;
  double c_k = 0.0;
  std::string c_k_source;  ///< "params", "nonneg-sup" or "global-bound"
  double norm_a = 0.0;
  double kappa = 0.0;
  double s = 0.0;
  double margin_metric_k = 0.0;  ///< s(1-kappa) - tau sigma_K C_K^2
  double margin_metric_a = 0.0;  ///< (1-s)(1-kappa) - tau sigma_A |A|^2
  bool holds_metric = false;  ///< both margins positive, so M(f) is positive semidefinite
  /// tau < kappa / (2(C~ + 4 lambda_1 + 3 L rho_u)) and gamma_F* - gamma_1 > C~ (exact linearization point)
  std::optional<bool> holds_exact_local;
  std::optional<double> margin_exact_local;
  /// tau < kappa / (2(lambda_1 + L rho_u)) (extrapolated linearization point)
  std::optional<bool> holds_linearized_local;
  std::optional<double> margin_linearized_local;
  /// tau sigma_K C_K^2 < (1 - eta) s (1 - kappa), tau < kappa / (6 L rho_u), sigma_K > eta / (2(1 - eta))
  std::optional<bool> holds_spectral;
  std::optional<double> margin_spectral;
  std::optional<NeighborhoodParams> params;
};

/// Measured operator constants reused across certificates.
struct OperatorNorms {
  double matrix = 0.0;    ///< |A| of the single-material projector
  double gradient = 0.0;  ///< |nabla|
  std::optional<double> jacobian_nonneg;  ///< sup of |grad K| over f >= 0 when certifiable
};

OperatorNorms measure_norms(const OperatorBundle& ops);

/// Checks the step-size inequalities. C_K is params->c_k when given, otherwise the
/// nonnegative-orthant supremum when available, otherwise the global bound
/// |A| sqrt(sum_d max_m b_dm^2). (kappa, s) come from params or from a
/// grid over {0.1, ..., 0.9}^2 maximizing the smaller relative slack.
StepSizeCertificate validate_step_sizes(const SolverConfig& cfg, const OperatorBundle& ops,
                                        const NeighborhoodParams* params = nullptr,
                                        const OperatorNorms* norms = nullptr);

struct IterationReport {
  Index iter = 0;
  double re = 0.0;
  double rd = 0.0;
  double rt = 0.0;
  double residual = 0.0;
  double wall_ms = 0.0;
};

struct RunOptions {
  std::function<void(const SolverState&, const IterationReport&)> observer;
  const Vector* truth = nullptr;                    ///< enables RE and RT
  const StepSizeCertificate* certificate = nullptr;  ///< computed when absent
  bool record_wall_time = false;                    ///< wall_ms stays 0 otherwise
};

struct RunResult {
  SolverState state;
  std::vector<IterationReport> reports;
  StepSizeCertificate certificate;
  bool terminated_early = false;
};

/// Iterates until max_iters or the residual threshold. Reports are produced every
/// log_every iterations and after the last one. Throws NumericalAbort on a
/// non-finite iterate and DomainError when the certificate fails without cfg.force.
RunResult run(SchemeId scheme, const OperatorBundle& ops, const SolverConfig& cfg, SolverState init,
              const RunOptions& options = {});

void write_report_header(std::ostream& os);
void write_report_row(std::ostream& os, const IterationReport& r);

}  // namespace epd
