#include "epd/solver.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include "epd/io.hpp"
#include "epd/metrics.hpp"
#include "epd/prox.hpp"

namespace epd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct SchemeEntry {
  SchemeId id;
  std::string_view name;
};

constexpr std::array<SchemeEntry, 8> kSchemes{{
    {SchemeId::EpdExact, "epd-exact"},
    {SchemeId::EpdLinearized, "epd-linearized"},
    {SchemeId::ExactNlPdhgm, "exact-nl-pdhgm"},
    {SchemeId::LinearizedNlPdhgm, "linearized-nl-pdhgm"},
    {SchemeId::VariantV, "variant-v"},
    {SchemeId::VariantVI, "variant-vi"},
    {SchemeId::Ncpd, "ncpd"},
    {SchemeId::LinearCp, "linear-cp"},
}};

// -sum_d c_jd dp_jd per ray.
Vector jacobian_rows(const Matrix& coeffs, const Matrix& dp) { return -(coeffs.array() * dp.array()).rowwise().sum(); }

// Relative slack of a strict inequality lhs < rhs.
double relative_slack(double lhs, double rhs) { return rhs > 0.0 ? (rhs - lhs) / rhs : -kInf; }

void check_finite(const Vector& x, const char* name, Index iter) {
  if (!x.allFinite()) {
    throw NumericalAbort("non-finite value in " + std::string(name) + " at iteration " + std::to_string(iter));
  }
}

}  // namespace

std::string_view scheme_name(SchemeId id) {
  for (const auto& e : kSchemes) {
    if (e.id == id) return e.name;
  }
  return "unknown";
}

SchemeId parse_scheme(std::string_view name) {
  for (const auto& e : kSchemes) {
    if (e.name == name) return e.id;
  }
  throw DomainError("unknown scheme '" + std::string(name) + "'");
}

std::vector<SchemeId> all_schemes() {
  std::vector<SchemeId> out;
  for (const auto& e : kSchemes) out.push_back(e.id);
  return out;
}

void SolverConfig::validate() const {
  if (!(tau > 0.0)) throw DomainError("solver: tau must be > 0");
  if (!(sigma_k > 0.0)) throw DomainError("solver: sigma_k must be > 0");
  if (!(sigma_a > 0.0)) throw DomainError("solver: sigma_a must be > 0");
  if (!(theta >= 0.0 && theta <= 1.0)) throw DomainError("solver: theta must lie in [0, 1]");
  if (!(lambda >= 0.0)) throw DomainError("solver: lambda must be >= 0");
  if (max_iters < 0) throw DomainError("solver: max_iters must be >= 0");
  if (log_every < 1) throw DomainError("solver: log_every must be >= 1");
  if (termination && !(*termination > 0.0)) throw DomainError("solver: termination threshold must be > 0");
}

void NeighborhoodParams::refresh_derived() {
  eta = rho_f * c_r < 1.0 ? rho_f * c_r / (1.0 - rho_f * c_r) : kInf;
  c_tilde = c_k + L * rho_f / 2.0;
}

void NeighborhoodParams::validate() const {
  if (!(rho_f > 0.0 && rho_u > 0.0 && rho_v > 0.0)) throw DomainError("neighborhood: radii must be > 0");
  if (!(kappa > 0.0 && kappa < 1.0)) throw DomainError("neighborhood: kappa must lie in (0, 1)");
  if (!(s > 0.0 && s < 1.0)) throw DomainError("neighborhood: s must lie in (0, 1)");
  if (lambda_1 < 0.0 || L < 0.0 || c_k < 0.0 || c_r < 0.0) throw DomainError("neighborhood: negative constant");
}

OperatorBundle::OperatorBundle(const SpectralForwardOp& op, Vector g) : k(&op), data(std::move(g)) {
  require_size(data.size(), op.n_rays(), "operator bundle data");
  const auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(op.n_pixels()))));
  if (side * side != op.n_pixels()) throw DimensionError("operator bundle: pixel count is not a square");
  grad.n_side = side;
  grad.n_materials = op.n_materials();
}

SolverState init_state(const OperatorBundle& ops) {
  const auto& op = ops.op();
  return init_state(ops, Vector::Zero(op.image_size()), Vector::Zero(op.n_rays()), Vector::Zero(ops.grad.out_size()));
}

SolverState init_state(const OperatorBundle& ops, const Vector& f, const Vector& u, const Vector& v) {
  const auto& op = ops.op();
  require_size(f.size(), op.image_size(), "init_state f");
  require_size(u.size(), op.n_rays(), "init_state u");
  require_size(v.size(), ops.grad.out_size(), "init_state v");
  SolverState st;
  st.f = f;
  st.f_prev = f;
  st.f_theta = f;
  st.u = u;
  st.v = v;
  st.proj = op.project(f);
  st.proj_theta = st.proj;
  st.linearization = {f, op.gradient_coefficients(st.proj)};
  return st;
}

SolverState step(const SolverState& state, SchemeId scheme, const OperatorBundle& ops, const SolverConfig& cfg) {
  const auto& op = ops.op();
  if (scheme == SchemeId::LinearCp && !op.model().is_linear()) {
    throw DomainError("linear-cp requires a linear forward operator");
  }
  const bool tv = cfg.lambda > 0.0;

  // Primal update with the scheme's linearization point.
  LinearizationState lin;
  switch (scheme) {
    case SchemeId::EpdExact:
    case SchemeId::VariantV:
    case SchemeId::VariantVI:
      lin = {state.f_theta, op.gradient_coefficients(state.proj_theta)};
      break;
    case SchemeId::EpdLinearized:
    case SchemeId::ExactNlPdhgm:
    case SchemeId::LinearizedNlPdhgm:
      lin = {state.f, op.gradient_coefficients(state.proj)};
      break;
    case SchemeId::Ncpd:
    case SchemeId::LinearCp:
      lin = {Vector::Zero(op.image_size()), op.gradient_coefficients_at_zero()};
      break;
  }
  Vector direction = grad_transpose_apply(op, lin, state.u);
  if (tv) direction += gradient_adjoint(ops.grad, state.v);

  SolverState next;
  next.iter = state.iter + 1;
  next.f = prox_nonneg(state.f - cfg.tau * direction);
  next.f_prev = state.f;
  next.f_theta = next.f + cfg.theta * (next.f - state.f);
  next.proj = op.project(next.f);
  next.proj_theta = next.proj + cfg.theta * (next.proj - state.proj);

  // Dual update for K.
  Vector q;
  switch (scheme) {
    case SchemeId::EpdExact:
    case SchemeId::ExactNlPdhgm:
      q = op.forward_from_projection(next.proj_theta);
      break;
    case SchemeId::EpdLinearized:
    case SchemeId::VariantV:
      q = op.forward_from_projection(next.proj) +
          jacobian_rows(op.gradient_coefficients(next.proj), next.proj_theta - next.proj);
      break;
    case SchemeId::LinearizedNlPdhgm:
    case SchemeId::VariantVI:
      q = op.forward_from_projection(state.proj) +
          jacobian_rows(op.gradient_coefficients(state.proj), next.proj_theta - state.proj);
      break;
    case SchemeId::Ncpd:
      q = op.forward_from_projection(state.proj) + jacobian_rows(lin.coefficients, next.proj_theta - state.proj);
      break;
    case SchemeId::LinearCp:
      q = jacobian_rows(lin.coefficients, next.proj_theta);
      break;
  }
  next.u = prox_fstar(FidelityProx<double>{ops.data, cfg.sigma_k}, state.u + cfg.sigma_k * q);

  // Dual update for the TV term.
  if (tv) {
    next.v = prox_estar_box(TVDualProx<double>{cfg.lambda, cfg.sigma_a},
                            state.v + cfg.sigma_a * gradient_apply(ops.grad, next.f_theta));
  } else {
    next.v = Vector::Zero(state.v.size());
  }
  next.linearization = std::move(lin);

  check_finite(next.f, "f", next.iter);
  check_finite(next.u, "u", next.iter);
  check_finite(next.v, "v", next.iter);
  return next;
}

double optimality_residual(const SolverState& state, const OperatorBundle& ops, const SolverConfig& cfg) {
  const auto& op = ops.op();
  const Matrix p = op.project(state.f);
  const LinearizationState lin{state.f, op.gradient_coefficients(p)};
  Vector direction = grad_transpose_apply(op, lin, state.u) + gradient_adjoint(ops.grad, state.v);
  const double rf = (state.f - prox_nonneg(state.f - cfg.tau * direction)).norm();
  const double ru = (state.u - prox_fstar(FidelityProx<double>{ops.data, cfg.sigma_k},
                                          state.u + cfg.sigma_k * op.forward_from_projection(p)))
                        .norm();
  const double rv = (state.v - prox_estar_box(TVDualProx<double>{cfg.lambda, cfg.sigma_a},
                                              state.v + cfg.sigma_a * gradient_apply(ops.grad, state.f)))
                        .norm();
  return rf + ru + rv;
}

OperatorNorms measure_norms(const OperatorBundle& ops) {
  return {operator_norm(as_operator(ops.op().matrix())).value, operator_norm(as_operator(ops.grad)).value,
          jacobian_norm_nonneg_bound(ops.op())};
}

StepSizeCertificate validate_step_sizes(const SolverConfig& cfg, const OperatorBundle& ops,
                                        const NeighborhoodParams* params, const OperatorNorms* norms) {
  const OperatorNorms measured = norms ? *norms : measure_norms(ops);
  StepSizeCertificate c;
  c.tau = cfg.tau;
  c.sigma_k = cfg.sigma_k;
  c.sigma_a = cfg.sigma_a;
  if (params) {
    c.c_k = params->c_k;
    c.c_k_source = "params";
  } else if (measured.jacobian_nonneg) {
    c.c_k = *measured.jacobian_nonneg;
    c.c_k_source = "nonneg-sup";
  } else {
    c.c_k = jacobian_norm_bound(ops.op(), measured.matrix);
    c.c_k_source = "global-bound";
  }
  c.norm_a = cfg.lambda > 0.0 ? measured.gradient : 0.0;

  const double lhs_k = cfg.tau * cfg.sigma_k * c.c_k * c.c_k;
  const double lhs_a = cfg.tau * cfg.sigma_a * c.norm_a * c.norm_a;
  auto evaluate = [&](double kappa, double s) {
    c.kappa = kappa;
    c.s = s;
    c.margin_metric_k = s * (1.0 - kappa) - lhs_k;
    c.margin_metric_a = (1.0 - s) * (1.0 - kappa) - lhs_a;
    c.holds_metric = c.margin_metric_k > 0.0 && c.margin_metric_a > 0.0;
  };
  if (params) {
    evaluate(params->kappa, params->s);
  } else {
    double best = -kInf;
    std::pair<double, double> choice{0.5, 0.5};
    for (int i = 1; i <= 9; ++i) {
      for (int j = 1; j <= 9; ++j) {
        const double kappa = 0.1 * i;
        const double s = 0.1 * j;
        const double slack = std::min(relative_slack(lhs_k, s * (1.0 - kappa)),
                                      relative_slack(lhs_a, (1.0 - s) * (1.0 - kappa)));
        if (slack > best) {
          best = slack;
          choice = {kappa, s};
        }
      }
    }
    evaluate(choice.first, choice.second);
  }

  if (params) {
    NeighborhoodParams p = *params;
    p.refresh_derived();
    const double tau = cfg.tau;
    const double denom_exact = 2.0 * (p.c_tilde + 4.0 * p.lambda_1 + 3.0 * p.L * p.rho_u);
    const double bound_exact = denom_exact > 0.0 ? p.kappa / denom_exact : kInf;
    c.margin_exact_local = std::min(bound_exact - tau, p.gamma_fstar - p.gamma_1 - p.c_tilde);
    c.holds_exact_local = *c.margin_exact_local > 0.0;

    const double denom_linearized = 2.0 * (p.lambda_1 + p.L * p.rho_u);
    c.margin_linearized_local = (denom_linearized > 0.0 ? p.kappa / denom_linearized : kInf) - tau;
    c.holds_linearized_local = *c.margin_linearized_local > 0.0;

    if (p.eta < 1.0) {
      const double m1 = (1.0 - p.eta) * p.s * (1.0 - p.kappa) - lhs_k;
      const double m2 = (p.L * p.rho_u > 0.0 ? p.kappa / (6.0 * p.L * p.rho_u) : kInf) - tau;
      const double m3 = cfg.sigma_k - p.eta / (2.0 * (1.0 - p.eta));
      c.margin_spectral = std::min({m1, m2, m3});
      c.holds_spectral = *c.margin_spectral > 0.0 && c.holds_metric;
    } else {
      c.margin_spectral = -kInf;
      c.holds_spectral = false;
    }
    c.params = p;
  }
  return c;
}

RunResult run(SchemeId scheme, const OperatorBundle& ops, const SolverConfig& cfg, SolverState init,
              const RunOptions& options) {
  cfg.validate();
  RunResult result;
  result.certificate = options.certificate ? *options.certificate : validate_step_sizes(cfg, ops);
  if (!result.certificate.holds_metric && !cfg.force) {
    throw DomainError("step sizes are not certified (margins " + io::format_double(result.certificate.margin_metric_k) +
                      ", " + io::format_double(result.certificate.margin_metric_a) + "); set force to run anyway");
  }

  const auto start = std::chrono::steady_clock::now();
  const auto& op = ops.op();
  result.state = std::move(init);
  for (Index n = 0; n < cfg.max_iters; ++n) {
    result.state = step(result.state, scheme, ops, cfg);
    const bool last = n + 1 == cfg.max_iters;
    if (result.state.iter % cfg.log_every != 0 && !last) continue;

    IterationReport r;
    r.iter = result.state.iter;
    r.rd = relative_data_fit(op.forward_from_projection(result.state.proj), ops.data);
    if (options.truth) {
      r.re = relative_error(result.state.f, *options.truth);
      r.rt = relative_tv(result.state.f, *options.truth, ops.grad);
    } else {
      r.re = kNaN;
      r.rt = kNaN;
    }
    r.residual = optimality_residual(result.state, ops, cfg);
    if (options.record_wall_time) {
      r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
    result.reports.push_back(r);
    if (options.observer) options.observer(result.state, r);
    if (cfg.termination && r.residual <= *cfg.termination) {
      result.terminated_early = !last;
      break;
    }
  }
  return result;
}

void write_report_header(std::ostream& os) { os << "iter,RE,RD,RT,residual,wall_ms\n"; }

void write_report_row(std::ostream& os, const IterationReport& r) {
  using io::format_double;
  os << r.iter << ',' << format_double(r.re) << ',' << format_double(r.rd) << ',' << format_double(r.rt) << ','
     << format_double(r.residual) << ',' << format_double(r.wall_ms) << '\n';
}

}  // namespace epd
