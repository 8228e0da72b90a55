#include "epd/theory.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "epd/io.hpp"

namespace epd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool tv_active(const SolverConfig& cfg) { return cfg.lambda > 0.0; }

Matrix dense_gradient(const GradientOperator& g) { return Matrix(g.to_sparse()); }

void require_cap(Index n, Index cap) {
  if (n > cap) throw DimensionError("dense check of size " + std::to_string(n) + " exceeds cap " + std::to_string(cap));
}

}  // namespace

Matrix to_dense(const SystemMatrix& m) { return Matrix(m.rows); }

Matrix dense_jacobian(const SpectralForwardOp& op, const Vector& f) {
  const LinearizationState lin = linearize(op, f);
  const Matrix a = to_dense(op.matrix());
  Matrix jac(op.n_rays(), op.image_size());
  for (Index d = 0; d < op.n_materials(); ++d) {
    jac.middleCols(d * op.n_pixels(), op.n_pixels()) = -(lin.coefficients.col(d).asDiagonal() * a);
  }
  return jac;
}

MetricMatrix assemble_M(const Vector& f, const SolverConfig& cfg, const OperatorBundle& ops, Index cap) {
  const auto& op = ops.op();
  MetricMatrix mm;
  mm.point = f;
  mm.n_f = op.image_size();
  mm.n_u = op.n_rays();
  mm.n_v = tv_active(cfg) ? ops.grad.out_size() : 0;
  const Index n = mm.n_f + mm.n_u + mm.n_v;
  require_cap(n, cap);
  mm.m = Matrix::Zero(n, n);
  mm.m.topLeftCorner(mm.n_f, mm.n_f).diagonal().setConstant(1.0 / cfg.tau);
  mm.m.block(mm.n_f, mm.n_f, mm.n_u, mm.n_u).diagonal().setConstant(1.0 / cfg.sigma_k);
  const Matrix jac = dense_jacobian(op, f);
  mm.m.block(mm.n_f, 0, mm.n_u, mm.n_f) = -jac;
  mm.m.block(0, mm.n_f, mm.n_f, mm.n_u) = -jac.transpose();
  if (mm.n_v > 0) {
    const Index o = mm.n_f + mm.n_u;
    const Matrix a = dense_gradient(ops.grad);
    mm.m.block(o, o, mm.n_v, mm.n_v).diagonal().setConstant(1.0 / cfg.sigma_a);
    mm.m.block(o, 0, mm.n_v, mm.n_f) = -a;
    mm.m.block(0, o, mm.n_f, mm.n_v) = -a.transpose();
  }
  return mm;
}

PsdCheck check_psd(const Matrix& m, double tol) {
  if (m.size() == 0) return {0.0, true};
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalAbort("symmetric eigensolve failed");
  const double lo = es.eigenvalues().minCoeff();
  return {lo, lo >= -tol};
}

BBlockCheck check_B_blocks(const Vector& f, const SolverConfig& cfg, const NeighborhoodParams& params,
                           const OperatorBundle& ops, double tol, Index cap) {
  const MetricMatrix mm = assemble_M(f, cfg, ops, cap);
  const double kappa = params.kappa;
  const double s = params.s;
  const Matrix jac = -mm.m.block(mm.n_f, 0, mm.n_u, mm.n_f);

  Matrix b1 = Matrix::Zero(mm.m.rows(), mm.m.cols());
  Matrix b2 = Matrix::Zero(mm.m.rows(), mm.m.cols());
  b1.topLeftCorner(mm.n_f, mm.n_f).diagonal().setConstant(kappa / cfg.tau);
  b1.block(mm.n_f, mm.n_f, mm.n_u, mm.n_u) = Matrix::Identity(mm.n_u, mm.n_u) / cfg.sigma_k -
                                              (cfg.tau / (s * (1.0 - kappa))) * jac * jac.transpose();
  Matrix b2f = Matrix::Identity(mm.n_f, mm.n_f) / cfg.tau - (cfg.sigma_k / (1.0 - kappa)) * jac.transpose() * jac;
  b2.block(mm.n_f, mm.n_f, mm.n_u, mm.n_u).diagonal().setConstant(kappa / cfg.sigma_k);
  if (mm.n_v > 0) {
    const Index o = mm.n_f + mm.n_u;
    const Matrix a = -mm.m.block(o, 0, mm.n_v, mm.n_f);
    b1.block(o, o, mm.n_v, mm.n_v) = Matrix::Identity(mm.n_v, mm.n_v) / cfg.sigma_a -
                                     (cfg.tau / ((1.0 - s) * (1.0 - kappa))) * a * a.transpose();
    b2f -= (cfg.sigma_a / (1.0 - kappa)) * a.transpose() * a;
    b2.block(o, o, mm.n_v, mm.n_v).diagonal().setConstant(kappa / cfg.sigma_a);
  }
  b2.topLeftCorner(mm.n_f, mm.n_f) = b2f;

  BBlockCheck out;
  out.m_minus_b1 = check_psd(mm.m - b1, tol);
  out.b1 = check_psd(b1, tol);
  out.m_minus_b2 = check_psd(mm.m - b2, tol);
  out.b2 = check_psd(b2, tol);
  return out;
}

double metric_norm_sq(const Vector& df, const Vector& du, const Vector& dv, const Vector& f, const SolverConfig& cfg,
                      const OperatorBundle& ops) {
  const auto& op = ops.op();
  const LinearizationState lin = linearize(op, f);
  double out = df.squaredNorm() / cfg.tau + du.squaredNorm() / cfg.sigma_k -
               2.0 * jacobian_apply(op, lin, df).dot(du);
  if (tv_active(cfg)) out += dv.squaredNorm() / cfg.sigma_a - 2.0 * gradient_apply(ops.grad, df).dot(dv);
  return out;
}

double metric_distance(const SolverState& a, const SolverState& b, const Vector& f, const SolverConfig& cfg,
                       const OperatorBundle& ops) {
  return std::sqrt(std::max(0.0, metric_norm_sq(a.f - b.f, a.u - b.u, a.v - b.v, f, cfg, ops)));
}

InitialConditionCheck check_initial_condition(const SolverState& beta0, const SolverState& beta_hat,
                                              const NeighborhoodParams& params, const SolverConfig& cfg,
                                              const OperatorBundle& ops, double norm_a) {
  InitialConditionCheck out;
  out.distance = metric_distance(beta0, beta_hat, beta0.f_theta, cfg, ops);
  const double u_hat = beta_hat.u.norm();
  const double ck = params.c_k;
  const bool with_v = tv_active(cfg);
  const double kt = std::sqrt(params.kappa / cfg.tau);
  const double ks = std::sqrt(params.kappa / cfg.sigma_k);
  const double ka = std::sqrt(params.kappa / cfg.sigma_a);

  constexpr int kGrid = 40;
  out.bound = -kInf;
  for (int i = 1; i <= kGrid; ++i) {
    const double rf = params.rho_f * i / kGrid;
    for (int j = 1; j <= kGrid; ++j) {
      const double ru = params.rho_u * j / kGrid;
      for (int k = 1; k <= kGrid; ++k) {
        const double rv = params.rho_v * k / kGrid;
        const double cf = cfg.tau * ((ru + 2.0 * u_hat) * ck + norm_a * rv);
        const double cu = cfg.sigma_k * (rf + 2.0 * cf) * ck;
        const double cv = cfg.sigma_a * (rf + 2.0 * cf) * norm_a;
        if (rf + 2.0 * cf > params.rho_f || ru + cu > params.rho_u || rv + cv > params.rho_v) continue;
        double bound = std::min(rf * kt, ru * ks);
        if (with_v) bound = std::min(bound, rv * ka);
        if (bound > out.bound) {
          out.bound = bound;
          out.r_f = rf;
          out.r_u = ru;
          out.r_v = rv;
          out.c_f = cf;
          out.c_u = cu;
          out.c_v = cv;
          out.feasible = true;
        }
      }
    }
  }
  if (!out.feasible) out.bound = 0.0;
  out.pass = out.distance <= out.bound || out.distance == 0.0;
  return out;
}

Vector sample_ball(const Vector& center, double rho, std::mt19937_64& rng, bool nonneg) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector dir(center.size());
  for (Index i = 0; i < dir.size(); ++i) dir(i) = normal(rng);
  const double r = rho * std::pow(unit(rng), 1.0 / static_cast<double>(std::max<Index>(1, center.size())));
  Vector x = center + r * dir.normalized();
  if (nonneg) x = x.cwiseMax(0.0);
  return x;
}

SampledBound verify_remainder_bound(const SpectralForwardOp& op, const Vector& center, double rho, int trials,
                            std::uint64_t seed, double slack) {
  require_size(center.size(), op.image_size(), "verify_remainder_bound center");
  if ((center.array() < 0.0).any()) throw DomainError("verify_remainder_bound: center must be nonnegative");
  const double cr = constant_CR(op);
  if (!(rho > 0.0) || rho * cr >= 1.0) throw DomainError("verify_remainder_bound: rho must lie in (0, 1/C_R)");
  SampledBound out;
  out.bound = rho * cr / (1.0 - rho * cr);
  std::mt19937_64 rng(seed);
  for (int t = 0; t < trials; ++t) {
    const Vector f = sample_ball(center, rho, rng, true);
    const Vector f2 = sample_ball(center, rho, rng, true);
    const Vector kf = forward(op, f);
    const Vector kf2 = forward(op, f2);
    const double denom = (kf - kf2).norm();
    if (!(denom > 0.0)) continue;
    const double num = (kf - kf2 - jacobian_apply(op, f2, f - f2)).norm();
    out.worst_ratio = std::max(out.worst_ratio, num / denom);
    ++out.samples;
  }
  out.pass = out.worst_ratio <= out.bound + slack;
  return out;
}

SampledBound verify_ratio_bound(const SpectralForwardOp& op, int trials, std::uint64_t seed) {
  const double cr = constant_CR(op);
  SampledBound out;
  out.bound = 1.0;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> decade(-3.0, 0.0);
  for (int t = 0; t < trials; ++t) {
    const double scale = std::pow(10.0, decade(rng));
    Vector f(op.image_size());
    Vector f2(op.image_size());
    for (Index i = 0; i < f.size(); ++i) {
      f(i) = scale * unit(rng);
      f2(i) = scale * unit(rng);
    }
    const double dev = (ratio_matrix(op, f, f2).array() - 1.0).abs().maxCoeff();
    const double rhs = cr * (f - f2).norm();
    if (!(rhs > 0.0)) continue;
    out.worst_ratio = std::max(out.worst_ratio, dev / rhs);
    ++out.samples;
  }
  out.pass = out.worst_ratio <= out.bound;
  return out;
}

SampledBound verify_local_lipschitz(const SpectralForwardOp& op, double L, const Vector& center, double rho, int trials,
                                    std::uint64_t seed) {
  SampledBound out;
  out.bound = L;
  std::mt19937_64 rng(seed);
  for (int t = 0; t < trials; ++t) {
    const Vector f = sample_ball(center, rho, rng, false);
    const Vector x = sample_ball(center, rho, rng, false);
    const LinearizationState lf = linearize(op, f);
    const LinearizationState lx = linearize(op, x);
    LinearOperator diff;
    diff.rows = op.n_rays();
    diff.cols = op.image_size();
    diff.apply = [&](const Vector& d) { return Vector(jacobian_apply(op, lf, d) - jacobian_apply(op, lx, d)); };
    diff.adjoint = [&](const Vector& u) { return Vector(grad_transpose_apply(op, lf, u) - grad_transpose_apply(op, lx, u)); };
    const double dist = (f - x).norm();
    if (!(dist > 0.0)) continue;
    out.worst_ratio = std::max(out.worst_ratio, operator_norm(diff, 300, 1e-10).value / dist);
    ++out.samples;
  }
  out.pass = out.worst_ratio <= out.bound * (1.0 + 1e-8);
  return out;
}

NonlinearityProbe probe_nonlinearity(const SpectralForwardOp& op, const Vector& f_hat, const Vector& u_hat,
                                     const NeighborhoodParams& params, int trials, std::uint64_t seed) {
  NonlinearityProbe out;
  out.u_hat_norm = u_hat.norm();
  out.u_hat_zero = out.u_hat_norm == 0.0;
  std::mt19937_64 rng(seed);
  const Vector k_hat = forward(op, f_hat);
  const LinearizationState lin_hat = linearize(op, f_hat);
  for (int t = 0; t < trials; ++t) {
    const Vector f = sample_ball(f_hat, params.rho_f, rng, false);
    const Vector x = sample_ball(f_hat, params.rho_f, rng, false);
    const Vector u = sample_ball(u_hat, params.rho_u, rng, false);
    const LinearizationState lin_f = linearize(op, f);
    const Vector df = f - f_hat;
    const double first = (jacobian_apply(op, linearize(op, x), df) - jacobian_apply(op, lin_hat, df)).dot(u_hat);
    const double second = (k_hat - forward(op, f) - jacobian_apply(op, lin_f, f_hat - f)).dot(u - u_hat);
    const double lhs = first + second;
    ++out.samples;
    if (lhs >= 0.0) continue;
    const double du = (u - u_hat).squaredNorm();
    const double dx = (f - x).squaredNorm();
    out.gamma_1_alone = std::max(out.gamma_1_alone, du > 0.0 ? -lhs / du : kInf);
    out.lambda_1_alone = std::max(out.lambda_1_alone, dx > 0.0 ? -lhs / dx : kInf);
  }
  return out;
}

NeighborhoodParams make_neighborhood(const SpectralForwardOp& op, double matrix_norm, double rho_f, double rho_u,
                                     double rho_v, double kappa, double s) {
  NeighborhoodParams p;
  p.rho_f = rho_f;
  p.rho_u = rho_u;
  p.rho_v = rho_v;
  p.kappa = kappa;
  p.s = s;
  p.c_k = jacobian_norm_nonneg_bound(op).value_or(jacobian_norm_bound(op, matrix_norm));
  p.L = jacobian_lipschitz_bound(op, matrix_norm);
  p.c_r = constant_CR(op);
  p.refresh_derived();
  p.validate();
  return p;
}

void VerificationReport::add(const std::string& key, double value) { entries_.emplace_back(key, io::format_double(value)); }

void VerificationReport::add(const std::string& key, bool value) { entries_.emplace_back(key, value ? "true" : "false"); }

void VerificationReport::add(const std::string& key, const std::string& value) { entries_.emplace_back(key, value); }

void VerificationReport::write(std::ostream& os) const {
  for (const auto& [k, v] : entries_) os << k << " = " << v << '\n';
}

}  // namespace epd
