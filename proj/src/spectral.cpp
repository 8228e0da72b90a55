#include "epd/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "epd/io.hpp"

namespace epd {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw DomainError(std::string(what) + ": input contains NaN or Inf");
}

// Sum over pairs m < n of (b_dm - b_dn)^2 / 4, summed over materials.
double pairwise_spread(const Matrix& b) {
  double total = 0.0;
  for (Index d = 0; d < b.rows(); ++d) {
    for (Index m = 0; m < b.cols(); ++m) {
      for (Index n = m + 1; n < b.cols(); ++n) total += 0.25 * (b(d, m) - b(d, n)) * (b(d, m) - b(d, n));
    }
  }
  return total;
}

}  // namespace

bool SpectralModel::is_linear() const {
  if (n_energy_bins() <= 1) return true;
  for (Index d = 0; d < coeffs.rows(); ++d) {
    if (coeffs.row(d).maxCoeff() != coeffs.row(d).minCoeff()) return false;
  }
  return true;
}

void SpectralModel::validate() const {
  if (n_materials() < 1 || n_energy_bins() < 1) throw DomainError("spectral model: empty coefficient table");
  if (spectra.rows() != n_energy_bins()) {
    throw DimensionError("spectral model: spectra have " + std::to_string(spectra.rows()) + " bins, coefficients have " +
                         std::to_string(n_energy_bins()));
  }
  if (!(coeffs.array() > 0.0).all() || !coeffs.allFinite()) throw DomainError("spectral model: coefficients must be > 0");
  if ((spectra.array() < 0.0).any() || !spectra.allFinite()) throw DomainError("spectral model: negative spectrum weight");
  for (Index k = 0; k < n_spectra(); ++k) {
    if (std::abs(spectra.col(k).sum() - 1.0) > 1e-12) {
      throw DomainError("spectral model: spectrum " + std::to_string(k) + " does not sum to 1");
    }
  }
  for (Index s : ray_spectrum) {
    if (s < 0 || s >= n_spectra()) throw DomainError("spectral model: ray refers to missing spectrum " + std::to_string(s));
  }
}

std::vector<Index> SpectralModel::dual_assignment(const GeometrySpec& geom) {
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(geom.n_rays()));
  out.insert(out.end(), geom.view_angles_low.size() * static_cast<std::size_t>(geom.n_bins), 0);
  out.insert(out.end(), geom.view_angles_high.size() * static_cast<std::size_t>(geom.n_bins), 1);
  return out;
}

double normalize_spectra(Matrix& spectra) {
  double worst = 0.0;
  for (Index k = 0; k < spectra.cols(); ++k) {
    const double sum = spectra.col(k).sum();
    if (!(sum > 0.0)) throw DomainError("spectrum " + std::to_string(k) + " has no positive weight");
    worst = std::max(worst, std::abs(sum - 1.0));
    spectra.col(k) /= sum;
  }
  return worst;
}

SpectralModel load_spectral_model(const std::string& spectra_csv, const std::string& materials_csv,
                                  std::vector<Index> ray_spectrum, std::string* warnings) {
  const io::CsvTable st = io::read_csv(spectra_csv);
  const io::CsvTable mt = io::read_csv(materials_csv);
  const Index s_idx = st.column("energy_bin_index");
  const Index m_idx = mt.column("energy_bin_index");
  if (st.values.rows() != mt.values.rows()) throw DimensionError("spectra and materials list different bin counts");
  if (st.values.rows() == 0) throw DomainError("no energy bins in " + spectra_csv);
  if (st.values.col(s_idx) != mt.values.col(m_idx)) throw DomainError("spectra and materials disagree on energy bins");

  SpectralModel model;
  const Index n_bins = st.values.rows();
  model.spectra.resize(n_bins, st.values.cols() - 1);
  for (Index c = 0, k = 0; c < st.values.cols(); ++c) {
    if (c != s_idx) model.spectra.col(k++) = st.values.col(c);
  }
  model.coeffs.resize(mt.values.cols() - 1, n_bins);
  for (Index c = 0, d = 0; c < mt.values.cols(); ++c) {
    if (c != m_idx) model.coeffs.row(d++) = mt.values.col(c).transpose();
  }
  if ((model.spectra.array() < 0.0).any()) throw DomainError(spectra_csv + ": negative weight");
  const double dev = normalize_spectra(model.spectra);
  if (dev > 1e-9 && warnings != nullptr) {
    std::ostringstream os;
    os << "spectra renormalized (largest deviation " << dev << ")";
    *warnings = os.str();
  }
  model.ray_spectrum = std::move(ray_spectrum);
  model.validate();
  return model;
}

SpectralForwardOp::SpectralForwardOp(SystemMatrix matrix, SpectralModel model)
    : matrix_(std::move(matrix)), model_(std::move(model)) {
  model_.validate();
  require_size(model_.n_rays(), matrix_.n_rows(), "spectral operator ray assignment");
  log_spectra_ = model_.spectra.unaryExpr([](double s) { return s > 0.0 ? std::log(s) : kNegInf; });
  row_norms_ = matrix_.row_norms();
}

Matrix SpectralForwardOp::project(const Vector& f) const {
  require_size(f.size(), image_size(), "project");
  return matrix_.rows * as_columns(f, n_pixels());
}

Vector SpectralForwardOp::back_project(const Matrix& w) const {
  if (w.rows() != n_rays() || w.cols() != n_materials()) throw DimensionError("back_project: weights must be J x D");
  Vector out(image_size());
  as_columns(out, n_pixels()).noalias() = matrix_.rows.transpose() * w;
  return out;
}

Vector SpectralForwardOp::forward_from_projection(const Matrix& p) const {
  const Matrix z = -p * model_.coeffs;  // J x M exponents
  Vector k(n_rays());
  for (Index j = 0; j < n_rays(); ++j) {
    const auto ls = log_spectra_.col(model_.ray_spectrum[static_cast<std::size_t>(j)]);
    double mx = kNegInf;
    for (Index m = 0; m < z.cols(); ++m) mx = std::max(mx, ls(m) + z(j, m));
    double sum = 0.0;
    for (Index m = 0; m < z.cols(); ++m) sum += std::exp(ls(m) + z(j, m) - mx);
    k(j) = mx + std::log(sum);
  }
  return k;
}

Matrix SpectralForwardOp::softmax_from_projection(const Matrix& p) const {
  Matrix w = -p * model_.coeffs;
  for (Index j = 0; j < n_rays(); ++j) {
    const auto ls = log_spectra_.col(model_.ray_spectrum[static_cast<std::size_t>(j)]);
    auto row = w.row(j);
    row += ls.transpose();
    const double mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
  return w;
}

Matrix SpectralForwardOp::gradient_coefficients(const Matrix& p) const {
  return softmax_from_projection(p) * model_.coeffs.transpose();
}

Matrix SpectralForwardOp::gradient_coefficients_at_zero() const {
  Matrix c(n_rays(), n_materials());
  const Matrix per_spectrum = model_.spectra.transpose() * model_.coeffs.transpose();  // S x D
  for (Index j = 0; j < n_rays(); ++j) c.row(j) = per_spectrum.row(model_.ray_spectrum[static_cast<std::size_t>(j)]);
  return c;
}

LinearizationState linearize(const SpectralForwardOp& op, const Vector& f) {
  require_finite(f, "linearize");
  return {f, op.gradient_coefficients(op.project(f))};
}

Vector forward(const SpectralForwardOp& op, const Vector& f) {
  require_finite(f, "forward");
  return op.forward_from_projection(op.project(f));
}

Matrix softmax_weights(const SpectralForwardOp& op, const Vector& f) {
  require_finite(f, "softmax_weights");
  return op.softmax_from_projection(op.project(f));
}

Vector grad_transpose_apply(const SpectralForwardOp& op, const LinearizationState& lin, const Vector& u) {
  require_size(u.size(), op.n_rays(), "grad_transpose_apply");
  return -op.back_project(lin.coefficients.array().colwise() * u.array());
}

Vector grad_transpose_apply(const SpectralForwardOp& op, const Vector& f, const Vector& u) {
  return grad_transpose_apply(op, linearize(op, f), u);
}

Vector jacobian_apply(const SpectralForwardOp& op, const LinearizationState& lin, const Vector& d) {
  return -(lin.coefficients.array() * op.project(d).array()).rowwise().sum();
}

Vector jacobian_apply(const SpectralForwardOp& op, const Vector& f, const Vector& d) {
  return jacobian_apply(op, linearize(op, f), d);
}

double lipschitz_estimate(const SpectralForwardOp& op, LipschitzMode mode, int samples, std::uint64_t seed) {
  const Matrix& b = op.model().coeffs;
  const double max_row_sq = op.row_norms().size() > 0 ? op.row_norms().array().square().maxCoeff() : 0.0;
  if (mode == LipschitzMode::Analytic) return max_row_sq * pairwise_spread(b);

  if (samples < 1) throw DomainError("lipschitz_estimate: need at least one sample");
  if (op.model().is_linear() || op.n_rays() == 0) return 0.0;

  // The per-ray Hessian is |a_j|^2-scaled alpha_j, where alpha_j = -d c_j / d p_j is
  // the D x D Jacobian of the coefficient map in line-integral space.
  const Index J = op.n_rays();
  const Index D = op.n_materials();
  const double h = 1e-5;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Vector norms_sq = op.row_norms().array().square();
  double best = 0.0;
  for (int s = 0; s < samples; ++s) {
    Vector f(op.image_size());
    for (Index i = 0; i < f.size(); ++i) f(i) = unit(rng);
    const Matrix p = op.project(f);
    Matrix y(J, D);
    for (Index i = 0; i < y.size(); ++i) y.data()[i] = normal(rng);
    Vector mu = Vector::Zero(J);
    for (int it = 0; it < 50; ++it) {
      y.rowwise().normalize();
      const Matrix hy = -(op.gradient_coefficients(p + h * y) - op.gradient_coefficients(p - h * y)) / (2.0 * h);
      mu = (hy.array() * y.array()).rowwise().sum().abs();
      y = hy;
      for (Index j = 0; j < J; ++j) {
        if (y.row(j).norm() == 0.0) y.row(j).setOnes();
      }
    }
    best = std::max(best, (mu.array() * norms_sq.array()).maxCoeff());
  }
  return best;
}

double jacobian_lipschitz_bound(const SpectralForwardOp& op, double matrix_norm) {
  const double max_row = op.row_norms().size() > 0 ? op.row_norms().maxCoeff() : 0.0;
  return max_row * matrix_norm * pairwise_spread(op.model().coeffs);
}

double jacobian_norm_bound(const SpectralForwardOp& op, double matrix_norm) {
  return matrix_norm * op.model().coeffs.rowwise().maxCoeff().norm();
}

bool coefficients_comonotone(const SpectralModel& model) {
  const Matrix& b = model.coeffs;
  for (Index m = 0; m < b.cols(); ++m) {
    for (Index n = m + 1; n < b.cols(); ++n) {
      bool up = false;
      bool down = false;
      for (Index d = 0; d < b.rows(); ++d) {
        up = up || b(d, m) > b(d, n);
        down = down || b(d, m) < b(d, n);
      }
      if (up && down) return false;
    }
  }
  return true;
}

std::optional<double> jacobian_norm_nonneg_bound(const SpectralForwardOp& op) {
  if (!coefficients_comonotone(op.model())) return std::nullopt;
  // Power iteration approaches from below; the small factor covers its residual error.
  return jacobian_norm(op, Vector::Zero(op.image_size()), 1000, 1e-13).value * (1.0 + 1e-6);
}

NormEstimate jacobian_norm(const SpectralForwardOp& op, const Vector& f, int iters, double tol) {
  const LinearizationState lin = linearize(op, f);
  LinearOperator jac;
  jac.rows = op.n_rays();
  jac.cols = op.image_size();
  jac.apply = [&op, &lin](const Vector& d) { return jacobian_apply(op, lin, d); };
  jac.adjoint = [&op, &lin](const Vector& u) { return grad_transpose_apply(op, lin, u); };
  return operator_norm(jac, iters, tol);
}

Matrix ratio_matrix(const SpectralForwardOp& op, const Vector& f, const Vector& f2) {
  if ((f.array() < 0.0).any() || (f2.array() < 0.0).any()) {
    throw DomainError("ratio_matrix: inputs must be componentwise nonnegative");
  }
  const Matrix c1 = linearize(op, f).coefficients;
  const Matrix c2 = linearize(op, f2).coefficients;
  // c2 >= min_m b_dm > 0 by the model invariant.
  return c1.cwiseQuotient(c2);
}

double constant_CR(const SpectralForwardOp& op) {
  const Matrix& b = op.model().coeffs;
  const double spread = (b.rowwise().maxCoeff() - b.rowwise().minCoeff()).sum();
  const double ratio = (b.rowwise().norm().array() / b.rowwise().minCoeff().array()).maxCoeff();
  const double max_row = op.row_norms().size() > 0 ? op.row_norms().maxCoeff() : 0.0;
  return spread * ratio * max_row;
}

GeneralizedLSEOp::GeneralizedLSEOp(Eigen::SparseMatrix<double, Eigen::RowMajor> terms, Vector weights,
                                   std::vector<Index> offsets)
    : terms_(std::move(terms)), weights_(std::move(weights)), offsets_(std::move(offsets)) {
  require_size(weights_.size(), terms_.rows(), "generalized operator weights");
  if (offsets_.empty() || offsets_.front() != 0 || offsets_.back() != terms_.rows()) {
    throw DimensionError("generalized operator: offsets must run from 0 to the term count");
  }
  if ((weights_.array() < 0.0).any()) throw DomainError("generalized operator: negative term weight");
  for (std::size_t j = 0; j + 1 < offsets_.size(); ++j) {
    const Index len = offsets_[j + 1] - offsets_[j];
    if (len <= 0) throw DomainError("generalized operator: output " + std::to_string(j) + " has no terms");
    if (std::abs(weights_.segment(offsets_[j], len).sum() - 1.0) > 1e-12) {
      throw DomainError("generalized operator: weights of output " + std::to_string(j) + " do not sum to 1");
    }
  }
}

GeneralizedLSEOp GeneralizedLSEOp::npve(const SystemMatrix& subrays, const std::vector<std::vector<Index>>& groups) {
  std::vector<Eigen::Triplet<double>> trips;
  std::vector<Index> offsets{0};
  std::vector<double> w;
  Index row = 0;
  for (const auto& group : groups) {
    for (Index l : group) {
      if (l < 0 || l >= subrays.n_rows()) throw DimensionError("npve: sub-ray index out of range");
      for (SystemMatrix::Storage::InnerIterator it(subrays.rows, l); it; ++it) {
        trips.emplace_back(row, static_cast<Index>(it.col()), it.value());
      }
      w.push_back(1.0 / static_cast<double>(group.size()));
      ++row;
    }
    offsets.push_back(row);
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> terms(row, subrays.n_cols());
  terms.setFromTriplets(trips.begin(), trips.end());
  return {std::move(terms), Eigen::Map<const Vector>(w.data(), static_cast<Index>(w.size())), std::move(offsets)};
}

Vector forward_general(const GeneralizedLSEOp& op, const Vector& f) {
  require_size(f.size(), op.n_cols(), "forward_general");
  require_finite(f, "forward_general");
  const Vector t = op.terms() * f;
  Vector k(op.n_outputs());
  for (Index j = 0; j < op.n_outputs(); ++j) {
    const Index lo = op.offsets()[static_cast<std::size_t>(j)];
    const Index hi = op.offsets()[static_cast<std::size_t>(j) + 1];
    double mx = kNegInf;
    for (Index m = lo; m < hi; ++m) {
      if (op.weights()(m) > 0.0) mx = std::max(mx, std::log(op.weights()(m)) - t(m));
    }
    double sum = 0.0;
    for (Index m = lo; m < hi; ++m) {
      if (op.weights()(m) > 0.0) sum += std::exp(std::log(op.weights()(m)) - t(m) - mx);
    }
    k(j) = mx + std::log(sum);
  }
  return k;
}

}  // namespace epd
