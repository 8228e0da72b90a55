#include "epd/linops.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

namespace epd {

GeometrySpec GeometrySpec::dual_scan(Index n_side, Index n_bins, Index views_per_spectrum, double gap) {
  GeometrySpec g;
  g.n_side = n_side;
  g.n_bins = n_bins;
  g.angular_gap = gap;
  const double step = std::numbers::pi / static_cast<double>(views_per_spectrum);
  for (Index k = 0; k < views_per_spectrum; ++k) {
    g.view_angles_low.push_back(step * static_cast<double>(k));
    g.view_angles_high.push_back(gap + step * static_cast<double>(k));
  }
  return g;
}

double GeometrySpec::bin_position(Index bin) const {
  if (n_bins == 1) return 0.0;
  return -detector_half_width + 2.0 * detector_half_width * static_cast<double>(bin) / static_cast<double>(n_bins - 1);
}

void GeometrySpec::validate() const {
  if (n_side < 1) throw DomainError("geometry: n_side must be >= 1");
  if (n_bins < 1) throw DomainError("geometry: n_bins must be >= 1");
  if (!(domain_extent > 0.0)) throw DomainError("geometry: domain_extent must be > 0");
  if (!(detector_half_width >= 0.0)) throw DomainError("geometry: detector_half_width must be >= 0");
  const double two_pi = 2.0 * std::numbers::pi;
  for (const auto* list : {&view_angles_low, &view_angles_high}) {
    for (double a : *list) {
      if (!(a >= 0.0 && a < two_pi)) throw DomainError("geometry: view angle outside [0, 2pi)");
    }
  }
}

Vector SystemMatrix::row_norms() const {
  Vector out(n_rows());
  for (Index j = 0; j < rows.outerSize(); ++j) {
    double s = 0.0;
    for (Storage::InnerIterator it(rows, j); it; ++it) s += it.value() * it.value();
    out(j) = std::sqrt(s);
  }
  return out;
}

namespace {

// Siddon traversal of the line {t e_t + s e_s} through the pixel grid. Appends
// (pixel, length) pairs in order of increasing s.
void trace_ray(const GeometrySpec& geom, double angle, double t, std::vector<Eigen::Triplet<double, std::int64_t>>& out,
               std::int64_t row) {
  const double L = geom.domain_extent;
  const double h = geom.pixel_size();
  const Index n = geom.n_side;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  // point on the ray closest to the origin, and the direction of travel
  const double px = t * c;
  const double py = t * s;
  const double dx = -s;
  const double dy = c;

  constexpr double kParallel = 1e-14;
  double a_min = -std::numeric_limits<double>::infinity();
  double a_max = std::numeric_limits<double>::infinity();
  auto clip = [&](double p, double d) {
    if (std::abs(d) < kParallel) {
      return p >= -L && p <= L;
    }
    double a0 = (-L - p) / d;
    double a1 = (L - p) / d;
    if (a0 > a1) std::swap(a0, a1);
    a_min = std::max(a_min, a0);
    a_max = std::min(a_max, a1);
    return true;
  };
  if (!clip(px, dx) || !clip(py, dy)) return;
  if (!(a_max > a_min)) return;

  std::vector<double> alphas;
  alphas.reserve(static_cast<std::size_t>(2 * n + 2));
  alphas.push_back(a_min);
  alphas.push_back(a_max);
  auto crossings = [&](double p, double d) {
    if (std::abs(d) < kParallel) return;
    for (Index k = 0; k <= n; ++k) {
      const double a = (-L + static_cast<double>(k) * h - p) / d;
      if (a > a_min && a < a_max) alphas.push_back(a);
    }
  };
  crossings(px, dx);
  crossings(py, dy);
  std::sort(alphas.begin(), alphas.end());

  for (std::size_t k = 0; k + 1 < alphas.size(); ++k) {
    const double len = alphas[k + 1] - alphas[k];
    if (len <= 1e-13 * h) continue;
    const double mid = 0.5 * (alphas[k] + alphas[k + 1]);
    const double x = px + mid * dx;
    const double y = py + mid * dy;
    const Index col = std::clamp<Index>(static_cast<Index>(std::floor((x + L) / h)), 0, n - 1);
    const Index r = std::clamp<Index>(static_cast<Index>(std::floor((L - y) / h)), 0, n - 1);
    out.emplace_back(row, r * n + col, len);
  }
}

}  // namespace

SystemMatrix build_parallel_projector(const GeometrySpec& geom) {
  geom.validate();
  const Index J = geom.n_rays();
  std::vector<Eigen::Triplet<double, std::int64_t>> trips;
  trips.reserve(static_cast<std::size_t>(J * 2 * geom.n_side));
  std::int64_t row = 0;
  for (const auto* list : {&geom.view_angles_low, &geom.view_angles_high}) {
    for (double angle : *list) {
      for (Index b = 0; b < geom.n_bins; ++b, ++row) trace_ray(geom, angle, geom.bin_position(b), trips, row);
    }
  }
  SystemMatrix m;
  m.rows.resize(J, geom.n_side * geom.n_side);
  m.rows.setFromTriplets(trips.begin(), trips.end());
  m.rows.makeCompressed();
  return m;
}

Vector apply(const SystemMatrix& m, const Vector& x) {
  require_size(x.size(), m.n_cols(), "apply");
  return m.rows * x;
}

Vector apply_adjoint(const SystemMatrix& m, const Vector& y) {
  require_size(y.size(), m.n_rows(), "apply_adjoint");
  return m.rows.transpose() * y;
}

namespace {

constexpr std::int64_t kMatrixMagic = 0x31584d5953445045;  // "EPDSYMX1"

static_assert(std::endian::native == std::endian::little, "triplet files are written in native little-endian order");

template <typename T>
void write_pod(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error("system matrix file truncated");
  return v;
}

}  // namespace

void save_system_matrix(const SystemMatrix& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  const auto nnz = static_cast<std::int64_t>(m.nnz());
  write_pod(os, kMatrixMagic);
  write_pod(os, static_cast<std::int64_t>(m.n_rows()));
  write_pod(os, static_cast<std::int64_t>(m.n_cols()));
  write_pod(os, nnz);
  std::vector<std::int64_t> ri, ci;
  std::vector<double> w;
  ri.reserve(static_cast<std::size_t>(nnz));
  ci.reserve(static_cast<std::size_t>(nnz));
  w.reserve(static_cast<std::size_t>(nnz));
  for (Index j = 0; j < m.rows.outerSize(); ++j) {
    for (SystemMatrix::Storage::InnerIterator it(m.rows, j); it; ++it) {
      ri.push_back(j);
      ci.push_back(it.col());
      w.push_back(it.value());
    }
  }
  os.write(reinterpret_cast<const char*>(ri.data()), static_cast<std::streamsize>(ri.size() * sizeof(std::int64_t)));
  os.write(reinterpret_cast<const char*>(ci.data()), static_cast<std::streamsize>(ci.size() * sizeof(std::int64_t)));
  os.write(reinterpret_cast<const char*>(w.data()), static_cast<std::streamsize>(w.size() * sizeof(double)));
  if (!os) throw Error("failed writing " + path);
}

SystemMatrix load_system_matrix(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  if (read_pod<std::int64_t>(is) != kMatrixMagic) throw Error(path + ": not a system matrix file");
  const auto n_rows = read_pod<std::int64_t>(is);
  const auto n_cols = read_pod<std::int64_t>(is);
  const auto nnz = read_pod<std::int64_t>(is);
  if (n_rows < 0 || n_cols < 0 || nnz < 0) throw Error(path + ": negative header field");
  std::vector<std::int64_t> ri(static_cast<std::size_t>(nnz)), ci(static_cast<std::size_t>(nnz));
  std::vector<double> w(static_cast<std::size_t>(nnz));
  is.read(reinterpret_cast<char*>(ri.data()), static_cast<std::streamsize>(nnz * 8));
  is.read(reinterpret_cast<char*>(ci.data()), static_cast<std::streamsize>(nnz * 8));
  is.read(reinterpret_cast<char*>(w.data()), static_cast<std::streamsize>(nnz * 8));
  if (!is) throw Error(path + ": truncated payload");
  std::vector<Eigen::Triplet<double, std::int64_t>> trips;
  trips.reserve(static_cast<std::size_t>(nnz));
  for (std::size_t k = 0; k < ri.size(); ++k) {
    if (ri[k] < 0 || ri[k] >= n_rows || ci[k] < 0 || ci[k] >= n_cols) throw Error(path + ": index out of range");
    trips.emplace_back(ri[k], ci[k], w[k]);
  }
  SystemMatrix m;
  m.rows.resize(n_rows, n_cols);
  m.rows.setFromTriplets(trips.begin(), trips.end());
  m.rows.makeCompressed();
  return m;
}

Vector gradient_apply(const GradientOperator& g, const Vector& f) {
  require_size(f.size(), g.in_size(), "gradient_apply");
  const Index n = g.n_side;
  const Index N = n * n;
  Vector out = Vector::Zero(g.out_size());
  for (Index d = 0; d < g.n_materials; ++d) {
    const double* img = f.data() + d * N;
    double* gx = out.data() + 2 * d * N;
    double* gy = gx + N;
    for (Index r = 0; r < n; ++r) {
      for (Index c = 0; c < n; ++c) {
        const Index p = r * n + c;
        if (c + 1 < n) gx[p] = img[p + 1] - img[p];
        if (r + 1 < n) gy[p] = img[p + n] - img[p];
      }
    }
  }
  return out;
}

Vector gradient_adjoint(const GradientOperator& g, const Vector& v) {
  require_size(v.size(), g.out_size(), "gradient_adjoint");
  const Index n = g.n_side;
  const Index N = n * n;
  Vector out = Vector::Zero(g.in_size());
  for (Index d = 0; d < g.n_materials; ++d) {
    double* img = out.data() + d * N;
    const double* gx = v.data() + 2 * d * N;
    const double* gy = gx + N;
    for (Index r = 0; r < n; ++r) {
      for (Index c = 0; c < n; ++c) {
        const Index p = r * n + c;
        if (c + 1 < n) {
          img[p + 1] += gx[p];
          img[p] -= gx[p];
        }
        if (r + 1 < n) {
          img[p + n] += gy[p];
          img[p] -= gy[p];
        }
      }
    }
  }
  return out;
}

Eigen::SparseMatrix<double> GradientOperator::to_sparse() const {
  const Index n = n_side;
  const Index N = n * n;
  std::vector<Eigen::Triplet<double>> trips;
  for (Index d = 0; d < n_materials; ++d) {
    for (Index r = 0; r < n; ++r) {
      for (Index c = 0; c < n; ++c) {
        const Index p = r * n + c;
        const Index col = d * N + p;
        if (c + 1 < n) {
          trips.emplace_back(2 * d * N + p, col + 1, 1.0);
          trips.emplace_back(2 * d * N + p, col, -1.0);
        }
        if (r + 1 < n) {
          trips.emplace_back(2 * d * N + N + p, col + n, 1.0);
          trips.emplace_back(2 * d * N + N + p, col, -1.0);
        }
      }
    }
  }
  Eigen::SparseMatrix<double> s(out_size(), in_size());
  s.setFromTriplets(trips.begin(), trips.end());
  return s;
}

LinearOperator as_operator(const SystemMatrix& m) {
  return {m.n_rows(), m.n_cols(), [&m](const Vector& x) { return apply(m, x); },
          [&m](const Vector& y) { return apply_adjoint(m, y); }};
}

LinearOperator as_operator(const GradientOperator& g) {
  return {g.out_size(), g.in_size(), [g](const Vector& x) { return gradient_apply(g, x); },
          [g](const Vector& y) { return gradient_adjoint(g, y); }};
}

LinearOperator as_operator(const Matrix& dense) {
  return {dense.rows(), dense.cols(), [&dense](const Vector& x) -> Vector { return dense * x; },
          [&dense](const Vector& y) -> Vector { return dense.transpose() * y; }};
}

NormEstimate operator_norm(const LinearOperator& op, int iters, double tol, std::uint64_t seed) {
  NormEstimate est;
  if (op.cols == 0 || op.rows == 0) {
    est.converged = true;
    return est;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Vector x(op.cols);
  for (Index i = 0; i < x.size(); ++i) x(i) = normal(rng);
  x.normalize();
  double prev = 0.0;
  for (int k = 1; k <= iters; ++k) {
    Vector y = op.adjoint(op.apply(x));
    const double lambda = x.dot(y);  // Rayleigh quotient of A^T A
    const double ynorm = y.norm();
    est.iterations = k;
    est.value = std::sqrt(std::max(lambda, 0.0));
    if (ynorm == 0.0) {
      est.converged = true;
      return est;
    }
    x = y / ynorm;
    if (k > 1 && std::abs(lambda - prev) <= tol * std::abs(lambda)) {
      est.converged = true;
      return est;
    }
    prev = lambda;
  }
  return est;
}

}  // namespace epd
