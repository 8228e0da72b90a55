#pragma once

#include <Eigen/SparseCore>

#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "epd/common.hpp"

namespace epd {

/// 2D parallel-beam scan. Bins are spread evenly over
/// [-detector_half_width, detector_half_width]; a single bin sits at 0.
struct GeometrySpec {
  Index n_side = 32;
  double domain_extent = 5.0;
  Index n_bins = 181;
  double detector_half_width = 7.05;
  std::vector<double> view_angles_low;
  std::vector<double> view_angles_high;
  double angular_gap = 0.0;

  /// Views uniform over [0, pi) for the low spectrum and [gap, gap + pi) for the high one.
  static GeometrySpec dual_scan(Index n_side, Index n_bins, Index views_per_spectrum, double gap);

  Index n_views() const { return static_cast<Index>(view_angles_low.size() + view_angles_high.size()); }
  Index n_rays() const { return n_views() * n_bins; }
  double pixel_size() const { return 2.0 * domain_extent / static_cast<double>(n_side); }
  double bin_position(Index bin) const;

  /// Throws DomainError describing the first violated constraint.
  void validate() const;
};

/// Sparse ray matrix; row j holds the intersection lengths of ray j with the pixels.
struct SystemMatrix {
  using Storage = Eigen::SparseMatrix<double, Eigen::RowMajor, std::int64_t>;
  Storage rows;

  Index n_rows() const { return rows.rows(); }
  Index n_cols() const { return rows.cols(); }
  Index nnz() const { return rows.nonZeros(); }

  /// Euclidean norm of every row.
  Vector row_norms() const;
};

SystemMatrix build_parallel_projector(const GeometrySpec& geom);

Vector apply(const SystemMatrix& m, const Vector& x);
Vector apply_adjoint(const SystemMatrix& m, const Vector& y);

/// Binary triplet file: magic, n_rows, n_cols, nnz as int64 LE, then row indices,
/// column indices (int64) and weights (float64).
void save_system_matrix(const SystemMatrix& m, const std::string& path);
SystemMatrix load_system_matrix(const std::string& path);

enum class BoundaryRule { Replicate };

/// Forward differences per material, horizontal block then vertical block.
struct GradientOperator {
  Index n_side = 0;
  Index n_materials = 1;
  BoundaryRule boundary = BoundaryRule::Replicate;

  Index in_size() const { return n_side * n_side * n_materials; }
  Index out_size() const { return 2 * in_size(); }
  Eigen::SparseMatrix<double> to_sparse() const;
};

Vector gradient_apply(const GradientOperator& g, const Vector& f);
Vector gradient_adjoint(const GradientOperator& g, const Vector& v);

/// Type-erased linear map with its adjoint, for norm estimation.
struct LinearOperator {
  Index rows = 0;
  Index cols = 0;
  std::function<Vector(const Vector&)> apply;
  std::function<Vector(const Vector&)> adjoint;
};

LinearOperator as_operator(const SystemMatrix& m);
LinearOperator as_operator(const GradientOperator& g);
LinearOperator as_operator(const Matrix& dense);

struct NormEstimate {
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Largest singular value by power iteration on A^T A from a seeded start vector.
NormEstimate operator_norm(const LinearOperator& op, int iters = 200, double tol = 1e-8, std::uint64_t seed = 7);

}  // namespace epd
