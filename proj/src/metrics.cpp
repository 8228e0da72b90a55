#include "epd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "epd/io.hpp"

namespace epd {

namespace {

constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

// Sum over a box [r0, r0 + k) x [c0, c0 + k) from a summed-area table with a zero border.
double box_sum(const Matrix& sat, Index r0, Index c0, Index kr, Index kc) {
  return sat(r0 + kr, c0 + kc) - sat(r0, c0 + kc) - sat(r0 + kr, c0) + sat(r0, c0);
}

Matrix summed_area(const Matrix& x) {
  Matrix sat = Matrix::Zero(x.rows() + 1, x.cols() + 1);
  for (Index r = 0; r < x.rows(); ++r) {
    for (Index c = 0; c < x.cols(); ++c) sat(r + 1, c + 1) = x(r, c) + sat(r, c + 1) + sat(r + 1, c) - sat(r, c);
  }
  return sat;
}

}  // namespace

double relative_error(const Vector& f, const Vector& truth) {
  require_size(f.size(), truth.size(), "relative_error");
  const double denom = truth.norm();
  return denom > 0.0 ? (f - truth).norm() / denom : kUndefined;
}

double relative_data_fit(const Vector& k_of_f, const Vector& g) {
  require_size(k_of_f.size(), g.size(), "relative_data_fit");
  const double denom = g.squaredNorm();
  return denom > 0.0 ? (k_of_f - g).squaredNorm() / denom : kUndefined;
}

double relative_tv(const Vector& f, const Vector& truth, const GradientOperator& grad) {
  const double ref = gradient_apply(grad, truth).lpNorm<1>();
  if (!(ref > 0.0)) return kUndefined;
  return std::abs(gradient_apply(grad, f).lpNorm<1>() - ref) / ref;
}

RelativeMetrics relative_metrics(const Vector& f, const Vector& truth, const Vector& g, const SpectralForwardOp& op,
                                 const GradientOperator& grad) {
  return {relative_error(f, truth), relative_data_fit(forward(op, f), g), relative_tv(f, truth, grad)};
}

double ssim(const Matrix& img, const Matrix& ref) {
  if (img.rows() != ref.rows() || img.cols() != ref.cols()) throw DimensionError("ssim: image sizes differ");
  if (img.size() == 0) throw DimensionError("ssim: empty image");
  const double c1 = (0.01 * kPsnrPeak) * (0.01 * kPsnrPeak);
  const double c2 = (0.03 * kPsnrPeak) * (0.03 * kPsnrPeak);
  const Index kr = std::min(kSsimWindow, img.rows());
  const Index kc = std::min(kSsimWindow, img.cols());
  const double n = static_cast<double>(kr * kc);

  const Matrix sx = summed_area(img);
  const Matrix sy = summed_area(ref);
  const Matrix sxx = summed_area(img.cwiseProduct(img));
  const Matrix syy = summed_area(ref.cwiseProduct(ref));
  const Matrix sxy = summed_area(img.cwiseProduct(ref));

  double total = 0.0;
  Index count = 0;
  for (Index r = 0; r + kr <= img.rows(); ++r) {
    for (Index c = 0; c + kc <= img.cols(); ++c) {
      const double mx = box_sum(sx, r, c, kr, kc) / n;
      const double my = box_sum(sy, r, c, kr, kc) / n;
      const double vx = std::max(0.0, box_sum(sxx, r, c, kr, kc) / n - mx * mx);
      const double vy = std::max(0.0, box_sum(syy, r, c, kr, kc) / n - my * my);
      const double cxy = box_sum(sxy, r, c, kr, kc) / n - mx * my;
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

QualityMetrics quality_metrics(const Matrix& img, const Matrix& ref) {
  if (img.rows() != ref.rows() || img.cols() != ref.cols()) throw DimensionError("quality_metrics: image sizes differ");
  QualityMetrics q;
  const Matrix diff = img - ref;
  q.mse = diff.squaredNorm() / static_cast<double>(diff.size());
  q.max_diff = diff.cwiseAbs().maxCoeff();
  q.psnr_db = q.mse > 0.0 ? 10.0 * std::log10(kPsnrPeak * kPsnrPeak / q.mse) : std::numeric_limits<double>::infinity();
  q.one_minus_ssim = 1.0 - ssim(img, ref);
  return q;
}

Matrix material_image(const Vector& f, Index n_side, Index d) {
  const Index n = n_side * n_side;
  if ((d + 1) * n > f.size()) throw DimensionError("material_image: material index out of range");
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(f.data() + d * n,
                                                                                                   n_side, n_side);
}

void write_metric_header(std::ostream& os, Index n_materials) {
  os << "# psnr_peak=" << io::format_double(kPsnrPeak) << '\n' << "RE,RD,RT";
  for (Index d = 1; d <= n_materials; ++d) {
    os << ",one_minus_ssim_" << d << ",psnr_db_" << d << ",mse_" << d << ",max_diff_" << d;
  }
  os << '\n';
}

void write_metric_row(std::ostream& os, const MetricReport& r) {
  using io::format_double;
  os << format_double(r.relative.re) << ',' << format_double(r.relative.rd) << ',' << format_double(r.relative.rt);
  for (const auto& q : r.per_material) {
    os << ',' << format_double(q.one_minus_ssim) << ',' << format_double(q.psnr_db) << ',' << format_double(q.mse) << ','
       << format_double(q.max_diff);
  }
  os << '\n';
}

}  // namespace epd
