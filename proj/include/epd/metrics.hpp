#pragma once

#include <iosfwd>
#include <vector>

#include "epd/common.hpp"
#include "epd/linops.hpp"
#include "epd/spectral.hpp"

namespace epd {

/// RE, RD, RT. A quantity whose reference norm is zero is NaN (undefined).
struct RelativeMetrics {
  double re = 0.0;
  double rd = 0.0;
  double rt = 0.0;
};

/// |f - f_truth| / |f_truth|.
double relative_error(const Vector& f, const Vector& truth);
/// |K(f) - g|^2 / |g|^2, from a precomputed K(f).
double relative_data_fit(const Vector& k_of_f, const Vector& g);
/// | |grad f|_1 - |grad f_truth|_1 | / |grad f_truth|_1.
double relative_tv(const Vector& f, const Vector& truth, const GradientOperator& grad);

RelativeMetrics relative_metrics(const Vector& f, const Vector& truth, const Vector& g, const SpectralForwardOp& op,
                                 const GradientOperator& grad);

struct QualityMetrics {
  double one_minus_ssim = 0.0;
  double psnr_db = 0.0;  ///< +inf for identical images
  double mse = 0.0;
  double max_diff = 0.0;
};

inline constexpr double kPsnrPeak = 1.0;
inline constexpr Index kSsimWindow = 8;

/// Mean SSIM over all 8x8 windows with uniform weights, C1 = (0.01 peak)^2, C2 = (0.03 peak)^2.
/// Images smaller than the window use a single window covering the whole image.
double ssim(const Matrix& img, const Matrix& ref);

QualityMetrics quality_metrics(const Matrix& img, const Matrix& ref);

/// Image block d of a stacked vector as an n_side x n_side matrix (row-major pixels).
Matrix material_image(const Vector& f, Index n_side, Index d);

struct MetricReport {
  RelativeMetrics relative;
  std::vector<QualityMetrics> per_material;
};

/// Header mentions the PSNR peak so values are interpretable.
void write_metric_header(std::ostream& os, Index n_materials);
void write_metric_row(std::ostream& os, const MetricReport& r);

}  // namespace epd
