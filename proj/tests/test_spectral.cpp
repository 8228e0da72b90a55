#include <doctest.h>

#include <cmath>

#include "epd/spectral.hpp"
#include "support.hpp"

using namespace epd;
using epd::testing::make_op;
using epd::testing::rel_diff;

namespace {

// one pixel, one ray of unit length, D = 1, b = [1, 2], s = [0.5, 0.5]
SpectralForwardOp two_bin_toy(double a = 1.0) {
  Matrix am(1, 1);
  am << a;
  Matrix s(2, 1);
  s << 0.5, 0.5;
  Matrix b(1, 2);
  b << 1.0, 2.0;
  return make_op(am, s, b, {0});
}

// K_j(f) = ln sum_m s_m exp(-sum_d b_dm p_jd) in long double, straight from the definition
Vector direct_forward(const Matrix& a, const Matrix& s, const Matrix& b, const std::vector<Index>& ray_spectrum,
                      const Vector& f) {
  const Index n = a.cols();
  const Index d_count = b.rows();
  Vector out(a.rows());
  for (Index j = 0; j < a.rows(); ++j) {
    long double acc = 0.0L;
    for (Index m = 0; m < b.cols(); ++m) {
      long double z = 0.0L;
      for (Index d = 0; d < d_count; ++d) z += b(d, m) * a.row(j).dot(f.segment(d * n, n));
      acc += static_cast<long double>(s(m, ray_spectrum[j])) * std::exp(-z);
    }
    out(j) = static_cast<double>(std::log(acc));
  }
  return out;
}

}  // namespace

TEST_CASE("two-bin toy matches a 40-digit evaluation") {
  const SpectralForwardOp op = two_bin_toy();
  // ln(0.5 e^-1 + 0.5 e^-2) evaluated with 40 significant digits
  constexpr double kReference = -1.37988549304172247536823662649032092616;
  CHECK(std::abs(forward(op, Vector::Ones(1))(0) - kReference) <= 4e-16);
}

TEST_CASE("zero image gives zero data and the spectra as weights") {
  const auto p = epd::testing::small_problem(8, 9, 4);
  const Vector f = Vector::Zero(p.op.image_size());
  CHECK(forward(p.op, f).cwiseAbs().maxCoeff() <= 1e-15);
  const Matrix w = softmax_weights(p.op, f);
  for (Index j = 0; j < p.op.n_rays(); ++j) {
    const Index k = p.op.model().ray_spectrum[static_cast<std::size_t>(j)];
    CHECK((w.row(j).transpose() - p.op.model().spectra.col(k)).cwiseAbs().maxCoeff() <= 1e-15);
  }
}

TEST_CASE("single bin gives an exactly linear operator") {
  const auto p = epd::testing::small_problem(8, 9, 4);
  const SpectralForwardOp lin = epd::testing::linear_variant(p.op, 0.2, 0.5);
  CHECK(lin.model().is_linear());
  std::mt19937_64 rng(4);
  const Vector f = epd::testing::uniform(lin.image_size(), rng);
  const Matrix proj = lin.project(f);
  const Vector expected = -(0.2 * proj.col(0) + 0.5 * proj.col(1));
  CHECK((forward(lin, f) - expected).cwiseAbs().maxCoeff() <= 1e-13);
  const Vector d = epd::testing::gaussian(lin.image_size(), rng);
  const Vector f2 = epd::testing::uniform(lin.image_size(), rng);
  CHECK((jacobian_apply(lin, f, d) - jacobian_apply(lin, f2, d)).norm() <= 1e-13);
}

TEST_CASE("forward agrees with a long-double direct evaluation") {
  std::mt19937_64 rng(5);
  const Matrix a = epd::testing::uniform(12, rng).reshaped(3, 4) * 2.0;
  Matrix s = epd::testing::uniform(6, rng).reshaped(3, 2);
  for (Index k = 0; k < 2; ++k) s.col(k) /= s.col(k).sum();
  const Matrix b = epd::testing::uniform(6, rng, 0.1, 1.5).reshaped(2, 3);
  const std::vector<Index> rs{0, 1, 1};
  const SpectralForwardOp op = make_op(a, s, b, rs);
  for (int t = 0; t < 5; ++t) {
    const Vector f = epd::testing::uniform(8, rng, 0.0, 3.0);
    CHECK(rel_diff(forward(op, f), direct_forward(a, s, b, rs, f)) <= 1e-14);
  }
}

TEST_CASE("forward is stable for large line integrals") {
  const SpectralForwardOp op = two_bin_toy();
  const double k = forward(op, Vector::Constant(1, 800.0))(0);
  // ln(0.5 e^-800 (1 + e^-800)) = -800 - ln 2
  CHECK(std::isfinite(k));
  CHECK(k == doctest::Approx(-800.0 - std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("degenerate spectrum keeps its weight on one bin") {
  Matrix am(1, 1);
  am << 1.0;
  Matrix s(2, 1);
  s << 1.0, 0.0;
  Matrix b(1, 2);
  b << 1.0, 2.0;
  const SpectralForwardOp op = make_op(am, s, b, {0});
  for (double x : {0.0, 0.5, 7.0}) {
    const Matrix w = softmax_weights(op, Vector::Constant(1, x));
    CHECK(w(0, 0) == 1.0);
    CHECK(w(0, 1) == 0.0);
  }
}

TEST_CASE("softmax weights sum to one and match the direct formula") {
  const auto p = epd::testing::small_problem(8, 9, 4);
  std::mt19937_64 rng(6);
  const Vector f = epd::testing::uniform(p.op.image_size(), rng);
  const Matrix w = softmax_weights(p.op, f);
  const Matrix proj = p.op.project(f);
  const Matrix& b = p.op.model().coeffs;
  for (Index j = 0; j < p.op.n_rays(); ++j) {
    CHECK(std::abs(w.row(j).sum() - 1.0) <= 1e-14);
    const Vector s = p.op.model().spectra.col(p.op.model().ray_spectrum[static_cast<std::size_t>(j)]);
    Vector direct(b.cols());
    for (Index m = 0; m < b.cols(); ++m) direct(m) = s(m) * std::exp(-b.col(m).dot(proj.row(j).transpose()));
    direct /= direct.sum();
    CHECK((w.row(j).transpose() - direct).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("gradient at zero for a single ray is -(s.b) u a") {
  Matrix am(1, 3);
  am << 0.5, 1.0, 2.0;
  Matrix s(2, 1);
  s << 0.25, 0.75;
  Matrix b(1, 2);
  b << 1.0, 3.0;
  const SpectralForwardOp op = make_op(am, s, b, {0});
  const Vector g = grad_transpose_apply(op, Vector::Zero(3), Vector::Constant(1, 2.0));
  const double sb = 0.25 * 1.0 + 0.75 * 3.0;
  const Vector expected = (-sb * 2.0) * am.row(0).transpose();
  CHECK((g - expected).norm() <= 4e-16 * expected.norm());
  CHECK(grad_transpose_apply(op, Vector::Ones(3), Vector::Zero(1)).isZero(0.0));
  CHECK(jacobian_apply(op, Vector::Ones(3), Vector::Zero(3)).isZero(0.0));
}

TEST_CASE("gradient products match central differences and each other") {
  const auto p = epd::testing::small_problem(8, 11, 5);
  std::mt19937_64 rng(7);
  const double h = 1e-6;
  for (int t = 0; t < 20; ++t) {
    const Vector f = epd::testing::uniform(p.op.image_size(), rng);
    const Vector d = epd::testing::gaussian(p.op.image_size(), rng);
    const Vector u = epd::testing::gaussian(p.op.n_rays(), rng);
    const Vector fd = (forward(p.op, f + h * d) - forward(p.op, f - h * d)) / (2.0 * h);
    const Vector jd = jacobian_apply(p.op, f, d);
    CHECK(rel_diff(jd, fd) <= 1e-6);
    CHECK(rel_diff(grad_transpose_apply(p.op, f, u).dot(d), u.dot(fd)) <= 1e-6);
    CHECK(rel_diff(jd.dot(u), d.dot(grad_transpose_apply(p.op, f, u))) <= 1e-12);
  }
}

TEST_CASE("second differences are nonnegative") {
  const auto p = epd::testing::small_problem(8, 11, 5);
  std::mt19937_64 rng(8);
  const double h = 1e-3;
  for (int t = 0; t < 20; ++t) {
    const Vector f = epd::testing::uniform(p.op.image_size(), rng);
    const Vector d = epd::testing::gaussian(p.op.image_size(), rng);
    const Vector second = (forward(p.op, f + h * d) - 2.0 * forward(p.op, f) + forward(p.op, f - h * d)) / (h * h);
    CHECK(second.minCoeff() >= -1e-8);
  }
}

TEST_CASE("Lipschitz estimates") {
  const auto p = epd::testing::small_problem(8, 11, 5);
  const double analytic = lipschitz_estimate(p.op, LipschitzMode::Analytic);
  const double empirical = lipschitz_estimate(p.op, LipschitzMode::Empirical, 20);
  CHECK(empirical > 0.0);
  CHECK(empirical <= analytic);

  const SpectralForwardOp lin = epd::testing::linear_variant(p.op);
  CHECK(lipschitz_estimate(lin, LipschitzMode::Analytic) == 0.0);

  // all bins share the same coefficient: the model is linear despite several bins
  SpectralModel flat = p.op.model();
  flat.coeffs.row(0).setConstant(0.3);
  flat.coeffs.row(1).setConstant(0.7);
  const SpectralForwardOp flat_op(p.op.matrix(), flat);
  CHECK(flat.is_linear());
  CHECK(lipschitz_estimate(flat_op, LipschitzMode::Analytic) == 0.0);
  CHECK(constant_CR(flat_op) == 0.0);
}

TEST_CASE("ratio matrix reconstructs gradients and is bounded by C_R") {
  const auto p = epd::testing::small_problem(8, 11, 5);
  std::mt19937_64 rng(9);
  const double cr = constant_CR(p.op);
  for (int t = 0; t < 20; ++t) {
    const Vector f = epd::testing::uniform(p.op.image_size(), rng);
    const Vector f2 = epd::testing::uniform(p.op.image_size(), rng);
    const Matrix r = ratio_matrix(p.op, f, f2);
    const Matrix c1 = linearize(p.op, f).coefficients;
    const Matrix c2 = linearize(p.op, f2).coefficients;
    CHECK((r.cwiseProduct(c2) - c1).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((r.array() - 1.0).abs().maxCoeff() <= cr * (f - f2).norm());
  }
  const Vector f = epd::testing::uniform(p.op.image_size(), rng);
  CHECK((ratio_matrix(p.op, f, f).array() - 1.0).abs().maxCoeff() <= 1e-15);
  CHECK_THROWS_AS(ratio_matrix(p.op, -f, f), DomainError);
}

TEST_CASE("closed-form C_R") {
  CHECK(constant_CR(two_bin_toy()) == doctest::Approx(std::sqrt(5.0)).epsilon(1e-15));
  CHECK(constant_CR(two_bin_toy(2.0)) == doctest::Approx(2.0 * std::sqrt(5.0)).epsilon(1e-15));
}

TEST_CASE("Jacobian norm over the nonnegative orthant is attained at zero") {
  const auto p = epd::testing::small_problem(8, 11, 5);
  REQUIRE(coefficients_comonotone(p.op.model()));
  const auto sup = jacobian_norm_nonneg_bound(p.op);
  REQUIRE(sup.has_value());
  std::mt19937_64 rng(10);
  for (int t = 0; t < 10; ++t) {
    const Vector f = epd::testing::uniform(p.op.image_size(), rng, 0.0, 2.0);
    CHECK(jacobian_norm(p.op, f, 500, 1e-12).value <= *sup);
  }
  const double global = jacobian_norm_bound(p.op, operator_norm(as_operator(p.op.matrix())).value);
  CHECK(*sup <= global);

  // crossing coefficient rows: no certificate
  SpectralModel crossed = p.op.model();
  std::swap(crossed.coeffs(1, 0), crossed.coeffs(1, 7));
  CHECK_FALSE(coefficients_comonotone(crossed));
  CHECK_FALSE(jacobian_norm_nonneg_bound(SpectralForwardOp(p.op.matrix(), crossed)).has_value());
}

TEST_CASE("spectral model validation") {
  Matrix am(1, 1);
  am << 1.0;
  Matrix s(2, 1);
  s << 0.5, 0.6;
  Matrix b(1, 2);
  b << 1.0, 2.0;
  CHECK_THROWS_AS(make_op(am, s, b, {0}), DomainError);
  s << 0.5, 0.5;
  b << 1.0, 0.0;
  CHECK_THROWS_AS(make_op(am, s, b, {0}), DomainError);
  b << 1.0, 2.0;
  CHECK_THROWS(make_op(am, s, b, {1}));
  CHECK_THROWS_AS(forward(make_op(am, s, b, {0}), Vector::Zero(2)), DimensionError);
}

TEST_CASE("generalized log-sum-exp and partial volume operator") {
  std::mt19937_64 rng(11);
  // three terms for output 0, one term for output 1
  Matrix c = epd::testing::uniform(12, rng).reshaped(4, 3);
  Vector w{{0.2, 0.5, 0.3, 1.0}};
  const GeneralizedLSEOp op(c.sparseView(), w, {0, 3, 4});
  CHECK(forward_general(op, Vector::Zero(3)).cwiseAbs().maxCoeff() <= 1e-15);
  const Vector f = epd::testing::uniform(3, rng, 0.0, 2.0);
  const Vector k = forward_general(op, f);
  long double acc = 0.0L;
  for (Index m = 0; m < 3; ++m) acc += static_cast<long double>(w(m)) * std::exp(-static_cast<long double>(c.row(m).dot(f)));
  CHECK(rel_diff(k(0), static_cast<double>(std::log(acc))) <= 1e-12);
  CHECK(k(1) == doctest::Approx(-c.row(3).dot(f)).epsilon(1e-15));

  const SystemMatrix sub = build_parallel_projector(GeometrySpec::dual_scan(4, 6, 1, 0.0));
  const GeneralizedLSEOp npve = GeneralizedLSEOp::npve(sub, {{0, 1}, {2, 3, 4}, {5}});
  CHECK(npve.n_outputs() == 3);
  CHECK(npve.weights()(0) == 0.5);
  CHECK(npve.weights()(2) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS(GeneralizedLSEOp(c.sparseView(), Vector{{0.2, 0.5, 0.2, 1.0}}, {0, 3, 4}));
}
