#include <doctest.h>

#include <sstream>

#include "epd/phantom.hpp"
#include "epd/theory.hpp"
#include "support.hpp"

using namespace epd;

namespace {

// one pixel, one ray of unit length, D = 1, b = [1, 2], s = [0.5, 0.5]
SpectralForwardOp pixel_toy() {
  Matrix a(1, 1);
  a << 1.0;
  Matrix s(2, 1);
  s << 0.5, 0.5;
  Matrix b(1, 2);
  b << 1.0, 2.0;
  return epd::testing::make_op(a, s, b, {0});
}

SpectralForwardOp zero_toy() {
  Matrix a = Matrix::Zero(1, 4);
  Matrix s(2, 1);
  s << 0.5, 0.5;
  Matrix b(1, 2);
  b << 1.0, 2.0;
  return epd::testing::make_op(a, s, b, {0});
}

}  // namespace

TEST_CASE("metric of the one-pixel toy") {
  const SpectralForwardOp op = pixel_toy();
  const OperatorBundle ops(op, Vector::Zero(1));
  SolverConfig cfg;
  cfg.tau = 0.3;
  cfg.sigma_k = 0.7;
  const double x = 0.4;
  const MetricMatrix m = assemble_M(Vector::Constant(1, x), cfg, ops);
  REQUIRE(m.m.rows() == 2);
  // dK/df = -(w1 + 2 w2) with softmax weights of (-x, -2x)
  const double w1 = std::exp(-x) / (std::exp(-x) + std::exp(-2 * x));
  const double k = -(w1 * 1.0 + (1.0 - w1) * 2.0);
  CHECK(m.m(0, 0) == doctest::Approx(1.0 / 0.3).epsilon(1e-15));
  CHECK(m.m(1, 1) == doctest::Approx(1.0 / 0.7).epsilon(1e-15));
  CHECK(m.m(0, 1) == doctest::Approx(-k).epsilon(1e-14));
  CHECK(m.m(1, 0) == m.m(0, 1));
}

TEST_CASE("metric is symmetric and constant for a linear model") {
  const auto p = epd::testing::small_problem(8, 5, 3);
  const SpectralForwardOp lin = epd::testing::linear_variant(p.op);
  const OperatorBundle ops(lin, Vector::Zero(lin.n_rays()));
  SolverConfig cfg;
  cfg.lambda = 0.01;
  std::mt19937_64 rng(1);
  const MetricMatrix a = assemble_M(epd::testing::uniform(lin.image_size(), rng), cfg, ops);
  const MetricMatrix b = assemble_M(epd::testing::uniform(lin.image_size(), rng), cfg, ops);
  CHECK(a.m == a.m.transpose());
  CHECK(a.m == b.m);
  CHECK(a.n_v == ops.grad.out_size());
  cfg.lambda = 0.0;
  CHECK(assemble_M(Vector::Zero(lin.image_size()), cfg, ops).n_v == 0);
  CHECK_THROWS_AS(assemble_M(Vector::Zero(lin.image_size()), cfg, ops, 10), DimensionError);
}

TEST_CASE("metric definiteness follows the step condition on the toy") {
  const SpectralForwardOp op = pixel_toy();
  const OperatorBundle ops(op, Vector::Zero(1));
  // sup of |dK/df| over f >= 0 is 1.5, reached at 0
  const double ck = 1.5;
  const double kappa = 0.1, s = 0.9;
  SolverConfig ok;
  ok.tau = ok.sigma_k = std::sqrt(0.9 * s * (1 - kappa)) / ck;
  SolverConfig bad;
  bad.tau = bad.sigma_k = std::sqrt(4.0 * s * (1 - kappa)) / ck;
  for (double x : {0.0, 0.3, 1.0, 5.0}) {
    CHECK(check_psd(assemble_M(Vector::Constant(1, x), ok, ops)).pass);
  }
  const PsdCheck violated = check_psd(assemble_M(Vector::Zero(1), bad, ops));
  CHECK(violated.min_eigenvalue < 0.0);
  CHECK_FALSE(violated.pass);
}

TEST_CASE("diagonal metric when K and the TV term vanish") {
  const SpectralForwardOp op = zero_toy();
  const OperatorBundle ops(op, Vector::Zero(1));
  SolverConfig cfg;
  cfg.tau = 0.25;
  cfg.sigma_k = 0.4;
  const PsdCheck c = check_psd(assemble_M(Vector::Ones(4), cfg, ops));
  CHECK(c.min_eigenvalue == doctest::Approx(2.5).epsilon(1e-14));

  NeighborhoodParams np;
  np.kappa = 0.5;
  np.s = 0.5;
  CHECK(check_B_blocks(Vector::Ones(4), cfg, np, ops).all());
}

TEST_CASE("block bounds under certified steps and their failure near kappa = 1") {
  const auto p = epd::testing::small_problem(8, 5, 3);
  const Vector truth = generate_phantom(default_head_phantom(), 8, 2);
  const OperatorBundle ops(p.op, forward(p.op, truth));
  SolverConfig cfg;
  cfg.lambda = 1e-3;
  const StepSizeCertificate c = validate_step_sizes(cfg, ops);
  REQUIRE(c.holds_metric);
  NeighborhoodParams np;
  np.kappa = c.kappa;
  np.s = c.s;
  std::mt19937_64 rng(2);
  for (int t = 0; t < 3; ++t) {
    CHECK(check_B_blocks(epd::testing::uniform(p.op.image_size(), rng), cfg, np, ops).all());
  }
  np.kappa = 0.999;
  SolverConfig big = cfg;
  big.tau = big.sigma_k = big.sigma_a = 1.0;
  CHECK_FALSE(check_B_blocks(truth, big, np, ops).all());
}

TEST_CASE("matrix-free metric norm equals the dense quadratic form") {
  const auto p = epd::testing::small_problem(8, 5, 3);
  const OperatorBundle ops(p.op, Vector::Zero(p.op.n_rays()));
  SolverConfig cfg;
  cfg.lambda = 0.01;
  std::mt19937_64 rng(3);
  const Vector f = epd::testing::uniform(p.op.image_size(), rng);
  const MetricMatrix m = assemble_M(f, cfg, ops);
  const Vector x = epd::testing::gaussian(m.m.rows(), rng);
  const double dense = x.dot(m.m * x);
  const double free = metric_norm_sq(x.head(m.n_f), x.segment(m.n_f, m.n_u), x.tail(m.n_v), f, cfg, ops);
  CHECK(free == doctest::Approx(dense).epsilon(1e-12));
}

TEST_CASE("initial-point condition") {
  const auto p = epd::testing::small_problem(8, 5, 3);
  const Vector truth = generate_phantom(default_head_phantom(), 8, 2);
  const OperatorBundle ops(p.op, forward(p.op, truth));
  SolverConfig cfg;
  const NeighborhoodParams np = make_neighborhood(p.op, 1.0, 0.05, 1.0, 1.0, 0.5, 0.5);
  const SolverState hat = init_state(ops, truth, Vector::Zero(p.op.n_rays()), Vector::Zero(ops.grad.out_size()));
  const InitialConditionCheck same = check_initial_condition(hat, hat, np, cfg, ops, 0.0);
  CHECK(same.distance == 0.0);
  CHECK(same.pass);

  NeighborhoodParams wide = np;
  wide.rho_f = wide.rho_u = wide.rho_v = 1e8;
  const InitialConditionCheck far = check_initial_condition(init_state(ops), hat, wide, cfg, ops, 0.0);
  CHECK(far.distance > 0.0);
  CHECK(far.pass);
}

TEST_CASE("linearization remainder bound") {
  const auto p = epd::testing::small_problem(8, 5, 3);
  const Vector center = generate_phantom(default_head_phantom(), 8, 2);
  const double cr = constant_CR(p.op);
  const SampledBound b = verify_remainder_bound(p.op, center, 0.5 / cr, 50);
  CHECK(b.bound == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(b.pass);
  CHECK(b.worst_ratio <= b.bound + 1e-9);
  CHECK_THROWS_AS(verify_remainder_bound(p.op, center, 1.0 / cr, 5), DomainError);

  const SpectralForwardOp lin = epd::testing::linear_variant(p.op);
  const SampledBound zero = verify_remainder_bound(lin, center, 0.5, 20);
  CHECK(zero.worst_ratio <= 1e-12);
}

TEST_CASE("sampled ratio and Lipschitz bounds") {
  const auto p = epd::testing::small_problem(8, 5, 3);
  const Vector center = generate_phantom(default_head_phantom(), 8, 2);
  CHECK(verify_ratio_bound(p.op, 50).pass);
  const double L = jacobian_lipschitz_bound(p.op, operator_norm(as_operator(p.op.matrix())).value);
  const SampledBound lip = verify_local_lipschitz(p.op, L, center, 0.5, 10);
  CHECK(lip.pass);
  CHECK(lip.worst_ratio > 0.0);
}

TEST_CASE("ball sampling stays inside the ball") {
  std::mt19937_64 rng(4);
  const Vector c = Vector::Constant(10, 0.5);
  for (int t = 0; t < 50; ++t) {
    const Vector x = sample_ball(c, 0.3, rng, false);
    CHECK((x - c).norm() <= 0.3 + 1e-15);
    CHECK(sample_ball(c, 2.0, rng, true).minCoeff() >= 0.0);
  }
}

TEST_CASE("verification report lines") {
  VerificationReport r;
  r.add("a", 0.5);
  r.add("b", true);
  r.add("c", std::string("x"));
  std::ostringstream os;
  r.write(os);
  CHECK(os.str() == "a = 0.5\nb = true\nc = x\n");
}
