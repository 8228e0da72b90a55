#pragma once

#include <Eigen/Core>

#include "epd/common.hpp"
#include "epd/spectral.hpp"

namespace epd {

/// Conjugate of the fidelity 1/2 |. - g|^2 scaled by sigma.
template <typename Scalar = double>
struct FidelityProx {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> data;
  Scalar sigma = Scalar(1);
};

/// Indicator of the box |v|_inf <= lambda, the conjugate of lambda |.|_1.
template <typename Scalar = double>
struct TVDualProx {
  Scalar lambda = Scalar(0);
  Scalar sigma = Scalar(1);
};

/// Projection onto the nonnegative orthant.
template <typename Derived>
auto prox_nonneg(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0));
}

/// (u - sigma g) / (sigma + 1).
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> prox_fstar(const FidelityProx<Scalar>& p, const Eigen::MatrixBase<Derived>& u) {
  require_size(u.size(), p.data.size(), "prox_fstar");
  if (!(p.sigma > Scalar(0))) throw DomainError("prox_fstar: sigma must be positive");
  return (u - p.sigma * p.data) / (p.sigma + Scalar(1));
}

/// Componentwise clamp to [-lambda, lambda]; lambda = 0 gives zeros.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> prox_estar_box(const TVDualProx<Scalar>& p, const Eigen::MatrixBase<Derived>& v) {
  if (p.lambda < Scalar(0)) throw DomainError("prox_estar_box: lambda must be nonnegative");
  if (p.lambda == Scalar(0)) return Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(v.size());
  return v.cwiseMax(-p.lambda).cwiseMin(p.lambda);
}

/// K(f') + grad K(f') (f - f'), the value of <f, w> - K*(w) at w = grad K(f').
inline Vector conjugate_taylor_value(const SpectralForwardOp& op, const Vector& f, const Vector& fprime) {
  require_size(f.size(), op.image_size(), "conjugate_taylor_value");
  const LinearizationState lin = linearize(op, fprime);
  return op.forward_from_projection(op.project(fprime)) + jacobian_apply(op, lin, f - fprime);
}

}  // namespace epd
