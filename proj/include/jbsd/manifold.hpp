#pragma once

#include "jbsd/types.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace jbsd {

///
/// Rank-r point in compact-SVD form: Z = U diag(S) V^H with orthonormal
/// U (m x r), V (p x r) and non-increasing positive singular values.
///
struct LowRankLift {
  CMat u;
  RVec s;
  CMat v;

  Index rank() const { return s.size(); }
  Index rows() const { return u.rows(); }
  Index cols() const { return v.rows(); }

  double sigma_max() const { return s.size() ? s[0] : 0.0; }
  double sigma_min() const { return s.size() ? s[s.size() - 1] : 0.0; }
  double frobenius_norm() const { return s.norm(); }

  CMat materialize() const { return u * s.asDiagonal() * v.adjoint(); }

  static LowRankLift zero(Index rows, Index cols, Index r) {
    LowRankLift z;
    z.u = CMat::Identity(rows, r);
    z.s = RVec::Zero(r);
    z.v = CMat::Identity(cols, r);
    return z;
  }
};

///
/// Element of the tangent space at a base point, stored as
/// T = U A^H + B V^H with A (p x r) and B (m x r). The representation
/// is not unique; equality is always tested on materialized values.
///
struct TangentVector {
  CMat a;  ///< cols(base) x r
  CMat b;  ///< rows(base) x r

  CMat materialize(const LowRankLift& base) const {
    return base.u * a.adjoint() + b * base.v.adjoint();
  }

  /// ||U A^H + B V^H||_F^2 without materializing.
  double squared_norm(const LowRankLift& base) const {
    const CMat p = base.u.adjoint() * b;  // r x r
    const CMat q = base.v.adjoint() * a;  // r x r
    const double cross = (p.transpose().cwiseProduct(q)).sum().real();
    return a.squaredNorm() + b.squaredNorm() + 2.0 * cross;
  }
};

/// Tangent vector from the partial products uhy = U^H Y and yv = Y V;
/// realizes P_T(Y) = U U^H Y + Y V V^H - U U^H Y V V^H.
inline TangentVector tangent_from_products(const CMat& uhy, const CMat& yv,
                                           const LowRankLift& base) {
  TangentVector t;
  t.a = uhy.adjoint();
  t.b = yv - base.u * (uhy * base.v);
  return t;
}

/// Projection of a dense matrix onto the tangent space at the base.
inline TangentVector tangent_project(const CMat& y, const LowRankLift& base) {
  require(y.rows() == base.rows() && y.cols() == base.cols(),
          "tangent_project: dimension mismatch");
  return tangent_from_products(base.u.adjoint() * y, y * base.v, base);
}

/// Best rank-r approximation of a dense matrix (Eckart-Young), used at
/// initialization and as the oracle the structured retraction is tested
/// against.
inline LowRankLift truncate_svd(const CMat& w, Index r) {
  require(r >= 1 && r <= std::min(w.rows(), w.cols()),
          "truncate_svd: rank out of range");
  Eigen::BDCSVD<CMat> svd(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
  LowRankLift z;
  z.u = svd.matrixU().leftCols(r);
  z.s = svd.singularValues().head(r);
  z.v = svd.matrixV().leftCols(r);
  return z;
}

struct RetractResult {
  LowRankLift point;
  bool rank_collapsed = false;  ///< sigma_r fell below 1e-14 * sigma_1
};

///
/// Retraction onto the rank-r manifold of a tangent-form displaced point
/// W = U A^H + B V^H. Factors the out-of-subspace components with thin
/// QR and diagonalizes a 2r x 2r core, so the cost is
/// O(r^2 (m + p) + r^3) instead of a dense SVD. The result matches
/// dense truncated SVD up to basis conventions.
///
inline RetractResult retract(const LowRankLift& base, const CMat& a_disp,
                             const CMat& b_disp, Index r) {
  const Index m = base.rows(), p = base.cols();
  require(r >= 1 && r <= std::min(m, p), "retract: rank out of range");
  require(a_disp.rows() == p && b_disp.rows() == m &&
              a_disp.cols() == base.rank() && b_disp.cols() == base.rank(),
          "retract: displacement dimensions do not match base");
  const Index r0 = base.rank();

  // Split displacements into in-subspace and orthogonal parts; the
  // second projection pass keeps the bases orthonormal over long runs.
  CMat p_in = base.u.adjoint() * b_disp;  // r0 x r0
  CMat b_perp = b_disp - base.u * p_in;
  CMat drift = base.u.adjoint() * b_perp;
  p_in += drift;
  b_perp.noalias() -= base.u * drift;

  CMat q_in = base.v.adjoint() * a_disp;  // r0 x r0
  CMat a_perp = a_disp - base.v * q_in;
  drift = base.v.adjoint() * a_perp;
  q_in += drift;
  a_perp.noalias() -= base.v * drift;

  Eigen::HouseholderQR<CMat> qr_b(b_perp);
  Eigen::HouseholderQR<CMat> qr_a(a_perp);
  const CMat qb = qr_b.householderQ() * CMat::Identity(m, r0);
  const CMat qa = qr_a.householderQ() * CMat::Identity(p, r0);
  const CMat rb = qr_b.matrixQR().topRows(r0).triangularView<Eigen::Upper>();
  const CMat ra = qr_a.matrixQR().topRows(r0).triangularView<Eigen::Upper>();

  // W = [U Qb] core [V Qa]^H with a small dense core.
  CMat core = CMat::Zero(2 * r0, 2 * r0);
  core.topLeftCorner(r0, r0) = q_in.adjoint() + p_in;
  core.topRightCorner(r0, r0) = ra.adjoint();
  core.bottomLeftCorner(r0, r0) = rb;

  Eigen::JacobiSVD<CMat> svd(core,
                             Eigen::ComputeFullU | Eigen::ComputeFullV);
  RetractResult res;
  res.point.u.resize(m, r);
  res.point.v.resize(p, r);
  res.point.s = svd.singularValues().head(r);
  const CMat& cu = svd.matrixU();
  const CMat& cv = svd.matrixV();
  res.point.u.noalias() = base.u * cu.topRows(r0).leftCols(r);
  res.point.u.noalias() += qb * cu.bottomRows(r0).leftCols(r);
  res.point.v.noalias() = base.v * cv.topRows(r0).leftCols(r);
  res.point.v.noalias() += qa * cv.bottomRows(r0).leftCols(r);

  const double smax = svd.singularValues()[0];
  res.rank_collapsed = res.point.s[r - 1] <= 1e-14 * smax;
  return res;
}

/// Retraction of W = base - alpha * grad expressed in tangent form.
inline RetractResult retract_step(const LowRankLift& base,
                                  const TangentVector& grad, double alpha,
                                  Index r) {
  const CMat a_disp = base.v * base.s.asDiagonal() - alpha * grad.a;
  const CMat b_disp = -alpha * grad.b;
  return retract(base, a_disp, b_disp, r);
}

/// Largest and r-th singular values across a family of lifts; the
/// condition number is max sigma_1 over min sigma_r.
struct ConditionData {
  double sigma_max = 0.0;
  double sigma_min_r = 0.0;
  double kappa() const {
    return sigma_min_r > 0.0 ? sigma_max / sigma_min_r
                             : std::numeric_limits<double>::infinity();
  }
};

inline ConditionData lowrank_norms_and_gaps(const std::vector<LowRankLift>& zs) {
  require(!zs.empty(), "lowrank_norms_and_gaps: empty family");
  ConditionData c;
  c.sigma_max = 0.0;
  c.sigma_min_r = std::numeric_limits<double>::infinity();
  for (const auto& z : zs) {
    c.sigma_max = std::max(c.sigma_max, z.sigma_max());
    c.sigma_min_r = std::min(c.sigma_min_r, z.sigma_min());
  }
  return c;
}

}  // namespace jbsd
