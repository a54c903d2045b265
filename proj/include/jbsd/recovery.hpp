#pragma once

#include "jbsd/hankel.hpp"
#include "jbsd/manifold.hpp"
#include "jbsd/rng.hpp"
#include "jbsd/sensing.hpp"
#include "jbsd/types.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <functional>
#include <unsupported/Eigen/FFT>
#include <vector>

namespace jbsd {

///
/// MUSIC pseudospectrum on a uniform delay grid plus a continuous
/// evaluator for off-grid refinement. Values are J(tau) =
/// 1 / sigma_min^2(W^H (a_{n1}(tau) kron I_s)) with W an orthonormal
/// basis of the complement of the recovered column space.
///
struct Pseudospectrum {
  RVec grid;    ///< strictly increasing delays in [0, 1)
  RVec values;  ///< J(tau) on the grid, finite and nonnegative
  /// sigma_min^2(W^H (a kron I)) = n1 - sigma_max^2(U^H (a kron I));
  /// evaluable at any tau, used by peak refinement.
  std::function<double(double)> null_spectrum;
};

namespace detail {

/// N(tau) = U^H (a_{n1}(tau) kron I_s), an r x s matrix.
inline CMat music_numerator(const CMat& u, Index s, Index n1, double tau) {
  const Index r = u.cols();
  CMat num = CMat::Zero(r, s);
  for (Index j = 0; j < n1; ++j) {
    const double phase = -2.0 * M_PI * tau * static_cast<double>(j);
    const cxd a = cxd(std::cos(phase), std::sin(phase));
    num += a * u.middleRows(j * s, s).adjoint().transpose().conjugate()
                   .transpose();
  }
  return num;
}

inline double largest_sq_singular_value(const CMat& num) {
  const CMat gram = num.adjoint() * num;  // s x s
  Eigen::SelfAdjointEigenSolver<CMat> eig(gram, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().maxCoeff();
}

}  // namespace detail

inline Pseudospectrum music_spectrum(const LowRankLift& z,
                                     const LiftShape& shape,
                                     Index grid_size = 0) {
  const Index s = shape.s, n1 = shape.n1;
  if (grid_size <= 0) grid_size = 16 * shape.n;
  require(grid_size >= 4 * shape.n, "music_spectrum: grid_size below 4n");
  require(z.rank() < s * n1,
          "music_spectrum: rank leaves no noise subspace");
  require(z.rows() == s * n1, "music_spectrum: factor rows mismatch");
  const Index r = z.rank();

  // U^H (a(tau) kron I_s) on the uniform grid, via one FFT per (rho,
  // sigma) pair of the conjugated block coefficients.
  Eigen::FFT<double> fft;
  CVec coeff = CVec::Zero(grid_size), hat(grid_size);
  std::vector<CMat> nums(grid_size, CMat(r, s));
  for (Index rho = 0; rho < r; ++rho)
    for (Index sig = 0; sig < s; ++sig) {
      coeff.setZero();
      for (Index j = 0; j < n1; ++j)
        coeff[j] = std::conj(z.u(j * s + sig, rho));
      fft.fwd(hat.data(), coeff.data(), static_cast<int>(grid_size));
      for (Index m = 0; m < grid_size; ++m) nums[m](rho, sig) = hat[m];
    }

  Pseudospectrum ps;
  ps.grid.resize(grid_size);
  ps.values.resize(grid_size);
  const double dn1 = static_cast<double>(n1);
  for (Index m = 0; m < grid_size; ++m) {
    ps.grid[m] = static_cast<double>(m) / static_cast<double>(grid_size);
    const double null_val =
        std::max(dn1 - detail::largest_sq_singular_value(nums[m]), 0.0);
    ps.values[m] = 1.0 / std::max(null_val, 1e-300);
  }

  const CMat u_copy = z.u;
  ps.null_spectrum = [u_copy, s, n1, dn1](double tau) {
    const CMat num = u_copy.adjoint() *
                     Eigen::kroneckerProduct(steering_vector(tau, n1),
                                             CMat::Identity(s, s));
    return std::max(dn1 - detail::largest_sq_singular_value(num), 0.0);
  };
  return ps;
}

/// Thrown when fewer peaks than requested exist; carries what was found.
class PeakDeficitError : public std::runtime_error {
 public:
  PeakDeficitError(std::string what, std::vector<double> partial)
      : std::runtime_error(std::move(what)), partial_(std::move(partial)) {}
  const std::vector<double>& partial() const { return partial_; }

 private:
  std::vector<double> partial_;
};

///
/// Picks the r largest circular local maxima of the pseudospectrum and
/// refines each: a parabolic step on log J seeds a golden-section
/// minimization of the continuous null spectrum within the peak cell,
/// which recovers delays far beyond grid resolution on clean data.
/// Ties in peak height break toward the smaller delay. Returns delays
/// sorted ascending.
///
inline std::vector<double> estimate_delays(const Pseudospectrum& ps,
                                           Index r) {
  const Index g = ps.grid.size();
  require(g >= 3, "estimate_delays: grid too small");
  if (r == 0) return {};

  struct Peak {
    Index idx;
    double value;
  };
  std::vector<Peak> peaks;
  for (Index m = 0; m < g; ++m) {
    const double prev = ps.values[(m + g - 1) % g];
    const double next = ps.values[(m + 1) % g];
    if (ps.values[m] > prev && ps.values[m] >= next)
      peaks.push_back({m, ps.values[m]});
  }
  std::sort(peaks.begin(), peaks.end(), [&](const Peak& a, const Peak& b) {
    if (a.value != b.value) return a.value > b.value;
    return ps.grid[a.idx] < ps.grid[b.idx];
  });

  const double delta = 1.0 / static_cast<double>(g);
  auto refine = [&](Index m) {
    const double lm = std::log(ps.values[(m + g - 1) % g]);
    const double l0 = std::log(ps.values[m]);
    const double lp = std::log(ps.values[(m + 1) % g]);
    double tau = ps.grid[m];
    const double denom = lm - 2.0 * l0 + lp;
    if (std::abs(denom) > 1e-300) {
      double offset = 0.5 * (lm - lp) / denom;
      offset = std::clamp(offset, -0.5, 0.5);
      tau += offset * delta;
    }
    if (ps.null_spectrum) {
      // golden-section on the smooth null spectrum around the peak cell
      const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
      double lo = ps.grid[m] - delta, hi = ps.grid[m] + delta;
      double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
      double fc = ps.null_spectrum(wrap01(c)), fd = ps.null_spectrum(wrap01(d));
      for (int it = 0; it < 60 && (hi - lo) > 1e-12; ++it) {
        if (fc < fd) {
          hi = d, d = c, fd = fc;
          c = hi - gr * (hi - lo);
          fc = ps.null_spectrum(wrap01(c));
        } else {
          lo = c, c = d, fc = fd;
          d = lo + gr * (hi - lo);
          fd = ps.null_spectrum(wrap01(d));
        }
      }
      tau = 0.5 * (lo + hi);
    }
    return wrap01(tau);
  };

  std::vector<double> delays;
  const Index take = std::min<Index>(r, static_cast<Index>(peaks.size()));
  for (Index i = 0; i < take; ++i) delays.push_back(refine(peaks[i].idx));
  std::sort(delays.begin(), delays.end());
  if (static_cast<Index>(delays.size()) < r)
    throw PeakDeficitError("estimate_delays: found " +
                               std::to_string(delays.size()) + " of " +
                               std::to_string(r) + " peaks",
                           delays);
  return delays;
}

inline double wrap01(double tau) {
  tau = std::fmod(tau, 1.0);
  return tau < 0.0 ? tau + 1.0 : tau;
}

/// Recovered parameters of one user, phase-fixed so that the coefficient
/// vector has unit norm and a real positive first nonzero entry.
struct RecoveredChannel {
  std::vector<double> delays;
  CVec gains;   ///< d-hat, one per delay
  CVec coeffs;  ///< h-hat, unit norm
  double ls_residual = 0.0;       ///< relative, gains-only fit
  double rank1_residual = 0.0;    ///< relative, after the rank-one split
  bool conditioning_warning = false;
};

///
/// Least-squares gain recovery: fit X ~ sum_p g_p a_{tau_p}^T, stack the
/// g_p into an s x r matrix and split it into h d^T with a rank-one SVD.
///
inline RecoveredChannel recover_gains(const CMat& x,
                                      const std::vector<double>& delays) {
  const Index n = x.cols(), s = x.rows();
  const Index r = static_cast<Index>(delays.size());
  require(r >= 1, "recover_gains: need at least one delay");
  for (Index p = 0; p < r; ++p)
    for (Index q = p + 1; q < r; ++q)
      require(delays[p] != delays[q], "recover_gains: duplicate delays");

  RecoveredChannel out;
  out.delays = delays;
  std::sort(out.delays.begin(), out.delays.end());

  CMat steer(n, r);
  for (Index p = 0; p < r; ++p) steer.col(p) = steering_vector(out.delays[p], n);

  Eigen::BDCSVD<CMat> lssvd(steer, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const RVec sv = lssvd.singularValues();
  out.conditioning_warning = sv[r - 1] <= 1e-10 * sv[0];
  const CMat gains_t = lssvd.solve(x.transpose());  // r x s
  const CMat g = gains_t.transpose();               // s x r, columns g_p

  const double xnorm = x.norm();
  out.ls_residual =
      xnorm > 0.0 ? (x - g * steer.transpose()).norm() / xnorm : 0.0;

  if (g.norm() == 0.0) {
    out.gains = CVec::Zero(r);
    out.coeffs = CVec::Unit(s, 0);
    out.rank1_residual = 0.0;
    return out;
  }

  Eigen::JacobiSVD<CMat> split(g, Eigen::ComputeThinU | Eigen::ComputeThinV);
  CVec h = split.matrixU().col(0);
  CVec d = split.singularValues()[0] * split.matrixV().col(0).conjugate();
  // phase convention: first entry of h with non-negligible magnitude
  // becomes real positive; d absorbs the opposite phase
  for (Index i = 0; i < s; ++i) {
    if (std::abs(h[i]) > 1e-12) {
      const cxd phase = std::conj(h[i]) / std::abs(h[i]);
      h *= phase;
      d *= std::conj(phase);
      break;
    }
  }
  out.coeffs = h;
  out.gains = d;
  out.rank1_residual =
      xnorm > 0.0
          ? (x - h * d.transpose() * steer.transpose()).norm() / xnorm
          : 0.0;
  return out;
}

/// Smallest mu_0 satisfying the codebook boundedness assumption:
/// the largest squared entry magnitude of B.
inline double incoherence_mu0(const CMat& b) {
  return b.cwiseAbs().maxCoeff() * b.cwiseAbs().maxCoeff();
}

/// Smallest mu_1 satisfying the singular-vector incoherence assumption
/// at the given lift, with U partitioned into n1 blocks of s rows.
inline double incoherence_mu1(const LowRankLift& z, const LiftShape& shape) {
  require(z.rows() == shape.lifted_rows() && z.cols() == shape.lifted_cols(),
          "incoherence_mu1: dimensions mismatch");
  double umax = 0.0;
  for (Index j = 0; j < shape.n1; ++j)
    umax = std::max(umax, z.u.middleRows(j * shape.s, shape.s).squaredNorm());
  double vmax = 0.0;
  for (Index l = 0; l < shape.n2; ++l)
    vmax = std::max(vmax, z.v.row(l).squaredNorm());
  const double r = static_cast<double>(z.rank());
  return static_cast<double>(shape.n) * std::max(umax, vmax) / r;
}

struct TripEstimate {
  double value = 0.0;
  Index iterations = 0;
  bool converged = false;
};

///
/// Power-iteration estimate of || P_T Gtilde (A* A - I) Gtilde* P_T ||
/// at the tangent spaces of the given base points. Materializes dense
/// per-user matrices, so it is restricted to desk-scale shapes.
/// With identity_sensing the measurement composition is replaced by an
/// exact isometry, which zeroes the operator (a plumbing check).
///
inline TripEstimate estimate_trip(const std::vector<CMat>& subspaces,
                                  const std::vector<LowRankLift>& bases,
                                  const LiftShape& shape, Index power_iters,
                                  RandomStream& rng,
                                  bool identity_sensing = false) {
  require(!bases.empty() && bases.size() == subspaces.size(),
          "estimate_trip: user count mismatch");
  require(shape.lifted_rows() * shape.lifted_cols() <= 65536,
          "estimate_trip: instance too large for dense diagnostics");
  const Index k_users = static_cast<Index>(bases.size());

  auto apply_op = [&](const std::vector<CMat>& ys) {
    std::vector<CMat> xi(k_users);
    CVec v = CVec::Zero(shape.n);
    for (Index k = 0; k < k_users; ++k) {
      xi[k] = apply_G_adjoint(ys[k], shape);
      if (!identity_sensing) v += measure_k(xi[k], subspaces[k]);
    }
    std::vector<CMat> out(k_users);
    for (Index k = 0; k < k_users; ++k) {
      CMat chi = identity_sensing
                     ? CMat::Zero(shape.s, shape.n)
                     : CMat(measure_adjoint_k(v, subspaces[k]) - xi[k]);
      const CMat lifted = apply_G(chi, shape);
      out[k] = tangent_project(lifted, bases[k]).materialize(bases[k]);
    }
    return out;
  };

  // random tangent start
  std::vector<CMat> t(k_users);
  double norm_sq = 0.0;
  for (Index k = 0; k < k_users; ++k) {
    CMat y(shape.lifted_rows(), shape.lifted_cols());
    for (Index i = 0; i < y.rows(); ++i)
      for (Index j = 0; j < y.cols(); ++j) y(i, j) = rng.complex_gaussian();
    t[k] = tangent_project(y, bases[k]).materialize(bases[k]);
    norm_sq += t[k].squaredNorm();
  }

  TripEstimate est;
  double rayleigh = 0.0;
  for (Index it = 0; it < power_iters; ++it) {
    const double nrm = std::sqrt(norm_sq);
    if (nrm <= 1e-300) {
      est.value = 0.0;
      est.converged = true;
      est.iterations = it;
      return est;
    }
    for (auto& tk : t) tk /= nrm;
    const auto lt = apply_op(t);
    double num = 0.0;
    norm_sq = 0.0;
    for (Index k = 0; k < k_users; ++k) {
      num += (t[k].conjugate().cwiseProduct(lt[k])).sum().real();
      norm_sq += lt[k].squaredNorm();
    }
    const double prev = rayleigh;
    rayleigh = num;  // t is unit norm
    est.iterations = it + 1;
    if (it > 2 && std::abs(rayleigh - prev) <=
                      1e-6 * std::max(std::abs(rayleigh), 1e-12)) {
      est.converged = true;
      est.value = std::abs(rayleigh);
      return est;
    }
    t = lt;
  }
  est.value = std::abs(rayleigh);
  return est;
}

}  // namespace jbsd
