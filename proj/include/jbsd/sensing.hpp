#pragma once

#include "jbsd/hankel.hpp"
#include "jbsd/rng.hpp"
#include "jbsd/types.hpp"

#include <cmath>
#include <vector>

namespace jbsd {

/// Complex exponential encoding a delay on the unit torus:
/// entry j is exp(-i 2 pi tau j), j = 0..n-1.
inline CVec steering_vector(double tau, Index n) {
  require(tau >= 0.0 && tau < 1.0, "steering_vector: tau must be in [0, 1)");
  require(n >= 1, "steering_vector: n must be >= 1");
  CVec a(n);
  for (Index j = 0; j < n; ++j) {
    const double phase = -2.0 * M_PI * tau * static_cast<double>(j);
    a[j] = cxd(std::cos(phase), std::sin(phase));
  }
  return a;
}

/// Distance between two delays on the torus.
inline double wrap_distance(double a, double b) {
  const double d = std::abs(a - b);
  return std::min(d, 1.0 - d);
}

/// One propagation path: a delay in [0, 1) and a complex amplitude.
struct PathParam {
  double tau = 0.0;
  cxd amplitude{1.0, 0.0};
};

/// Ground-truth channel of one user.
struct UserChannel {
  std::vector<PathParam> paths;
  CVec coeffs;  ///< unit-norm subspace coefficient vector h, length s
  CMat data;    ///< s x n data matrix sum_p d_p h a_{tau_p}^T
};

struct ChannelGroundTruth {
  std::vector<UserChannel> users;
  LiftShape shape;
  Index rank = 0;  ///< paths per user
};

/// X = sum_p d_p h a_{tau_p}^T. Always rank one as an s x n matrix;
/// its Hankel lift has rank equal to the number of distinct delays.
inline CMat build_data_matrix(const std::vector<PathParam>& paths,
                              const CVec& h, Index n) {
  require(!paths.empty(), "build_data_matrix: empty path list");
  require(h.size() >= 1 && h.norm() > 0.0,
          "build_data_matrix: coefficient vector must be nonzero");
  CMat x = CMat::Zero(h.size(), n);
  for (const auto& p : paths)
    x.noalias() += p.amplitude * h * steering_vector(p.tau, n).transpose();
  return x;
}

struct ChannelConfig {
  Index num_users = 1;
  Index paths_per_user = 1;
  Index subspace_dim = 1;
  Index n = 0;
  bool separated = false;
  bool complex_coeffs = true;  ///< h ~ CN(0, I) when true, N(0, I) when false
};

namespace detail {

inline std::vector<double> sample_delays(Index r, Index n, bool separated,
                                         RandomStream& rng) {
  constexpr int kMaxAttempts = 100000;
  std::vector<double> taus(r);
  if (!separated) {
    for (Index p = 0; p < r; ++p) {
      bool fresh = false;
      while (!fresh) {
        taus[p] = rng.uniform();
        fresh = true;
        // exact collisions are measure zero but would collapse the lift rank
        for (Index q = 0; q < p; ++q) fresh = fresh && (taus[q] != taus[p]);
      }
    }
    return taus;
  }
  const double min_gap = 1.0 / static_cast<double>(n);
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    for (Index p = 0; p < r; ++p) taus[p] = rng.uniform();
    bool ok = true;
    for (Index p = 0; p < r && ok; ++p)
      for (Index q = p + 1; q < r && ok; ++q)
        ok = wrap_distance(taus[p], taus[q]) >= min_gap;
    if (ok) return taus;
  }
  throw ArgumentError("sample_delays: separation rejection cap exceeded");
}

}  // namespace detail

///
/// Draws a synthetic multi-user channel. Amplitudes follow
/// (1 + 10^c) e^{-i phi} with c uniform on [0, 1] and phi uniform on
/// [0, 2 pi), so magnitudes lie in [2, 11]. Coefficient vectors are
/// (complex) standard Gaussian, normalized to unit length. With the
/// separated flag, delays are redrawn until every pair within a user is
/// at least 1/n apart in wrap-around distance.
///
inline ChannelGroundTruth sample_channel(const ChannelConfig& cfg,
                                         RandomStream& rng) {
  require(cfg.paths_per_user >= 1, "sample_channel: need at least one path");
  require(cfg.n >= 1 && cfg.subspace_dim >= 1 && cfg.num_users >= 1,
          "sample_channel: invalid dimensions");
  require(!cfg.separated || cfg.paths_per_user <= cfg.n,
          "sample_channel: separation infeasible, r exceeds n");

  ChannelGroundTruth truth;
  truth.shape = LiftShape::balanced(cfg.n, cfg.subspace_dim);
  truth.rank = cfg.paths_per_user;
  truth.users.resize(cfg.num_users);
  for (auto& user : truth.users) {
    const auto taus =
        detail::sample_delays(cfg.paths_per_user, cfg.n, cfg.separated, rng);
    user.paths.resize(cfg.paths_per_user);
    for (Index p = 0; p < cfg.paths_per_user; ++p) {
      const double c = rng.uniform();
      const double phi = rng.uniform(0.0, 2.0 * M_PI);
      user.paths[p].tau = taus[p];
      user.paths[p].amplitude =
          (1.0 + std::pow(10.0, c)) * cxd(std::cos(-phi), std::sin(-phi));
    }
    user.coeffs.resize(cfg.subspace_dim);
    for (Index i = 0; i < cfg.subspace_dim; ++i)
      user.coeffs[i] = cfg.complex_coeffs ? rng.complex_gaussian()
                                          : cxd(rng.gaussian(), 0.0);
    user.coeffs /= user.coeffs.norm();
    user.data = build_data_matrix(user.paths, user.coeffs, cfg.n);
  }
  return truth;
}

/// Codebook matrix with i.i.d. entries uniform on [-sqrt(3), sqrt(3)]
/// (zero mean, unit variance). Row j of the result is b_j^H.
inline CMat sample_subspace(Index n, Index s, RandomStream& rng) {
  require(n >= 1 && s >= 1, "sample_subspace: invalid dimensions");
  const double bound = std::sqrt(3.0);
  CMat b(n, s);
  for (Index j = 0; j < n; ++j)
    for (Index p = 0; p < s; ++p)
      b(j, p) = cxd(rng.uniform(-bound, bound), 0.0);
  return b;
}

/// A_k(X)[j] = b_{k,j}^H X e_j = (row j of B_k) * (column j of X).
inline CVec measure_k(const CMat& x, const CMat& b) {
  require(b.rows() == x.cols() && b.cols() == x.rows(),
          "measure_k: dimension mismatch");
  return (b.transpose().cwiseProduct(x)).colwise().sum().transpose();
}

/// Superposed measurements y = sum_k A_k(X_k).
inline CVec measure(const std::vector<CMat>& xs, const std::vector<CMat>& bs) {
  require(!xs.empty() && xs.size() == bs.size(),
          "measure: user count mismatch");
  CVec y = CVec::Zero(xs[0].cols());
  for (std::size_t k = 0; k < xs.size(); ++k) y += measure_k(xs[k], bs[k]);
  return y;
}

/// Adjoint of A_k: column j of the result is v[j] b_{k,j}.
inline CMat measure_adjoint_k(const CVec& v, const CMat& b) {
  require(v.size() == b.rows(), "measure_adjoint_k: length mismatch");
  return b.adjoint() * v.asDiagonal();
}

/// Observed data: measurement vector plus the known codebooks.
struct MeasurementSet {
  CVec y;
  std::vector<CMat> subspaces;  ///< one n x s matrix per user
  LiftShape shape;

  Index num_users() const { return static_cast<Index>(subspaces.size()); }

  void validate() const {
    shape.validate();
    require(y.size() == shape.n, "MeasurementSet: measurement length");
    require(!subspaces.empty(), "MeasurementSet: no users");
    for (const auto& b : subspaces)
      require(b.rows() == shape.n && b.cols() == shape.s,
              "MeasurementSet: codebook dimensions");
  }
};

/// Assemble the measurement set observed from a ground-truth channel.
inline MeasurementSet make_measurements(const ChannelGroundTruth& truth,
                                        const std::vector<CMat>& bs) {
  std::vector<CMat> xs;
  xs.reserve(truth.users.size());
  for (const auto& u : truth.users) xs.push_back(u.data);
  MeasurementSet m{measure(xs, bs), bs, truth.shape};
  m.validate();
  return m;
}

}  // namespace jbsd
