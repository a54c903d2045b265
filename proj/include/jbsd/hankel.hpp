#pragma once

#include "jbsd/types.hpp"

#include <unsupported/Eigen/FFT>

#include <utility>

namespace jbsd {

///
/// Anti-diagonal multiplicities of the lift: w[i] counts the pairs
/// (j, k) with j + k = i, 0 <= j < n1, 0 <= k < n2. Every entry is at
/// least one and the counts are symmetric, w[i] == w[n-1-i].
///
inline IVec weight_vector(Index n, Index n1) {
  require(n >= 1 && n1 >= 1 && n1 <= n, "weight_vector: need 1 <= n1 <= n");
  const Index n2 = n + 1 - n1;
  IVec w(n);
  for (Index i = 0; i < n; ++i) {
    const Index lo = std::max<Index>(0, i - (n2 - 1));
    const Index hi = std::min(n1 - 1, i);
    w[i] = static_cast<int>(hi - lo + 1);
  }
  return w;
}

/// sqrt(w) as a dense array, the diagonal of the weighting matrix D.
inline RVec sqrt_weights(const LiftShape& shape) {
  const IVec w = weight_vector(shape.n, shape.n1);
  return w.cast<double>().cwiseSqrt();
}

enum class WeightMode { Forward, Inverse };

/// Scale column i of X by sqrt(w_i) (Forward) or 1/sqrt(w_i) (Inverse).
inline CMat apply_weight(const CMat& x, const RVec& sqrt_w, WeightMode mode) {
  require(x.cols() == sqrt_w.size(),
          "apply_weight: column count does not match weight length");
  CMat out = x;
  if (mode == WeightMode::Forward) {
    out *= sqrt_w.asDiagonal();
  } else {
    out *= sqrt_w.cwiseInverse().asDiagonal();
  }
  return out;
}

inline CMat apply_weight(const CMat& x, const LiftShape& shape,
                         WeightMode mode) {
  check_signal_dims(x, shape, "apply_weight");
  return apply_weight(x, sqrt_weights(shape), mode);
}

/// Scale entry i of a length-n vector by sqrt(w_i); D restricted to a row.
inline CVec apply_weight(const CVec& y, const LiftShape& shape,
                         WeightMode mode) {
  require(y.size() == shape.n, "apply_weight: vector length mismatch");
  const RVec sw = sqrt_weights(shape);
  if (mode == WeightMode::Forward) return y.cwiseProduct(sw.cast<cxd>());
  return y.cwiseQuotient(sw.cast<cxd>());
}

///
/// Vectorized Hankel lift: block (j, k) of the result is column j+k of
/// the input, so H(X) is block-Hankel with s-row blocks.
///
inline CMat hankel_lift(const CMat& x, const LiftShape& shape) {
  check_signal_dims(x, shape, "hankel_lift");
  CMat z(shape.lifted_rows(), shape.n2);
  for (Index k = 0; k < shape.n2; ++k)
    for (Index j = 0; j < shape.n1; ++j)
      z.block(j * shape.s, k, shape.s, 1) = x.col(j + k);
  return z;
}

/// Adjoint of the lift: column i of the result sums the blocks on
/// anti-diagonal i. H*(H(X)) = D^2(X).
inline CMat hankel_adjoint(const CMat& z, const LiftShape& shape) {
  check_lifted_dims(z, shape, "hankel_adjoint");
  CMat x = CMat::Zero(shape.s, shape.n);
  for (Index k = 0; k < shape.n2; ++k)
    for (Index j = 0; j < shape.n1; ++j)
      x.col(j + k) += z.block(j * shape.s, k, shape.s, 1);
  return x;
}

/// G = H D^{-1}; an isometry onto the block-Hankel range (G* G = I).
inline CMat apply_G(const CMat& x, const LiftShape& shape) {
  return hankel_lift(apply_weight(x, shape, WeightMode::Inverse), shape);
}

inline CMat apply_G_adjoint(const CMat& z, const LiftShape& shape) {
  return apply_weight(hankel_adjoint(z, shape), shape, WeightMode::Inverse);
}

/// Orthogonal projection G G* onto the range of the normalized lift;
/// averages each anti-diagonal with the multiplicity weights.
inline CMat project_hankel(const CMat& z, const LiftShape& shape) {
  return apply_G(apply_G_adjoint(z, shape), shape);
}

namespace detail {

inline Index next_pow2(Index n) {
  Index p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace detail

///
/// FFT machinery for one lift shape. Implements the partial products
/// against H(F) and the adjoint of factored lifted matrices without
/// ever materializing an s*n1 x n2 matrix; every routine runs in
/// O(s r n log n). Instances own scratch buffers and cached FFT plans,
/// so they are cheap to reuse but not safe to share across threads.
///
class LiftKernel {
 public:
  explicit LiftKernel(const LiftShape& shape)
      : shape_(shape),
        len_(detail::next_pow2(shape.n + std::max(shape.n1, shape.n2) - 1)),
        sig_hat_(len_, shape.s),
        coef_hat_(len_, 1),
        acc_(len_),
        buf_(len_),
        out_(len_) {
    shape.validate();
  }

  const LiftShape& shape() const { return shape_; }
  Index fft_length() const { return len_; }

  ///
  /// Both partial products of the lift of a signal matrix F:
  ///   m1 = U^H H(F)   (r x n2)
  ///   m2 = H(F) V     (s*n1 x r)
  /// U has s*n1 rows, V has n2 rows, and both have r columns.
  ///
  void lift_products(const CMat& f, const CMat& u, const CMat& v, CMat& m1,
                     CMat& m2) {
    check_signal_dims(f, shape_, "lift_products");
    const Index s = shape_.s, n1 = shape_.n1, n2 = shape_.n2;
    const Index r = u.cols();
    require(u.rows() == s * n1 && v.rows() == n2 && v.cols() == r,
            "lift_products: factor dimensions do not match shape");

    transform_signal(f);
    m1.resize(r, n2);
    m2.resize(s * n1, r);

    // m1 row rho: sum over sigma of corr(U[., rho] block-row sigma, F row
    // sigma); accumulate in the frequency domain, one inverse per rho.
    for (Index rho = 0; rho < r; ++rho) {
      acc_.setZero();
      for (Index sig = 0; sig < s; ++sig) {
        buf_.setZero();
        for (Index j = 0; j < n1; ++j)
          buf_[n1 - 1 - j] = std::conj(u(j * s + sig, rho));
        fft_.fwd(coef_hat_.data(), buf_.data(), static_cast<int>(len_));
        acc_ += coef_hat_.col(0).cwiseProduct(sig_hat_.col(sig));
      }
      fft_.inv(out_.data(), acc_.data(), static_cast<int>(len_));
      m1.row(rho) = out_.segment(n1 - 1, n2).transpose();
    }

    // m2 column rho needs one inverse transform per (sigma, rho) pair.
    for (Index rho = 0; rho < r; ++rho) {
      buf_.setZero();
      for (Index k = 0; k < n2; ++k) buf_[n2 - 1 - k] = v(k, rho);
      fft_.fwd(coef_hat_.data(), buf_.data(), static_cast<int>(len_));
      for (Index sig = 0; sig < s; ++sig) {
        acc_ = coef_hat_.col(0).cwiseProduct(sig_hat_.col(sig));
        fft_.inv(out_.data(), acc_.data(), static_cast<int>(len_));
        for (Index j = 0; j < n1; ++j)
          m2(j * s + sig, rho) = out_[n2 - 1 + j];
      }
    }
  }

  ///
  /// x = H*(U diag(scale) V^H) for factors with r columns; the workhorse
  /// behind fast evaluation of G*(Z) on factored iterates.
  ///
  void adjoint_factored(const CMat& u, const RVec& scale, const CMat& v,
                        CMat& x) {
    adjoint_factored_impl(u, &scale, v, x);
  }

  /// x = H*(U V^H) (unit scaling).
  void adjoint_factored(const CMat& u, const CMat& v, CMat& x) {
    adjoint_factored_impl(u, nullptr, v, x);
  }

 private:
  void transform_signal(const CMat& f) {
    const Index s = shape_.s;
    for (Index sig = 0; sig < s; ++sig) {
      buf_.setZero();
      buf_.head(shape_.n) = f.row(sig).transpose();
      fft_.fwd(sig_hat_.col(sig).data(), buf_.data(), static_cast<int>(len_));
    }
  }

  void adjoint_factored_impl(const CMat& u, const RVec* scale, const CMat& v,
                             CMat& x) {
    const Index s = shape_.s, n1 = shape_.n1, n2 = shape_.n2;
    const Index r = u.cols();
    require(u.rows() == s * n1 && v.rows() == n2 && v.cols() == r,
            "adjoint_factored: factor dimensions do not match shape");
    require(scale == nullptr || scale->size() == r,
            "adjoint_factored: scale length mismatch");

    // Frequency transforms of conj(V) columns, shared across block rows.
    vhat_.resize(len_, r);
    for (Index rho = 0; rho < r; ++rho) {
      buf_.setZero();
      buf_.head(n2) = v.col(rho).conjugate();
      fft_.fwd(vhat_.col(rho).data(), buf_.data(), static_cast<int>(len_));
    }

    x.resize(s, shape_.n);
    for (Index sig = 0; sig < s; ++sig) {
      acc_.setZero();
      for (Index rho = 0; rho < r; ++rho) {
        buf_.setZero();
        for (Index j = 0; j < n1; ++j) buf_[j] = u(j * s + sig, rho);
        fft_.fwd(coef_hat_.data(), buf_.data(), static_cast<int>(len_));
        const double a = scale ? (*scale)[rho] : 1.0;
        acc_ += a * coef_hat_.col(0).cwiseProduct(vhat_.col(rho));
      }
      fft_.inv(out_.data(), acc_.data(), static_cast<int>(len_));
      x.row(sig) = out_.head(shape_.n).transpose();
    }
  }

  LiftShape shape_;
  Index len_;
  Eigen::FFT<double> fft_;
  CMat sig_hat_;
  CMat coef_hat_;
  CVec acc_, buf_, out_;
  CMat vhat_;
};

/// Convenience wrapper over LiftKernel for one-shot use.
inline std::pair<CMat, CMat> lift_products(const CMat& f, const CMat& u,
                                           const CMat& v,
                                           const LiftShape& shape) {
  LiftKernel kernel(shape);
  CMat m1, m2;
  kernel.lift_products(f, u, v, m1, m2);
  return {std::move(m1), std::move(m2)};
}

}  // namespace jbsd
