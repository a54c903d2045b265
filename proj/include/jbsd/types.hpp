#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>

namespace jbsd {

using Index = Eigen::Index;
using cxd = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;
using IVec = Eigen::VectorXi;

/// Thrown when a caller violates an operation's precondition.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ArgumentError(what);
}

///
/// Dimensions of the block-Hankel lift of an s x n signal matrix.
///
/// The lift maps C^{s x n} into C^{s*n1 x n2} with n1 + n2 = n + 1.
/// Column j of the signal matrix appears on anti-diagonal j of the
/// lifted matrix, repeated once per (row-block, column) pair.
///
struct LiftShape {
  Index n = 0;   ///< signal length (samples)
  Index n1 = 0;  ///< number of s-row blocks
  Index n2 = 0;  ///< number of columns
  Index s = 1;   ///< subspace dimension (rows of the signal matrix)

  /// Balanced lift with n1 = ceil((n+1)/2); maximizes rank headroom.
  static LiftShape balanced(Index n, Index s) {
    return with_rows(n, (n + 2) / 2, s);
  }

  static LiftShape with_rows(Index n, Index n1, Index s) {
    LiftShape shape{n, n1, n + 1 - n1, s};
    shape.validate();
    return shape;
  }

  Index lifted_rows() const { return s * n1; }
  Index lifted_cols() const { return n2; }

  void validate() const {
    require(n >= 1, "LiftShape: n must be >= 1");
    require(s >= 1, "LiftShape: s must be >= 1");
    require(n1 >= 1 && n2 >= 1, "LiftShape: n1 and n2 must be >= 1");
    require(n1 + n2 == n + 1, "LiftShape: n1 + n2 must equal n + 1");
  }

  bool operator==(const LiftShape&) const = default;
};

inline void check_signal_dims(const CMat& x, const LiftShape& shape,
                              const char* op) {
  require(x.rows() == shape.s && x.cols() == shape.n,
          std::string(op) + ": signal matrix dimensions do not match shape");
}

inline void check_lifted_dims(const CMat& z, const LiftShape& shape,
                              const char* op) {
  require(z.rows() == shape.lifted_rows() && z.cols() == shape.lifted_cols(),
          std::string(op) + ": lifted matrix dimensions do not match shape");
}

}  // namespace jbsd
