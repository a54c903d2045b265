#pragma once

#include "jbsd/hankel.hpp"
#include "jbsd/manifold.hpp"
#include "jbsd/sensing.hpp"
#include "jbsd/types.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <vector>

namespace jbsd {

enum class StepPolicy { Fixed, ExactLineSearch };

struct SolverConfig {
  Index rank = 2;
  StepPolicy step_policy = StepPolicy::Fixed;
  double alpha = 1.0;  ///< fixed step size, also the line-search fallback
  Index max_iters = 2000;
  double tol_residual = 1e-4;  ///< blind stopping: relative residual
  double tol_truth = 1e-4;     ///< stopping against ground truth
  double divergence_limit = 1e6;
  /// Enforce the 7/8 <= alpha <= 1 range the convergence guarantee
  /// assumes for the fixed policy.
  bool theory_step_check = false;

  void validate() const {
    require(rank >= 1, "SolverConfig: rank must be >= 1");
    require(max_iters >= 0, "SolverConfig: max_iters must be >= 0");
    if (theory_step_check && step_policy == StepPolicy::Fixed)
      require(alpha >= 7.0 / 8.0 && alpha <= 1.0,
              "SolverConfig: fixed alpha outside [7/8, 1]");
  }
};

enum class SolveStatus { Converged, MaxIters, Diverged };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::MaxIters: return "max_iters";
    default: return "diverged";
  }
}

struct IterationRecord {
  Index iter = 0;
  double rel_residual = 0.0;
  double rel_truth_error = -1.0;  ///< -1 when no truth was supplied
  std::vector<double> user_truth_error;
  double step = 0.0;
  double seconds = 0.0;
  bool rank_collapsed = false;
};

struct IterationTrace {
  std::vector<IterationRecord> records;
};

/// Per-user factored iterates plus the cached shared residual.
struct IterateState {
  std::vector<LowRankLift> lifts;
  std::vector<CMat> g_adjoints;  ///< G*(Z_k), s x n, refreshed per iteration
  CVec residual;                 ///< e = sum_k A_k(G*(Z_k)) - D y
  Index iter = 0;
  bool residual_valid = false;
};

struct SolveResult {
  std::vector<LowRankLift> lifts;
  std::vector<CMat> estimates;  ///< unlifted data-matrix estimates
  IterationTrace trace;
  SolveStatus status = SolveStatus::MaxIters;
  Index iterations = 0;
  double final_rel_residual = 0.0;
  double final_truth_error = -1.0;
};

/// Inverse of the lift map on its range: X = D^{-1}(G*(Z)).
inline CMat unlift(const LowRankLift& z, const LiftShape& shape) {
  return apply_G_adjoint(z.materialize(), shape);
}

/// Relative recovery error sqrt(sum_k ||Xhat-X||_F^2 / sum_k ||X||_F^2).
inline double relative_error(const std::vector<CMat>& estimates,
                             const ChannelGroundTruth& truth) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    num += (estimates[k] - truth.users[k].data).squaredNorm();
    den += truth.users[k].data.squaredNorm();
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

///
/// Riemannian gradient descent for the joint demixing problem. One
/// instance owns the FFT workspace for its shape; distinct instances
/// may run concurrently, a single instance may not.
///
class RgdSolver {
 public:
  RgdSolver(const MeasurementSet& m, SolverConfig cfg)
      : m_(m),
        cfg_(cfg),
        shape_(m.shape),
        kernel_(m.shape),
        sqrt_w_(sqrt_weights(m.shape)) {
    m_.validate();
    cfg_.validate();
    require(cfg_.rank <= std::min(shape_.lifted_rows(), shape_.lifted_cols()),
            "RgdSolver: rank exceeds lifted dimensions");
    dy_ = apply_weight(m_.y, shape_, WeightMode::Forward);
    dy_norm_ = dy_.norm();
  }

  const MeasurementSet& measurements() const { return m_; }
  const SolverConfig& config() const { return cfg_; }

  /// Spectral initialization Z_{k,0} = P_r(G(A_k*(D y))).
  IterateState initialize() {
    IterateState st;
    const Index k_users = m_.num_users();
    st.lifts.reserve(k_users);
    for (Index k = 0; k < k_users; ++k) {
      const CMat f = apply_weight(measure_adjoint_k(dy_, m_.subspaces[k]),
                                  shape_, WeightMode::Inverse);
      if (f.norm() == 0.0) {
        st.lifts.push_back(LowRankLift::zero(shape_.lifted_rows(),
                                             shape_.lifted_cols(), cfg_.rank));
      } else {
        st.lifts.push_back(truncate_svd(hankel_lift(f, shape_), cfg_.rank));
      }
    }
    refresh_residual(st);
    return st;
  }

  /// Recompute the shared residual cache from the current iterates.
  void refresh_residual(IterateState& st) {
    const Index k_users = m_.num_users();
    st.g_adjoints.resize(k_users);
    st.residual = -dy_;
    CMat hadj;
    for (Index k = 0; k < k_users; ++k) {
      kernel_.adjoint_factored(st.lifts[k].u, st.lifts[k].s, st.lifts[k].v,
                               hadj);
      st.g_adjoints[k] = apply_weight(hadj, sqrt_w_, WeightMode::Inverse);
      st.residual += measure_k(st.g_adjoints[k], m_.subspaces[k]);
    }
    st.residual_valid = true;
  }

  CVec residual(IterateState& st) {
    if (!st.residual_valid) refresh_residual(st);
    return st.residual;
  }

  ///
  /// Projected gradient P_T(G_k) at the current state, with
  /// G_k = G(A_k*(e)) + (I - G G*)(Z_k). The two lift-side terms reduce
  /// to one fast product pass on the signal matrix
  /// F = D^{-1}(A_k*(e)) - D^{-1}(G*(Z_k)), after which the identity
  /// part of the structure term contributes Z_k itself.
  ///
  TangentVector riemannian_gradient_k(const IterateState& st, Index k) {
    require(st.residual_valid, "riemannian_gradient_k: stale residual cache");
    const LowRankLift& z = st.lifts[k];
    CMat f = measure_adjoint_k(st.residual, m_.subspaces[k]) - st.g_adjoints[k];
    f = apply_weight(f, sqrt_w_, WeightMode::Inverse);
    CMat m1, m2;
    kernel_.lift_products(f, z.u, z.v, m1, m2);
    TangentVector t = tangent_from_products(m1, m2, z);
    // + P_T(Z_k) = Z_k, i.e. A += V diag(S)
    t.a += z.v * z.s.asDiagonal();
    return t;
  }

  ///
  /// Exact minimizer of the quadratic alpha -> f(Z - alpha * grads);
  /// falls back to the configured fixed step when the curvature
  /// denominator vanishes.
  ///
  double exact_line_search_alpha(const IterateState& st,
                                 const std::vector<TangentVector>& grads) {
    double num = 0.0;
    double denom = 0.0;
    CVec meas = CVec::Zero(shape_.n);
    CMat hadj;
    for (Index k = 0; k < m_.num_users(); ++k) {
      const LowRankLift& z = st.lifts[k];
      const double g2 = grads[k].squared_norm(z);
      num += g2;
      // G*(P_T(G_k)) = D^{-1} H*(U A^H + B V^H)
      kernel_.adjoint_factored(z.u, grads[k].a, hadj);
      CMat gstar = hadj;
      kernel_.adjoint_factored(grads[k].b, z.v, hadj);
      gstar += hadj;
      gstar = apply_weight(gstar, sqrt_w_, WeightMode::Inverse);
      meas += measure_k(gstar, m_.subspaces[k]);
      // ||(I - G G*)(eta)||^2 = ||eta||^2 - ||G*(eta)||^2
      denom += g2 - gstar.squaredNorm();
    }
    denom += meas.squaredNorm();
    if (!(denom > 1e-30)) return cfg_.alpha;
    return num / denom;
  }

  /// One full iteration: per-user gradient, tangent update, retraction,
  /// then a single residual refresh shared by the next iteration.
  struct StepInfo {
    double alpha = 0.0;
    double grad_norm_sq = 0.0;
    bool rank_collapsed = false;
    bool finite = true;
  };

  StepInfo rgd_step(IterateState& st) {
    if (!st.residual_valid) refresh_residual(st);
    const Index k_users = m_.num_users();
    std::vector<TangentVector> grads(k_users);
    // The gradients all read the same cached residual (the barrier in
    // the fully parallel inner loop); updates happen only afterwards.
    for (Index k = 0; k < k_users; ++k)
      grads[k] = riemannian_gradient_k(st, k);

    StepInfo info;
    info.alpha = cfg_.step_policy == StepPolicy::ExactLineSearch
                     ? exact_line_search_alpha(st, grads)
                     : cfg_.alpha;
    for (Index k = 0; k < k_users; ++k) {
      info.grad_norm_sq += grads[k].squared_norm(st.lifts[k]);
      RetractResult rr =
          retract_step(st.lifts[k], grads[k], info.alpha, cfg_.rank);
      info.rank_collapsed = info.rank_collapsed || rr.rank_collapsed;
      st.lifts[k] = std::move(rr.point);
      info.finite = info.finite && st.lifts[k].s.allFinite() &&
                    st.lifts[k].u.allFinite() && st.lifts[k].v.allFinite();
    }
    st.iter += 1;
    st.residual_valid = false;
    if (info.finite) refresh_residual(st);
    return info;
  }

  /// Run the full loop. With ground truth supplied the stopping rule is
  /// the relative recovery error; blind runs stop on the relative
  /// residual together with a vanishing iterate change.
  SolveResult solve(const ChannelGroundTruth* truth = nullptr) {
    using clock = std::chrono::steady_clock;
    IterateState st = initialize();
    const Index k_users = m_.num_users();

    SolveResult out;
    double znorm_sq = 0.0;
    auto record = [&](double step, double secs, bool collapsed,
                      double rel_change) {
      IterationRecord rec;
      rec.iter = st.iter;
      rec.rel_residual = rel_residual(st);
      rec.step = step;
      rec.seconds = secs;
      rec.rank_collapsed = collapsed;
      if (truth) {
        rec.user_truth_error.resize(k_users);
        double num = 0.0, den = 0.0;
        for (Index k = 0; k < k_users; ++k) {
          const CMat est =
              apply_weight(st.g_adjoints[k], sqrt_w_, WeightMode::Inverse);
          const double dk = (est - truth->users[k].data).norm();
          rec.user_truth_error[k] =
              dk / std::max(truth->users[k].data.norm(), 1e-300);
          num += dk * dk;
          den += truth->users[k].data.squaredNorm();
        }
        rec.rel_truth_error = std::sqrt(num / std::max(den, 1e-300));
      }
      out.trace.records.push_back(std::move(rec));
      return rel_change;
    };

    record(0.0, 0.0, false, 0.0);
    out.status = SolveStatus::MaxIters;
    while (true) {
      const IterationRecord& last = out.trace.records.back();
      if (!std::isfinite(last.rel_residual) ||
          last.rel_residual > cfg_.divergence_limit) {
        out.status = SolveStatus::Diverged;
        break;
      }
      if (truth && last.rel_truth_error <= cfg_.tol_truth) {
        out.status = SolveStatus::Converged;
        break;
      }
      if (st.iter >= cfg_.max_iters) {
        out.status = SolveStatus::MaxIters;
        break;
      }
      const auto t0 = clock::now();
      StepInfo step = rgd_step(st);
      const double secs =
          std::chrono::duration<double>(clock::now() - t0).count();
      if (!step.finite) {
        out.status = SolveStatus::Diverged;
        record(step.alpha, secs, step.rank_collapsed, 0.0);
        break;
      }
      znorm_sq = 0.0;
      for (const auto& z : st.lifts) znorm_sq += z.s.squaredNorm();
      const double rel_change =
          step.alpha * std::sqrt(step.grad_norm_sq) /
          std::max(std::sqrt(znorm_sq), 1e-300);
      record(step.alpha, secs, step.rank_collapsed, rel_change);
      if (!truth) {
        const IterationRecord& cur = out.trace.records.back();
        if (cur.rel_residual <= cfg_.tol_residual &&
            rel_change <= cfg_.tol_residual) {
          out.status = SolveStatus::Converged;
          break;
        }
      }
    }

    out.iterations = st.iter;
    out.lifts = std::move(st.lifts);
    out.estimates.resize(k_users);
    for (Index k = 0; k < k_users; ++k)
      out.estimates[k] =
          apply_weight(st.g_adjoints[k], sqrt_w_, WeightMode::Inverse);
    out.final_rel_residual = out.trace.records.back().rel_residual;
    out.final_truth_error = out.trace.records.back().rel_truth_error;
    return out;
  }

  double rel_residual(const IterateState& st) const {
    return st.residual.norm() / std::max(dy_norm_, 1e-300);
  }

 private:
  MeasurementSet m_;
  SolverConfig cfg_;
  LiftShape shape_;
  LiftKernel kernel_;
  RVec sqrt_w_;
  CVec dy_;
  double dy_norm_ = 0.0;
};

/// One-shot convenience entry point.
inline SolveResult solve(const MeasurementSet& m, const SolverConfig& cfg,
                         const ChannelGroundTruth* truth = nullptr) {
  RgdSolver solver(m, cfg);
  return solver.solve(truth);
}

}  // namespace jbsd
