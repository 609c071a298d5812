#include "demix/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "demix/metrics.hpp"

namespace demix {

void SolverConfig::validate() const {
  if (!(eta > 0.0)) throw ArgumentError("eta must be > 0");
  if (max_iters < 1) throw ArgumentError("max_iters must be >= 1");
  if (record_every < 1) throw ArgumentError("record_every must be >= 1");
  if (!(stop_tol >= 0.0)) throw ArgumentError("stop_tol must be >= 0");
}

double TrajectoryRecord::max_alignment_ratio() const {
  double out = 0.0;
  for (double r : alignment_ratios) out = std::max(out, r);
  return out;
}

namespace {

std::string divergence_message(int iteration) {
  std::ostringstream msg;
  msg << "diverged at iteration " << iteration;
  return msg.str();
}

}  // namespace

DivergenceError::DivergenceError(int iteration, Trajectory partial)
    : Error(divergence_message(iteration)),
      iteration_(iteration),
      partial_(std::move(partial)) {}

SingularTriple leading_singular_triple(const CMatrix& M,
                                       const PowerIterationOptions& opts) {
  const Eigen::Index K = M.cols();
  if (K == 0 || M.rows() == 0) throw DimensionError("empty matrix");
  const CMatrix gram = M.adjoint() * M;

  SingularTriple out;
  CVector v = CVector::Ones(K) / std::sqrt(static_cast<double>(K));
  double lambda = std::real(v.dot(gram * v));
  bool converged = false;
  for (int it = 1; it <= opts.max_iters; ++it) {
    CVector w = gram * v;
    const double wn = w.norm();
    out.iterations = it;
    if (wn == 0.0) {  // M == 0 (or v in its null space)
      lambda = 0.0;
      converged = true;
      break;
    }
    w /= wn;
    const double next = std::real(w.dot(gram * w));
    const double dv = (w - v).norm();
    const bool lam_ok = std::abs(next - lambda) <= opts.eigenvalue_tol * std::abs(next);
    v = std::move(w);
    lambda = next;
    if (lam_ok && dv <= opts.vector_tol) {
      converged = true;
      break;
    }
  }

  if (!converged) {
    if (K > opts.dense_fallback_max_k)
      throw ConvergenceError("power iteration did not converge and K exceeds the dense fallback limit");
    Eigen::JacobiSVD<CMatrix> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
    out.sigma = svd.singularValues()(0);
    out.u = svd.matrixU().col(0);
    out.v = svd.matrixV().col(0);
    out.used_fallback = true;
    return out;
  }

  out.sigma = std::sqrt(std::max(lambda, 0.0));
  out.v = v;
  if (out.sigma > 0.0) {
    out.u = M * v / out.sigma;
    out.u.normalize();
  } else {
    out.u = CVector::Zero(M.rows());
  }
  return out;
}

CMatrix back_projection(const ProblemInstance& inst, int i, int skip) {
  inst.check_shapes();
  if (i < 0 || i >= inst.dims.s) throw DimensionError("source index out of range");
  const int K = inst.dims.K;
  CMatrix M = CMatrix::Zero(K, K);
  for (int j = 0; j < inst.dims.m; ++j) {
    if (j == skip) continue;
    const auto b = inst.B.b(j);
    const auto a = inst.A.a(i, j);
    for (int c = 0; c < K; ++c) {
      const cplx ya = inst.y[j] * std::conj(a[c]);
      for (int r = 0; r < K; ++r) M(r, c) += b[r] * ya;
    }
  }
  return M;
}

SourcePair spectral_pair(const CMatrix& M) {
  SingularTriple st = leading_singular_triple(M);
  if (st.sigma > 0.0) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index k = 0; k < st.u.size(); ++k) {
      const double a = std::abs(st.u[k]);
      if (a > best) {
        best = a;
        arg = k;
      }
    }
    const cplx phase = std::conj(st.u[arg]) / best;
    st.u *= phase;
    st.v *= phase;
  }
  const double root = std::sqrt(st.sigma);
  return SourcePair{root * st.u, root * st.v};
}

DemixState spectral_init(const ProblemInstance& inst) {
  return spectral_init_excluding(inst, -1);
}

DemixState spectral_init_excluding(const ProblemInstance& inst, int l) {
  if (l >= inst.dims.m) throw DimensionError("leave-one-out index out of range");
  DemixState state;
  state.sources.reserve(inst.dims.s);
  for (int i = 0; i < inst.dims.s; ++i)
    state.sources.push_back(spectral_pair(back_projection(inst, i, l)));
  return state;
}

namespace {

DemixState apply_step(const DemixState& state, const WirtingerGradient& g,
                      double eta) {
  DemixState next = state;
  for (std::size_t i = 0; i < state.sources.size(); ++i) {
    const double hn = state.sources[i].h.squaredNorm();
    const double xn = state.sources[i].x.squaredNorm();
    if (hn == 0.0 || xn == 0.0)
      throw DegenerateIterateError("source " + std::to_string(i) +
                                   " has a zero h or x; cannot scale the step");
    next.sources[i].h -= (eta / xn) * g[i].h;
    next.sources[i].x -= (eta / hn) * g[i].x;
  }
  return next;
}

}  // namespace

DemixState wf_step(const DemixState& state, const ProblemInstance& inst,
                   double eta) {
  return apply_step(state, wirtinger_gradient(state, inst), eta);
}


DemixState wf_step_excluding(const DemixState& state,
                             const ProblemInstance& inst, double eta, int l) {
  return apply_step(state, leave_one_out_gradient(state, inst, l), eta);
}

RunResult run(const ProblemInstance& inst, const SolverConfig& cfg) {
  cfg.validate();
  inst.check_shapes();
  return run_from(inst, cfg, spectral_init(inst));
}

RunResult run_from(const ProblemInstance& inst, const SolverConfig& cfg,
                   DemixState initial) {
  cfg.validate();
  inst.check_shapes();
  check_state(initial, inst);

  const bool with_truth = inst.has_truth();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const int s = inst.dims.s;

  RunResult result;
  result.final_state = std::move(initial);
  DemixState& state = result.final_state;

  std::vector<cplx> prev_alpha;
  auto make_record = [&](int t, double current_loss, const std::vector<cplx>& alpha) {
    TrajectoryRecord rec;
    rec.iter = t;
    rec.loss = current_loss;
    if (!with_truth) {
      rec.relative_error = rec.dist = rec.inc_a = rec.inc_b = nan;
      return rec;
    }
    const auto& truth = *inst.truth;
    rec.relative_error = relative_error(state, truth);
    double d2 = 0.0;
    rec.source_dists.resize(s);
    for (int i = 0; i < s; ++i) {
      const double di = alignment_objective(alpha[i], state.sources[i].h,
                                            state.sources[i].x, truth.sources[i].h,
                                            truth.sources[i].x) /
                        truth.d[i];
      rec.source_dists[i] = std::sqrt(di);
      d2 += di;
    }
    rec.dist = std::sqrt(d2);
    const auto inc = incoherence_measures(state, truth, inst, alpha);
    rec.inc_a = inc.inc_a;
    rec.inc_b = inc.inc_b;
    rec.alignments = alpha;
    rec.alignment_ratios.assign(s, 0.0);
    if (!prev_alpha.empty())
      for (int i = 0; i < s; ++i)
        rec.alignment_ratios[i] = std::abs(alpha[i] / prev_alpha[i] - 1.0);
    return rec;
  };

  auto alignments_now = [&]() {
    return with_truth ? align_state(state, inst.truth->sources) : std::vector<cplx>{};
  };

  // The loss of iterate t comes out of the gradient evaluation at t.
  GradientEvaluation ev = evaluate_gradient(state, inst);
  const double initial_loss = ev.loss;
  std::vector<cplx> alpha = alignments_now();
  result.trajectory.push_back(make_record(0, initial_loss, alpha));
  prev_alpha = alpha;
  if (!std::isfinite(initial_loss)) throw DivergenceError(0, result.trajectory);

  for (int t = 1; t <= cfg.max_iters; ++t) {
    state = apply_step(state, ev.grad, cfg.eta);
    ev = evaluate_gradient(state, inst);
    if (!std::isfinite(ev.loss) ||
        (initial_loss > 0.0 && ev.loss > kDivergenceFactor * initial_loss))
      throw DivergenceError(t, result.trajectory);

    alpha = alignments_now();
    const bool record = (t % cfg.record_every == 0) || t == cfg.max_iters;
    if (record) {
      result.trajectory.push_back(make_record(t, ev.loss, alpha));
      if (with_truth && cfg.stop_tol > 0.0 &&
          result.trajectory.back().relative_error <= cfg.stop_tol) {
        result.stopped_early = t < cfg.max_iters;
        break;
      }
    }
    prev_alpha = alpha;
  }
  return result;
}

}  // namespace demix
