#include "demix/objective.hpp"

#include <sstream>

namespace demix {

namespace {

// b_j^* h_i and a_ij^* x_i for all (i, j). Shared by residual, gradient and
// Hessian evaluations.
struct Projections {
  std::vector<CVector> bh;  // bh[i][j] = b_j^* h_i
  std::vector<CVector> ax;  // ax[i][j] = a_ij^* x_i
};

Projections project(const std::vector<SourcePair>& pairs,
                    const ProblemInstance& inst) {
  const int s = static_cast<int>(pairs.size());
  const int m = inst.dims.m;
  Projections p;
  p.bh.resize(s);
  p.ax.resize(s);
  for (int i = 0; i < s; ++i) {
    p.bh[i].resize(m);
    p.ax[i].resize(m);
    for (int j = 0; j < m; ++j) {
      p.bh[i][j] = inner(inst.B.b(j), pairs[i].h);
      p.ax[i][j] = inner(inst.A.a(i, j), pairs[i].x);
    }
  }
  return p;
}

// sum_i (b_j^* h_i) conj(a_ij^* x_i), j-ascending.
CVector combine(const Projections& p, int m) {
  CVector out = CVector::Zero(m);
  for (std::size_t i = 0; i < p.bh.size(); ++i)
    for (int j = 0; j < m; ++j) out[j] += p.bh[i][j] * std::conj(p.ax[i][j]);
  return out;
}

void axpy(cplx alpha, std::span<const cplx> v, CVector& acc) {
  for (std::size_t k = 0; k < v.size(); ++k) acc[static_cast<Eigen::Index>(k)] += alpha * v[k];
}

WirtingerGradient gradient_from(const Projections& p, const CVector& r,
                                const ProblemInstance& inst, int skip) {
  const int s = static_cast<int>(p.bh.size());
  const int m = inst.dims.m;
  const int K = inst.dims.K;
  WirtingerGradient g(s);
  for (int i = 0; i < s; ++i) {
    CVector gh = CVector::Zero(K);
    CVector gx = CVector::Zero(K);
    for (int j = 0; j < m; ++j) {
      if (j == skip) continue;
      axpy(r[j] * p.ax[i][j], inst.B.b(j), gh);
      axpy(std::conj(r[j]) * p.bh[i][j], inst.A.a(i, j), gx);
    }
    g[i].h = std::move(gh);
    g[i].x = std::move(gx);
  }
  return g;
}

// Returns u v^T for column vectors u, v.
CMatrix outer_t(const CVector& u, const CVector& v) { return u * v.transpose(); }

}  // namespace

void check_state(const DemixState& state, const ProblemInstance& inst) {
  if (state.num_sources() != inst.dims.s) {
    std::ostringstream msg;
    msg << "state has " << state.num_sources() << " sources, instance has "
        << inst.dims.s;
    throw DimensionError(msg.str());
  }
  for (const auto& p : state.sources)
    if (p.h.size() != inst.dims.K || p.x.size() != inst.dims.K)
      throw DimensionError("state vectors do not have length K");
  if (inst.y.size() != inst.dims.m)
    throw DimensionError("measurement vector has wrong length");
}

CVector residuals(const DemixState& state, const ProblemInstance& inst) {
  check_state(state, inst);
  CVector r = forward(state.sources, inst.A, inst.B);
  r -= inst.y;
  return r;
}

double loss(const DemixState& state, const ProblemInstance& inst) {
  return residuals(state, inst).squaredNorm();
}

double clean_loss(const DemixState& state, const ProblemInstance& inst) {
  check_state(state, inst);
  const auto& truth = inst.ground_truth();
  CVector r = forward(state.sources, inst.A, inst.B) -
              forward(truth.sources, inst.A, inst.B);
  return r.squaredNorm();
}

WirtingerGradient wirtinger_gradient(const DemixState& state,
                                     const ProblemInstance& inst) {
  check_state(state, inst);
  const Projections p = project(state.sources, inst);
  CVector r = combine(p, inst.dims.m) - inst.y;
  return gradient_from(p, r, inst, -1);
}

GradientEvaluation evaluate_gradient(const DemixState& state,
                                     const ProblemInstance& inst, int skip) {
  check_state(state, inst);
  if (skip >= inst.dims.m)
    throw DimensionError("leave-one-out index " + std::to_string(skip) + " out of range");
  const Projections p = project(state.sources, inst);
  CVector r = combine(p, inst.dims.m) - inst.y;
  GradientEvaluation out;
  out.loss = r.squaredNorm();
  out.grad = gradient_from(p, r, inst, skip);
  return out;
}

WirtingerGradient leave_one_out_gradient(const DemixState& state,
                                         const ProblemInstance& inst, int l) {
  check_state(state, inst);
  if (l < 0 || l >= inst.dims.m)
    throw DimensionError("leave-one-out index " + std::to_string(l) + " out of range");
  const Projections p = project(state.sources, inst);
  CVector r = combine(p, inst.dims.m) - inst.y;
  return gradient_from(p, r, inst, l);
}

WirtingerGradient gradient_term(const DemixState& state,
                                const ProblemInstance& inst, int l) {
  check_state(state, inst);
  if (l < 0 || l >= inst.dims.m)
    throw DimensionError("measurement index " + std::to_string(l) + " out of range");
  const int s = inst.dims.s;
  const int K = inst.dims.K;
  std::vector<cplx> bh(s), ax(s);
  cplx r_l{0.0, 0.0};
  for (int i = 0; i < s; ++i) {
    bh[i] = inner(inst.B.b(l), state.sources[i].h);
    ax[i] = inner(inst.A.a(i, l), state.sources[i].x);
    r_l += bh[i] * std::conj(ax[i]);
  }
  r_l -= inst.y[l];
  WirtingerGradient g(s);
  for (int i = 0; i < s; ++i) {
    g[i].h = CVector::Zero(K);
    g[i].x = CVector::Zero(K);
    axpy(r_l * ax[i], inst.B.b(l), g[i].h);
    axpy(std::conj(r_l) * bh[i], inst.A.a(i, l), g[i].x);
  }
  return g;
}

HessianBlocks hessian_blocks(const DemixState& state,
                             const ProblemInstance& inst, int i, bool clean) {
  check_state(state, inst);
  if (i < 0 || i >= inst.dims.s)
    throw DimensionError("source index " + std::to_string(i) + " out of range");
  const int m = inst.dims.m;
  const int K = inst.dims.K;

  const Projections p = project(state.sources, inst);
  CVector r = combine(p, m);
  if (clean) {
    const auto& truth = inst.ground_truth();
    r -= forward(truth.sources, inst.A, inst.B);
  } else {
    r -= inst.y;
  }

  HessianBlocks blk;
  blk.C1 = CMatrix::Zero(K, K);
  blk.C2 = CMatrix::Zero(K, K);
  blk.C3 = CMatrix::Zero(K, K);
  blk.E1 = CMatrix::Zero(K, K);
  blk.E2 = CMatrix::Zero(K, K);
  CVector b(K), a(K);
  for (int j = 0; j < m; ++j) {
    const auto bj = inst.B.b(j);
    const auto aij = inst.A.a(i, j);
    for (int k = 0; k < K; ++k) {
      b[k] = bj[k];
      a[k] = aij[k];
    }
    const cplx bh = p.bh[i][j];  // b^* h
    const cplx ax = p.ax[i][j];  // a^* x
    blk.C1.noalias() += std::norm(ax) * (b * b.adjoint());
    blk.C2.noalias() += r[j] * (b * a.adjoint());
    blk.C3.noalias() += std::norm(bh) * (a * a.adjoint());
    // b b^* h = (b^* h) b and a a^* x = (a^* x) a
    blk.E1.noalias() += (bh * ax) * outer_t(b, a);
    blk.E2.noalias() += (ax * bh) * outer_t(a, b);
  }
  return blk;
}

CMatrix assemble_source_hessian(const HessianBlocks& blk) {
  const Eigen::Index K = blk.C1.rows();
  if (4 * K > kMaxDenseHessian)
    throw DimensionError("dense Hessian assembly limited to 4K <= 4096");
  for (const CMatrix* mtx : {&blk.C2, &blk.C3, &blk.E1, &blk.E2})
    if (mtx->rows() != K || mtx->cols() != K)
      throw DimensionError("Hessian blocks have inconsistent sizes");
  CMatrix C(2 * K, 2 * K);
  C << blk.C1, blk.C2, blk.C2.adjoint(), blk.C3;
  CMatrix E = CMatrix::Zero(2 * K, 2 * K);
  E.topRightCorner(K, K) = blk.E1;
  E.bottomLeftCorner(K, K) = blk.E2;
  CMatrix H(4 * K, 4 * K);
  H << C, E, E.adjoint(), C.conjugate();
  return H;
}

CMatrix assemble_clean_hessian(const DemixState& state,
                               const ProblemInstance& inst) {
  check_state(state, inst);
  const int s = inst.dims.s;
  const int K = inst.dims.K;
  if (4 * s * K > kMaxDenseHessian)
    throw DimensionError("dense Hessian assembly limited to 4sK <= 4096");
  CMatrix H = CMatrix::Zero(4 * s * K, 4 * s * K);
  for (int i = 0; i < s; ++i)
    H.block(4 * i * K, 4 * i * K, 4 * K, 4 * K) =
        assemble_source_hessian(hessian_blocks(state, inst, i, true));
  return H;
}

}  // namespace demix
