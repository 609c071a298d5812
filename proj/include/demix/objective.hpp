#pragma once

#include <vector>

#include "demix/problem.hpp"

namespace demix {

// Wirtinger gradient (d f / d conj(z)) per source: h holds grad_{h_i} f,
// x holds grad_{x_i} f.
//
// Convention: these are the conjugate-coordinate derivatives. For a real
// direction d (perturbing z by d), the directional derivative of f is
// 2 Re <g, d>; i.e. the gradient with respect to the real parameterization
// (Re z, Im z), packed as a complex vector, is 2 g.
using WirtingerGradient = std::vector<SourcePair>;

// Per-source pieces of the Wirtinger Hessian. Blocks act on the ordering
// (h_i, x_i, conj h_i, conj x_i).
struct HessianBlocks {
  CMatrix C1;  // sum_j |a_ij^* x_i|^2 b_j b_j^*
  CMatrix C2;  // sum_j r_j b_j a_ij^*
  CMatrix C3;  // sum_j |b_j^* h_i|^2 a_ij a_ij^*
  CMatrix E1;  // sum_j b_j b_j^* h_i (a_ij a_ij^* x_i)^T
  CMatrix E2;  // sum_j a_ij a_ij^* x_i (b_j b_j^* h_i)^T
};

inline constexpr int kMaxDenseHessian = 4096;

// Throws DimensionError unless state matches the instance's s and K.
void check_state(const DemixState& state, const ProblemInstance& inst);

// r_j = sum_i b_j^* h_i x_i^* a_ij - y_j
CVector residuals(const DemixState& state, const ProblemInstance& inst);

// ||residuals||^2
double loss(const DemixState& state, const ProblemInstance& inst);

// Noiseless loss measured against the attached truth:
// sum_j |sum_i b_j^* (h_i x_i^* - h_i' x_i'^*) a_ij|^2.
double clean_loss(const DemixState& state, const ProblemInstance& inst);

WirtingerGradient wirtinger_gradient(const DemixState& state,
                                     const ProblemInstance& inst);

struct GradientEvaluation {
  WirtingerGradient grad;
  double loss = 0.0;  // full loss, including measurement `skip`
};

// Gradient (with measurement skip deleted when skip >= 0) and the loss from
// one pass over the measurements.
GradientEvaluation evaluate_gradient(const DemixState& state,
                                     const ProblemInstance& inst, int skip = -1);

// Gradient of the loss with the l-th measurement deleted.
WirtingerGradient leave_one_out_gradient(const DemixState& state,
                                         const ProblemInstance& inst, int l);

// The l-th summand of the gradient (what leave_one_out_gradient drops).
WirtingerGradient gradient_term(const DemixState& state,
                                const ProblemInstance& inst, int l);

// With clean == true, C2 uses the residual against the ground truth and the
// blocks describe the Hessian of the noiseless loss; otherwise C2 uses the
// measured residual.
HessianBlocks hessian_blocks(const DemixState& state,
                             const ProblemInstance& inst, int i, bool clean);

// [[C, E], [E^*, conj(C)]] with C = [[C1, C2], [C2^*, C3]],
// E = [[0, E1], [E2, 0]].
CMatrix assemble_source_hessian(const HessianBlocks& blocks);

// Block-diagonal diag(H_1, ..., H_s) of the per-source clean Hessians.
// Refuses 4sK > kMaxDenseHessian.
CMatrix assemble_clean_hessian(const DemixState& state,
                               const ProblemInstance& inst);

}  // namespace demix
