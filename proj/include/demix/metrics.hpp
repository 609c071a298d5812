#pragma once

#include <vector>

#include "demix/problem.hpp"

namespace demix {

// g(alpha) = ||h / conj(alpha) - h_ref||^2 + ||alpha x - x_ref||^2
double alignment_objective(cplx alpha, const CVector& h, const CVector& x,
                           const CVector& h_ref, const CVector& x_ref);

// Global minimizer of alignment_objective over alpha in C \ {0}.
//
// For fixed beta = |alpha| the optimal phase is closed form; the remaining
// one-dimensional problem in log(beta) is solved by scanning the derivative
// for sign changes on [1e-6, 1e6] and bisecting each bracket.
// Throws ArgumentError if h or x is zero.
cplx align_source(const CVector& h, const CVector& x, const CVector& h_ref,
                  const CVector& x_ref);

// Minimizer over |alpha| = 1 (where 1/conj(alpha) == alpha).
cplx align_source_unit(const CVector& h, const CVector& x, const CVector& h_ref,
                       const CVector& x_ref);

// align_source for every source of state against ref.
std::vector<cplx> align_state(const DemixState& state,
                              const std::vector<SourcePair>& ref);

// Applies (h / conj(alpha), alpha x) per source.
DemixState apply_alignment(const DemixState& state,
                           const std::vector<cplx>& alignments);

// sqrt(sum_i min_alpha g_i(alpha) / weights_i). With weights = d_i of the
// ground truth this is the distance between state and ref used throughout.
double aligned_distance(const DemixState& state,
                        const std::vector<SourcePair>& ref,
                        const std::vector<double>& weights);

// Per-source terms of aligned_distance (squared, already divided by d_i).
std::vector<double> source_distances_sq(const DemixState& state,
                                        const GroundTruth& truth);

double dist(const DemixState& state, const GroundTruth& truth);

// sum_i ||h_i x_i^* - h_i' x_i'^*||_F / sum_i ||h_i' x_i'^*||_F
double relative_error(const DemixState& state, const GroundTruth& truth);

struct IncoherenceMeasures {
  double inc_a = 0.0;  // max_ij |a_ij^*(alpha_i x_i - x_i')| / ||x_i'||
  double inc_b = 0.0;  // max_ij |b_j^*(h_i / conj(alpha_i))| / ||h_i'||
};

IncoherenceMeasures incoherence_measures(const DemixState& state,
                                         const GroundTruth& truth,
                                         const ProblemInstance& inst,
                                         const std::vector<cplx>& alignments);

}  // namespace demix
