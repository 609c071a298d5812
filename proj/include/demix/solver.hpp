#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "demix/objective.hpp"

namespace demix {

struct SolverConfig {
  double eta = 0.1;        // step size
  int max_iters = 500;     // T
  double stop_tol = 0.0;   // relative-error threshold; 0 disables
  int record_every = 1;
  std::uint64_t seed = 0;

  // Throws ArgumentError on eta <= 0, max_iters < 1 or record_every < 1.
  void validate() const;
};

struct TrajectoryRecord {
  int iter = 0;
  double loss = 0.0;
  // The following need the ground truth; NaN without it.
  double relative_error = 0.0;
  double dist = 0.0;
  double inc_a = 0.0;
  double inc_b = 0.0;
  // |alpha_i^t / alpha_i^{t-1} - 1| per source (zeros at t = 0).
  std::vector<double> alignment_ratios;
  std::vector<cplx> alignments;
  // dist(z_i, z_i') per source, so that dist^2 is their sum of squares.
  std::vector<double> source_dists;

  double max_alignment_ratio() const;
};

using Trajectory = std::vector<TrajectoryRecord>;

// The loss blew up (non-finite, or above 1e6 x the initial loss).
class DivergenceError : public Error {
 public:
  DivergenceError(int iteration, Trajectory partial);
  int iteration() const { return iteration_; }
  const Trajectory& partial() const { return partial_; }

 private:
  int iteration_;
  Trajectory partial_;
};

inline constexpr double kDivergenceFactor = 1e6;

struct SingularTriple {
  double sigma = 0.0;
  CVector u;  // left
  CVector v;  // right
  int iterations = 0;
  bool used_fallback = false;
};

struct PowerIterationOptions {
  double eigenvalue_tol = 1e-12;  // relative change of the Rayleigh quotient
  double vector_tol = 1e-11;      // change of the normalized iterate
  int max_iters = 5000;
  int dense_fallback_max_k = 64;
};

// Leading singular triple via power iteration on M^* M from the normalized
// all-ones vector, with a dense Jacobi SVD fallback for small K.
SingularTriple leading_singular_triple(const CMatrix& M,
                                       const PowerIterationOptions& opts = {});

// M_i = sum_j y_j b_j a_ij^*, optionally with measurement `skip` removed.
CMatrix back_projection(const ProblemInstance& inst, int i, int skip = -1);

// (sqrt(sigma) u, sqrt(sigma) v) with u rotated so its largest-magnitude
// entry (lowest index on ties) is real positive; v gets the same rotation.
SourcePair spectral_pair(const CMatrix& M);

DemixState spectral_init(const ProblemInstance& inst);

// Spectral initialization with measurement l deleted from every M_i.
DemixState spectral_init_excluding(const ProblemInstance& inst, int l);

// h_i <- h_i - eta / ||x_i||^2 grad_h_i, x_i <- x_i - eta / ||h_i||^2 grad_x_i,
// both norms taken at the current iterate.
DemixState wf_step(const DemixState& state, const ProblemInstance& inst,
                   double eta);

// Same update driven by the gradient with measurement l deleted.
DemixState wf_step_excluding(const DemixState& state,
                             const ProblemInstance& inst, double eta, int l);

struct RunResult {
  DemixState final_state;
  Trajectory trajectory;
  bool stopped_early = false;
};

// Spectral initialization followed by wf_step iterations.
RunResult run(const ProblemInstance& inst, const SolverConfig& cfg);

// Same loop from a given starting point (iterate 0).
RunResult run_from(const ProblemInstance& inst, const SolverConfig& cfg,
                   DemixState initial);

}  // namespace demix
