#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "demix/solver.hpp"

namespace demix {

// Attached to every report: the noise is sampled as complex Gaussian, while
// the convergence analysis assumes bounded noise |e_j| <= sigma^2 / m.
inline constexpr const char* kNoiseModelNote =
    "noise is complex Gaussian; the convergence analysis assumes entrywise "
    "bounded noise |e_j| <= sigma^2/m, so noisy-case guarantees are advisory";

// Expected Wirtinger Hessian of the noiseless loss at the ground truth,
// block-diagonal over sources with per-source block (ordering h, x, conj h,
// conj x)
//
//   [ |x|^2 I   0         0           h x^T   ]
//   [ 0         |h|^2 I   x h^T       0       ]
//   [ 0         (x h^T)^* |h|^2 I     0       ]
//   [ (h x^T)^* 0         0           |x|^2 I ]
//
// Requires ||h_i|| == ||x_i|| (relative 1e-12) and 4sK <= kMaxDenseHessian.
CMatrix population_hessian(const GroundTruth& truth);

// Largest |eigenvalue| of a Hermitian matrix.
double hermitian_norm(const CMatrix& H);

struct RscOptions {
  int n_points = 50;
  int n_dirs = 20;
  double delta = 0.05;
  // Constants of the incoherence conditions on sampled points.
  double c3 = 1.0;
  double c4 = 1.0;
  int max_attempts = 10000;
};

struct RscReport {
  int samples_tested = 0;
  int points_tested = 0;
  int points_failed = 0;  // rejection sampling exhausted
  double min_quadratic_ratio = 0.0;
  double smoothness_max = 0.0;
  double kappa = 1.0;
  int s = 1;
  double ratio_bound = 0.0;       // 1 / (4 kappa)
  double smoothness_bound = 0.0;  // 2 + s
  bool pass = false;
};

// Samples points around the truth obeying the closeness and incoherence
// conditions, builds directions from aligned pairs of such points and a
// diagonal scaling D with real entries near 1/kappa, and records
// min u^*(D H + H D)u / ||u||^2 and max ||H|| of the clean Hessian H.
RscReport check_rsc(const ProblemInstance& inst, const RscOptions& opts,
                    std::uint64_t seed);

struct SpectralReport {
  Dimensions dims;
  double sigma = 0.0;
  int n_trials = 0;
  double mean_deviation = 0.0;  // mean over trials and sources of ||M_i - h x^*||
  double max_deviation = 0.0;
  std::vector<double> source_mean_deviation;
  // max over sources and entries (re and im separately) of
  // |mean(M_i) - h x^*| / standard error
  double max_abs_zscore = 0.0;
  double zscore_bound = 5.0;
};

// ||M_i - h_i x_i^*|| (spectral norm) for every source of the instance.
std::vector<double> spectral_deviation(const ProblemInstance& inst);

// Ground truth fixed by seed; design and noise redrawn for every trial.
SpectralReport spectral_concentration(const Dimensions& dims, double sigma,
                                      int n_trials, std::uint64_t seed);

struct LooReport {
  std::vector<int> l_set;
  std::vector<int> iters;
  std::vector<double> max_dist;   // max_l dist(z^{t,(l)}, z^t), NaN if all degenerate
  std::vector<double> main_dist;  // dist(z^t, z'), NaN without truth
  std::vector<bool> degenerate;   // per l
  double initial_dist = 0.0;
};

// Runs the main sequence and one leave-one-out sequence per l (spectral
// init with measurement l deleted, gradient without measurement l), and
// records the largest aligned distance of a leave-one-out iterate to the
// main iterate. Branches that hit a zero iterate are flagged degenerate.
LooReport leave_one_out_trajectories(const ProblemInstance& inst,
                                     const SolverConfig& cfg,
                                     const std::vector<int>& l_set);

// l_set of n distinct indices in [0, m) drawn from seed, sorted.
std::vector<int> sample_loo_indices(int m, int n, std::uint64_t seed);

struct AlignmentRatioPoint {
  int iter = 0;
  double max_ratio = 0.0;  // max_i |alpha_i^t / alpha_i^{t-1} - 1|
  // max_i ratio_i / dist(z_i^{t-1}, z_i'); NaN when a previous dist is 0.
  double quotient = 0.0;
};

// Needs consecutive records (record_every == 1) to form quotients; records
// whose predecessor is not the previous iteration are skipped.
std::vector<AlignmentRatioPoint> alignment_ratio_series(const Trajectory& traj);

// {check, params, seed, metrics, pass, notes}
nlohmann::json to_json(const RscReport& r, const RscOptions& opts,
                       std::uint64_t seed);
nlohmann::json to_json(const SpectralReport& r, std::uint64_t seed);
// pass: every recorded max_dist <= threshold * initial_dist.
nlohmann::json to_json(const LooReport& r, const SolverConfig& cfg,
                       std::uint64_t seed, double threshold = 0.1);

}  // namespace demix
