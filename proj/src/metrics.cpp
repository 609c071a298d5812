#include "demix/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace demix {

namespace {

// Reduced form of the alignment objective. With p = h_ref^* h,
// q = x_ref^* x and w(beta) = p / beta + beta q:
//   G(beta) = ||h||^2 / beta^2 + beta^2 ||x||^2 - 2 |w(beta)| + const,
// attained by the phase exp(i phi) = conj(w) / |w|.
struct ReducedAlignment {
  double hh, xx;  // ||h||^2, ||x||^2
  cplx p, q;

  cplx w(double beta) const { return p / beta + beta * q; }

  double value(double beta) const {
    return hh / (beta * beta) + beta * beta * xx - 2.0 * std::abs(w(beta));
  }

  // dG/d(log beta) = beta * dG/dbeta
  double slope(double beta) const {
    const double wabs = std::abs(w(beta));
    const double b2 = beta * beta;
    double d = -2.0 * hh / b2 + 2.0 * b2 * xx;
    if (wabs > 0.0) d -= 2.0 * (-std::norm(p) / b2 + b2 * std::norm(q)) / wabs;
    return d;
  }

  cplx alpha(double beta) const {
    const cplx wv = w(beta);
    const double wabs = std::abs(wv);
    const cplx phase = wabs > 0.0 ? std::conj(wv) / wabs : cplx{1.0, 0.0};
    return beta * phase;
  }
};

constexpr double kLogBetaMin = -13.815510557964274;  // log(1e-6)
constexpr double kLogBetaMax = 13.815510557964274;   // log(1e6)
constexpr int kScanPoints = 480;
constexpr double kBisectTol = 1e-12;

double bisect_slope(const ReducedAlignment& red, double lo, double hi) {
  // slope(lo) < 0 <= slope(hi)
  while (hi - lo > kBisectTol) {
    const double mid = 0.5 * (lo + hi);
    if (red.slope(std::exp(mid)) < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

void require_nonzero(const CVector& h, const CVector& x) {
  if (h.squaredNorm() == 0.0 || x.squaredNorm() == 0.0)
    throw ArgumentError("alignment needs nonzero h and x");
}

}  // namespace

double alignment_objective(cplx alpha, const CVector& h, const CVector& x,
                           const CVector& h_ref, const CVector& x_ref) {
  return (h / std::conj(alpha) - h_ref).squaredNorm() +
         (alpha * x - x_ref).squaredNorm();
}

cplx align_source(const CVector& h, const CVector& x, const CVector& h_ref,
                  const CVector& x_ref) {
  require_nonzero(h, x);
  const ReducedAlignment red{h.squaredNorm(), x.squaredNorm(), h_ref.dot(h),
                             x_ref.dot(x)};

  std::vector<double> grid;
  grid.reserve(kScanPoints + 2);
  for (int k = 0; k < kScanPoints; ++k)
    grid.push_back(kLogBetaMin + (kLogBetaMax - kLogBetaMin) * k / (kScanPoints - 1));
  // Extra starts where the minimizer usually sits.
  const double x_ref_norm = x_ref.norm();
  if (x_ref_norm > 0.0) grid.push_back(std::log(x_ref_norm / std::sqrt(red.xx)));
  grid.push_back(0.0);
  grid.push_back(0.25 * std::log(red.hh / red.xx));  // minimizer of the norm terms
  std::sort(grid.begin(), grid.end());
  grid.erase(std::remove_if(grid.begin(), grid.end(),
                            [](double t) { return t < kLogBetaMin || t > kLogBetaMax; }),
             grid.end());

  double best_t = 0.0;
  double best_val = std::numeric_limits<double>::infinity();
  auto consider = [&](double t) {
    const double v = red.value(std::exp(t));
    if (v < best_val) {
      best_val = v;
      best_t = t;
    }
  };

  double prev_slope = red.slope(std::exp(grid.front()));
  consider(grid.front());
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double cur_slope = red.slope(std::exp(grid[k]));
    if (prev_slope < 0.0 && cur_slope >= 0.0)
      consider(bisect_slope(red, grid[k - 1], grid[k]));
    consider(grid[k]);
    prev_slope = cur_slope;
  }
  return red.alpha(std::exp(best_t));
}

cplx align_source_unit(const CVector& h, const CVector& x, const CVector& h_ref,
                       const CVector& x_ref) {
  require_nonzero(h, x);
  // For |alpha| = 1 the objective is const - 2 Re(alpha (h_ref^* h + x_ref^* x)).
  const cplx c = h_ref.dot(h) + x_ref.dot(x);
  const double cabs = std::abs(c);
  return cabs > 0.0 ? std::conj(c) / cabs : cplx{1.0, 0.0};
}

std::vector<cplx> align_state(const DemixState& state,
                              const std::vector<SourcePair>& ref) {
  if (state.sources.size() != ref.size())
    throw DimensionError("align_state: source count mismatch");
  std::vector<cplx> out;
  out.reserve(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i)
    out.push_back(align_source(state.sources[i].h, state.sources[i].x, ref[i].h,
                               ref[i].x));
  return out;
}

DemixState apply_alignment(const DemixState& state,
                           const std::vector<cplx>& alignments) {
  if (state.sources.size() != alignments.size())
    throw DimensionError("apply_alignment: source count mismatch");
  DemixState out = state;
  for (std::size_t i = 0; i < alignments.size(); ++i) {
    out.sources[i].h /= std::conj(alignments[i]);
    out.sources[i].x *= alignments[i];
  }
  return out;
}

double aligned_distance(const DemixState& state,
                        const std::vector<SourcePair>& ref,
                        const std::vector<double>& weights) {
  if (weights.size() != ref.size())
    throw DimensionError("aligned_distance: weight count mismatch");
  const auto alphas = align_state(state, ref);
  double total = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i)
    total += alignment_objective(alphas[i], state.sources[i].h, state.sources[i].x,
                                 ref[i].h, ref[i].x) /
             weights[i];
  return std::sqrt(total);
}

std::vector<double> source_distances_sq(const DemixState& state,
                                        const GroundTruth& truth) {
  const auto alphas = align_state(state, truth.sources);
  std::vector<double> out;
  for (std::size_t i = 0; i < alphas.size(); ++i)
    out.push_back(alignment_objective(alphas[i], state.sources[i].h,
                                      state.sources[i].x, truth.sources[i].h,
                                      truth.sources[i].x) /
                  truth.d[i]);
  return out;
}

double dist(const DemixState& state, const GroundTruth& truth) {
  return aligned_distance(state, truth.sources, truth.d);
}

double relative_error(const DemixState& state, const GroundTruth& truth) {
  if (state.sources.size() != truth.sources.size())
    throw DimensionError("relative_error: source count mismatch");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < truth.sources.size(); ++i) {
    const auto& z = state.sources[i];
    const auto& t = truth.sources[i];
    if (z.h.size() != t.h.size() || z.x.size() != t.x.size())
      throw DimensionError("relative_error: vector length mismatch");
    num += (z.h * z.x.adjoint() - t.h * t.x.adjoint()).norm();
    den += t.h.norm() * t.x.norm();  // ||h x^*||_F = ||h|| ||x||
  }
  return num / den;
}

IncoherenceMeasures incoherence_measures(const DemixState& state,
                                         const GroundTruth& truth,
                                         const ProblemInstance& inst,
                                         const std::vector<cplx>& alignments) {
  const int s = inst.dims.s;
  if (static_cast<int>(alignments.size()) != s)
    throw ArgumentError("incoherence_measures needs one alignment per source");
  if (state.num_sources() != s || truth.num_sources() != s)
    throw DimensionError("incoherence_measures: source count mismatch");
  IncoherenceMeasures out;
  for (int i = 0; i < s; ++i) {
    const CVector x_err = alignments[i] * state.sources[i].x - truth.sources[i].x;
    const CVector h_al = state.sources[i].h / std::conj(alignments[i]);
    const double xn = truth.sources[i].x.norm();
    const double hn = truth.sources[i].h.norm();
    for (int j = 0; j < inst.dims.m; ++j) {
      out.inc_a = std::max(out.inc_a, std::abs(inner(inst.A.a(i, j), x_err)) / xn);
      out.inc_b = std::max(out.inc_b, std::abs(inner(inst.B.b(j), h_al)) / hn);
    }
  }
  return out;
}

}  // namespace demix
