#include "demix/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include <Eigen/Eigenvalues>

#include "demix/metrics.hpp"
#include "demix/rng.hpp"

namespace demix {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

CVector random_direction(RandomStream& stream, Eigen::Index K) {
  CVector v(K);
  for (Eigen::Index k = 0; k < K; ++k) v[k] = stream.complex_normal();
  return v / v.norm();
}

// Uniform direction scaled by a radius uniform in [0, radius].
CVector ball_offset(RandomStream& stream, Eigen::Index K, double radius) {
  const double r = radius * stream.uniform();
  return r * random_direction(stream, K);
}

DemixState perturb(const GroundTruth& truth, RandomStream& stream, double radius) {
  DemixState z;
  for (const auto& p : truth.sources)
    z.sources.push_back({p.h + ball_offset(stream, p.h.size(), radius),
                         p.x + ball_offset(stream, p.x.size(), radius)});
  return z;
}

bool within_ball(const DemixState& z, const GroundTruth& truth, double radius) {
  for (std::size_t i = 0; i < truth.sources.size(); ++i) {
    if ((z.sources[i].h - truth.sources[i].h).norm() > radius) return false;
    if ((z.sources[i].x - truth.sources[i].x).norm() > radius) return false;
  }
  return true;
}

bool incoherent(const DemixState& z, const ProblemInstance& inst,
                double bound_a, double bound_b) {
  const auto& truth = *inst.truth;
  for (int i = 0; i < inst.dims.s; ++i) {
    const CVector dx = z.sources[i].x - truth.sources[i].x;
    const double xn = truth.sources[i].x.norm();
    const double hn = truth.sources[i].h.norm();
    for (int j = 0; j < inst.dims.m; ++j) {
      if (std::abs(inner(inst.A.a(i, j), dx)) > bound_a * xn) return false;
      if (std::abs(inner(inst.B.b(j), z.sources[i].h)) > bound_b * hn) return false;
    }
  }
  return true;
}

// [h; x; conj h; conj x] per source, stacked.
CVector stack_direction(const DemixState& z, const DemixState& w) {
  const Eigen::Index K = z.sources.front().h.size();
  CVector u(4 * K * static_cast<Eigen::Index>(z.sources.size()));
  for (std::size_t i = 0; i < z.sources.size(); ++i) {
    const CVector dh = z.sources[i].h - w.sources[i].h;
    const CVector dx = z.sources[i].x - w.sources[i].x;
    const Eigen::Index o = 4 * K * static_cast<Eigen::Index>(i);
    u.segment(o, K) = dh;
    u.segment(o + K, K) = dx;
    u.segment(o + 2 * K, K) = dh.conjugate();
    u.segment(o + 3 * K, K) = dx.conjugate();
  }
  return u;
}

bool has_zero_factor(const DemixState& z) {
  for (const auto& p : z.sources)
    if (p.h.squaredNorm() == 0.0 || p.x.squaredNorm() == 0.0) return true;
  return false;
}

std::vector<double> state_weights(const DemixState& z) {
  std::vector<double> w;
  for (const auto& p : z.sources) w.push_back(p.h.squaredNorm() + p.x.squaredNorm());
  return w;
}

// NaN marks an undefined value and is written as null.
nlohmann::json number(double v) {
  return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v);
}

nlohmann::json numbers(const std::vector<double>& v) {
  nlohmann::json out = nlohmann::json::array();
  for (double x : v) out.push_back(number(x));
  return out;
}

nlohmann::json notes() { return nlohmann::json::array({kNoiseModelNote}); }

nlohmann::json dims_json(const Dimensions& d) {
  return {{"s", d.s}, {"m", d.m}, {"K", d.K}};
}

}  // namespace

CMatrix population_hessian(const GroundTruth& truth) {
  const int s = truth.num_sources();
  if (s == 0) throw DimensionError("population_hessian: empty ground truth");
  const Eigen::Index K = truth.sources.front().h.size();
  if (4 * s * K > kMaxDenseHessian)
    throw DimensionError("population Hessian limited to 4sK <= 4096");
  CMatrix H = CMatrix::Zero(4 * s * K, 4 * s * K);
  const CMatrix I = CMatrix::Identity(K, K);
  for (int i = 0; i < s; ++i) {
    const CVector& h = truth.sources[i].h;
    const CVector& x = truth.sources[i].x;
    if (h.size() != K || x.size() != K)
      throw DimensionError("population_hessian: inconsistent vector lengths");
    const double hn = h.squaredNorm();
    const double xn = x.squaredNorm();
    if (std::abs(std::sqrt(hn) - std::sqrt(xn)) > 1e-12 * std::max(std::sqrt(hn), std::sqrt(xn)))
      throw ArgumentError("population_hessian requires ||h_i|| == ||x_i||");
    const CMatrix hxT = h * x.transpose();
    const CMatrix xhT = x * h.transpose();
    auto blk = H.block(4 * i * K, 4 * i * K, 4 * K, 4 * K);
    blk.block(0, 0, K, K) = xn * I;
    blk.block(K, K, K, K) = hn * I;
    blk.block(2 * K, 2 * K, K, K) = hn * I;
    blk.block(3 * K, 3 * K, K, K) = xn * I;
    blk.block(0, 3 * K, K, K) = hxT;
    blk.block(K, 2 * K, K, K) = xhT;
    blk.block(2 * K, K, K, K) = xhT.adjoint();
    blk.block(3 * K, 0, K, K) = hxT.adjoint();
  }
  return H;
}

double hermitian_norm(const CMatrix& H) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(H, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw ConvergenceError("Hermitian eigensolver failed");
  const auto& ev = es.eigenvalues();
  return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

RscReport check_rsc(const ProblemInstance& inst, const RscOptions& opts,
                    std::uint64_t seed) {
  inst.check_shapes();
  const auto& truth = inst.ground_truth();
  const int s = inst.dims.s;
  const int m = inst.dims.m;
  if (4 * s * inst.dims.K > kMaxDenseHessian)
    throw DimensionError("check_rsc limited to 4sK <= 4096");
  if (opts.n_points < 1 || opts.n_dirs < 1)
    throw ArgumentError("check_rsc needs n_points >= 1 and n_dirs >= 1");
  if (!(opts.delta > 0.0)) throw ArgumentError("delta must be > 0");

  RscReport rep;
  rep.kappa = truth.kappa;
  rep.s = s;
  rep.ratio_bound = 1.0 / (4.0 * rep.kappa);
  rep.smoothness_bound = 2.0 + s;
  rep.min_quadratic_ratio = std::numeric_limits<double>::infinity();

  const double radius = opts.delta / (rep.kappa * std::sqrt(static_cast<double>(s)));
  const double logm = std::log(static_cast<double>(m));
  const double mu = truth.mu ? *truth.mu : incoherence_mu(truth, inst.B);
  const double bound_a = 2.0 * opts.c3 / (std::sqrt(static_cast<double>(s)) * std::pow(logm, 1.5));
  const double bound_b = 2.0 * opts.c4 * mu * logm * logm / std::sqrt(static_cast<double>(m));
  const double beta_lo = 1.0 / rep.kappa - radius;
  const double beta_hi = 1.0 / rep.kappa + radius;
  const Eigen::Index K = inst.dims.K;

  RandomStream point_stream(seed, StreamTag::kRscPoints, 0);
  RandomStream dir_stream(seed, StreamTag::kRscDirections, 0);

  for (int p = 0; p < opts.n_points; ++p) {
    std::optional<DemixState> z;
    for (int attempt = 0; attempt < opts.max_attempts && !z; ++attempt) {
      DemixState cand = perturb(truth, point_stream, radius);
      if (incoherent(cand, inst, bound_a, bound_b)) z = std::move(cand);
    }
    if (!z) {
      ++rep.points_failed;
      continue;
    }
    ++rep.points_tested;
    const CMatrix H = assemble_clean_hessian(*z, inst);
    rep.smoothness_max = std::max(rep.smoothness_max, hermitian_norm(H));

    for (int d = 0; d < opts.n_dirs; ++d) {
      std::optional<DemixState> w;
      for (int attempt = 0; attempt < opts.max_attempts && !w; ++attempt) {
        DemixState cand = perturb(truth, dir_stream, radius);
        cand = apply_alignment(cand, align_state(cand, z->sources));
        if (within_ball(cand, truth, radius)) w = std::move(cand);
      }
      if (!w) continue;
      const CVector u = stack_direction(*z, *w);
      const double un = u.squaredNorm();
      if (un == 0.0) continue;
      CVector du = u;
      for (int i = 0; i < s; ++i) {
        const double b1 = beta_lo + (beta_hi - beta_lo) * dir_stream.uniform();
        const double b2 = beta_lo + (beta_hi - beta_lo) * dir_stream.uniform();
        const Eigen::Index o = 4 * K * i;
        du.segment(o, K) *= b1;
        du.segment(o + K, K) *= b2;
        du.segment(o + 2 * K, K) *= b1;
        du.segment(o + 3 * K, K) *= b2;
      }
      // u^*(D H + H D) u = 2 Re((D u)^* H u) for real diagonal D
      const double q = 2.0 * std::real(du.dot(H * u));
      rep.min_quadratic_ratio = std::min(rep.min_quadratic_ratio, q / un);
      ++rep.samples_tested;
    }
  }

  if (rep.samples_tested == 0) {
    rep.min_quadratic_ratio = kNaN;
    rep.pass = false;
    return rep;
  }
  rep.pass = rep.min_quadratic_ratio >= rep.ratio_bound &&
             rep.smoothness_max <= rep.smoothness_bound;
  return rep;
}

std::vector<double> spectral_deviation(const ProblemInstance& inst) {
  const auto& truth = inst.ground_truth();
  std::vector<double> out;
  for (int i = 0; i < inst.dims.s; ++i) {
    const CMatrix D = back_projection(inst, i) -
                      truth.sources[i].h * truth.sources[i].x.adjoint();
    Eigen::JacobiSVD<CMatrix> svd(D);
    out.push_back(svd.singularValues()(0));
  }
  return out;
}

SpectralReport spectral_concentration(const Dimensions& dims, double sigma,
                                      int n_trials, std::uint64_t seed) {
  dims.validate();
  if (n_trials < 2) throw ArgumentError("spectral_concentration needs n_trials >= 2");
  if (!(sigma >= 0.0)) throw ArgumentError("sigma must be >= 0");

  SpectralReport rep;
  rep.dims = dims;
  rep.sigma = sigma;
  rep.n_trials = n_trials;
  rep.source_mean_deviation.assign(dims.s, 0.0);

  ProblemInstance inst;
  inst.dims = dims;
  inst.sigma = sigma;
  inst.seed = seed;
  inst.B = make_dft_rows(dims.m, dims.K);
  inst.truth = sample_ground_truth(dims, 1.0, seed);

  const int K = dims.K;
  std::vector<Eigen::MatrixXd> sum_re(dims.s, Eigen::MatrixXd::Zero(K, K));
  std::vector<Eigen::MatrixXd> sum_im = sum_re, sq_re = sum_re, sq_im = sum_re;

  double total = 0.0;
  for (int t = 0; t < n_trials; ++t) {
    const std::uint64_t trial_seed = derive_seed(seed, StreamTag::kTrials, t);
    inst.A = sample_design(dims, trial_seed);
    auto meas = synthesize_measurements(*inst.truth, inst.A, inst.B, sigma, trial_seed);
    inst.y = std::move(meas.y);
    inst.e = sigma > 0.0 ? std::move(meas.e) : CVector();
    for (int i = 0; i < dims.s; ++i) {
      const CMatrix M = back_projection(inst, i);
      const CMatrix D = M - inst.truth->sources[i].h * inst.truth->sources[i].x.adjoint();
      Eigen::JacobiSVD<CMatrix> svd(D);
      const double dev = svd.singularValues()(0);
      total += dev;
      rep.source_mean_deviation[i] += dev;
      rep.max_deviation = std::max(rep.max_deviation, dev);
      sum_re[i] += M.real();
      sum_im[i] += M.imag();
      sq_re[i] += M.real().cwiseAbs2();
      sq_im[i] += M.imag().cwiseAbs2();
    }
  }
  const double n = n_trials;
  rep.mean_deviation = total / (n * dims.s);
  for (auto& v : rep.source_mean_deviation) v /= n;

  for (int i = 0; i < dims.s; ++i) {
    const CMatrix target = inst.truth->sources[i].h * inst.truth->sources[i].x.adjoint();
    auto zmax = [&](const Eigen::MatrixXd& sum, const Eigen::MatrixXd& sq,
                    const Eigen::MatrixXd& tgt) {
      double worst = 0.0;
      for (int r = 0; r < K; ++r)
        for (int c = 0; c < K; ++c) {
          const double mean = sum(r, c) / n;
          const double var = std::max((sq(r, c) - n * mean * mean) / (n - 1.0), 0.0);
          const double se = std::sqrt(var / n);
          const double diff = std::abs(mean - tgt(r, c));
          const double z = se > 0.0 ? diff / se : (diff > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
          worst = std::max(worst, z);
        }
      return worst;
    };
    rep.max_abs_zscore = std::max({rep.max_abs_zscore, zmax(sum_re[i], sq_re[i], target.real()),
                                   zmax(sum_im[i], sq_im[i], target.imag())});
  }
  return rep;
}

std::vector<int> sample_loo_indices(int m, int n, std::uint64_t seed) {
  if (n < 1 || n > m) throw ArgumentError("need 1 <= n <= m leave-one-out indices");
  std::vector<int> pool(static_cast<std::size_t>(m));
  std::iota(pool.begin(), pool.end(), 0);
  RandomStream stream(seed, StreamTag::kLooIndices, 0);
  for (int k = 0; k < n; ++k) {
    const int span = m - k;
    const int pick = k + std::min(span - 1, static_cast<int>(stream.uniform() * span));
    std::swap(pool[k], pool[pick]);
  }
  std::vector<int> out(pool.begin(), pool.begin() + n);
  std::sort(out.begin(), out.end());
  return out;
}

LooReport leave_one_out_trajectories(const ProblemInstance& inst,
                                     const SolverConfig& cfg,
                                     const std::vector<int>& l_set) {
  cfg.validate();
  inst.check_shapes();
  if (l_set.empty()) throw ArgumentError("leave-one-out needs a nonempty index set");
  for (int l : l_set)
    if (l < 0 || l >= inst.dims.m)
      throw DimensionError("leave-one-out index " + std::to_string(l) + " out of range");

  LooReport rep;
  rep.l_set = l_set;
  rep.degenerate.assign(l_set.size(), false);

  DemixState main = spectral_init(inst);
  std::vector<DemixState> branches;
  for (std::size_t k = 0; k < l_set.size(); ++k) {
    branches.push_back(spectral_init_excluding(inst, l_set[k]));
    if (has_zero_factor(branches.back())) rep.degenerate[k] = true;
  }

  const bool with_truth = inst.has_truth();
  const double initial_loss = loss(main, inst);

  auto record = [&](int t) {
    const auto weights = with_truth ? inst.truth->d : state_weights(main);
    double worst = kNaN;
    for (std::size_t k = 0; k < branches.size(); ++k) {
      if (rep.degenerate[k]) continue;
      const double d = aligned_distance(branches[k], main.sources, weights);
      worst = std::isnan(worst) ? d : std::max(worst, d);
    }
    rep.iters.push_back(t);
    rep.max_dist.push_back(worst);
    rep.main_dist.push_back(with_truth ? dist(main, *inst.truth) : kNaN);
  };

  record(0);
  rep.initial_dist = rep.main_dist.front();

  for (int t = 1; t <= cfg.max_iters; ++t) {
    main = wf_step(main, inst, cfg.eta);
    const double current = loss(main, inst);
    if (!std::isfinite(current) ||
        (initial_loss > 0.0 && current > kDivergenceFactor * initial_loss))
      throw DivergenceError(t, {});
    for (std::size_t k = 0; k < branches.size(); ++k) {
      if (rep.degenerate[k]) continue;
      try {
        branches[k] = wf_step_excluding(branches[k], inst, cfg.eta, l_set[k]);
        if (has_zero_factor(branches[k])) rep.degenerate[k] = true;
      } catch (const DegenerateIterateError&) {
        rep.degenerate[k] = true;
      }
    }
    if (t % cfg.record_every == 0 || t == cfg.max_iters) {
      record(t);
      if (with_truth && cfg.stop_tol > 0.0 &&
          relative_error(main, *inst.truth) <= cfg.stop_tol)
        break;
    }
  }
  return rep;
}

std::vector<AlignmentRatioPoint> alignment_ratio_series(const Trajectory& traj) {
  std::vector<AlignmentRatioPoint> out;
  for (std::size_t k = 1; k < traj.size(); ++k) {
    const auto& prev = traj[k - 1];
    const auto& cur = traj[k];
    if (cur.iter != prev.iter + 1) continue;
    if (cur.alignment_ratios.empty()) continue;
    AlignmentRatioPoint pt;
    pt.iter = cur.iter;
    pt.max_ratio = cur.max_alignment_ratio();
    pt.quotient = 0.0;
    for (std::size_t i = 0; i < cur.alignment_ratios.size(); ++i) {
      const double d = i < prev.source_dists.size() ? prev.source_dists[i] : kNaN;
      if (!(d > 0.0)) {
        if (cur.alignment_ratios[i] > 0.0 || std::isnan(d)) pt.quotient = kNaN;
        continue;
      }
      pt.quotient = std::max(pt.quotient, cur.alignment_ratios[i] / d);
    }
    out.push_back(pt);
  }
  return out;
}

nlohmann::json to_json(const RscReport& r, const RscOptions& opts,
                       std::uint64_t seed) {
  return {
      {"check", "rsc"},
      {"params",
       {{"n_points", opts.n_points},
        {"n_dirs", opts.n_dirs},
        {"delta", opts.delta},
        {"c3", opts.c3},
        {"c4", opts.c4},
        {"max_attempts", opts.max_attempts}}},
      {"seed", seed},
      {"metrics",
       {{"samples_tested", r.samples_tested},
        {"points_tested", r.points_tested},
        {"points_failed", r.points_failed},
        {"min_quadratic_ratio", number(r.min_quadratic_ratio)},
        {"smoothness_max", r.smoothness_max},
        {"kappa", r.kappa},
        {"s", r.s},
        {"ratio_bound", r.ratio_bound},
        {"smoothness_bound", r.smoothness_bound}}},
      {"pass", r.pass},
      {"notes", notes()},
  };
}

nlohmann::json to_json(const SpectralReport& r, std::uint64_t seed) {
  return {
      {"check", "spectral"},
      {"params", {{"dims", dims_json(r.dims)}, {"sigma", r.sigma}, {"n_trials", r.n_trials}}},
      {"seed", seed},
      {"metrics",
       {{"mean_deviation", r.mean_deviation},
        {"max_deviation", r.max_deviation},
        {"source_mean_deviation", r.source_mean_deviation},
        {"max_abs_zscore", r.max_abs_zscore},
        {"zscore_bound", r.zscore_bound}}},
      {"pass", r.max_abs_zscore <= r.zscore_bound},
      {"notes", notes()},
  };
}

nlohmann::json to_json(const LooReport& r, const SolverConfig& cfg,
                       std::uint64_t seed, double threshold) {
  bool pass = std::isfinite(r.initial_dist);
  double worst = 0.0;
  for (double d : r.max_dist) {
    if (std::isnan(d)) continue;
    worst = std::max(worst, d);
    if (!(d <= threshold * r.initial_dist)) pass = false;
  }
  std::vector<bool> degenerate(r.degenerate.begin(), r.degenerate.end());
  nlohmann::json j = {
      {"check", "loo"},
      {"params",
       {{"eta", cfg.eta},
        {"max_iters", cfg.max_iters},
        {"record_every", cfg.record_every},
        {"l_set", r.l_set},
        {"threshold", threshold}}},
      {"seed", seed},
      {"metrics",
       {{"iters", r.iters},
        {"max_dist", numbers(r.max_dist)},
        {"main_dist", numbers(r.main_dist)},
        {"degenerate", degenerate},
        {"initial_dist", number(r.initial_dist)},
        {"worst_max_dist", worst}}},
      {"pass", pass},
      {"notes", notes()},
  };
  return j;
}

}  // namespace demix
