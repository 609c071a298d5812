#include <cmath>

#include <gtest/gtest.h>

#include "demix/metrics.hpp"
#include "demix/solver.hpp"
#include "oracles.hpp"

namespace demix {
namespace {

using testing::random_cvector;

TEST(SolverConfig, Validation) {
  SolverConfig c;
  EXPECT_NO_THROW(c.validate());
  c.max_iters = 0;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = {};
  c.eta = 0.0;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = {};
  c.record_every = 0;
  EXPECT_THROW(c.validate(), ArgumentError);
}

TEST(PowerIteration, MatchesDenseSvd) {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 10; ++trial) {
    CMatrix M(6, 6);
    for (int c = 0; c < 6; ++c) M.col(c) = random_cvector(gen, 6);
    const auto st = leading_singular_triple(M);
    Eigen::JacobiSVD<CMatrix> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
    EXPECT_NEAR(st.sigma, svd.singularValues()(0), 1e-10);
    // Up to a common phase.
    const CVector u0 = svd.matrixU().col(0), v0 = svd.matrixV().col(0);
    const cplx ph = u0.dot(st.u) / std::abs(u0.dot(st.u));
    EXPECT_LT((st.u - ph * u0).norm(), 1e-8);
    EXPECT_LT((st.v - ph * v0).norm(), 1e-8);
  }
}

TEST(PowerIteration, FallbackOnSlowConvergence) {
  // Nearly tied leading singular values starve the power iteration.
  CMatrix M = CMatrix::Zero(4, 4);
  M(0, 0) = 1.0;
  M(1, 1) = 1.0 - 1e-9;
  M(2, 2) = 0.5;
  PowerIterationOptions opts;
  opts.max_iters = 50;
  const auto st = leading_singular_triple(M, opts);
  EXPECT_TRUE(st.used_fallback);
  EXPECT_NEAR(st.sigma, 1.0, 1e-14);
  opts.dense_fallback_max_k = 2;
  EXPECT_THROW(leading_singular_triple(M, opts), ConvergenceError);
}

TEST(SpectralPair, RecoversRankOneExactly) {
  std::mt19937_64 gen(2);
  const CVector h = random_cvector(gen, 7), x = random_cvector(gen, 7);
  const CMatrix M = h * x.adjoint();
  const auto p = spectral_pair(M);
  EXPECT_LT((p.h * p.x.adjoint() - M).norm(), 1e-10 * M.norm());
  EXPECT_NEAR(p.h.norm(), std::sqrt(h.norm() * x.norm()), 1e-10);
  // Gauge: the largest-magnitude entry of h is real and positive.
  Eigen::Index arg;
  p.h.cwiseAbs().maxCoeff(&arg);
  EXPECT_EQ(p.h[arg].imag(), 0.0);
  EXPECT_GT(p.h[arg].real(), 0.0);
}

TEST(SpectralPair, GaugeRemovesInputPhase) {
  std::mt19937_64 gen(3);
  CMatrix M(5, 5);
  for (int c = 0; c < 5; ++c) M.col(c) = random_cvector(gen, 5);
  const auto a = spectral_pair(M);
  const cplx ph = std::polar(1.0, 0.9);
  const auto b = spectral_pair(ph * M);
  EXPECT_LT((a.h - b.h).norm(), 1e-9);
  EXPECT_LT((ph * a.x.conjugate() - b.x.conjugate()).norm(), 1e-9);
}

TEST(BackProjection, LeaveOneOutIdentity) {
  const auto inst = generate_instance({2, 30, 4}, 1.0, 0.1, 4);
  for (int i = 0; i < 2; ++i) {
    const CMatrix full = back_projection(inst, i);
    for (int l : {0, 17, 29}) {
      CVector b(4), a(4);
      for (int k = 0; k < 4; ++k) {
        b[k] = inst.B.b(l)[k];
        a[k] = inst.A.a(i, l)[k];
      }
      const CMatrix expect = full - inst.y[l] * b * a.adjoint();
      EXPECT_LT((back_projection(inst, i, l) - expect).norm(), 1e-13 * full.norm());
    }
  }
}

TEST(SpectralInit, CloseToTruthForLargeM) {
  const auto inst = generate_instance({1, 1600, 8}, 1.0, 0.0, 5);
  const auto z = spectral_init(inst);
  EXPECT_LE(relative_error(z, *inst.truth), 0.2);
}

TEST(SpectralInit, ExcludingOutOfRangeRejected) {
  const auto inst = generate_instance({1, 20, 4}, 1.0, 0.0, 5);
  EXPECT_THROW(spectral_init_excluding(inst, 20), DimensionError);
}

TEST(WfStep, TruthIsFixedPoint) {
  const auto inst = generate_instance({3, 60, 5}, 2.0, 0.0, 6);
  const auto z = inst.truth->as_state();
  const auto next = wf_step(z, inst, 0.3);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(next.sources[i].h, z.sources[i].h);
    EXPECT_EQ(next.sources[i].x, z.sources[i].x);
  }
}

TEST(WfStep, ZeroStepIsIdentity) {
  std::mt19937_64 gen(7);
  const auto inst = generate_instance({2, 30, 3}, 1.0, 0.1, 7);
  const auto z = testing::random_state(gen, 2, 3);
  const auto next = wf_step(z, inst, 0.0);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(next.sources[i].h, z.sources[i].h);
    EXPECT_EQ(next.sources[i].x, z.sources[i].x);
  }
}

TEST(WfStep, UsesPreUpdateNorms) {
  std::mt19937_64 gen(8);
  const auto inst = generate_instance({2, 30, 3}, 1.0, 0.1, 8);
  const auto z = testing::random_state(gen, 2, 3);
  const auto g = wirtinger_gradient(z, inst);
  const auto next = wf_step(z, inst, 0.2);
  for (int i = 0; i < 2; ++i) {
    const CVector h = z.sources[i].h - 0.2 / z.sources[i].x.squaredNorm() * g[i].h;
    const CVector x = z.sources[i].x - 0.2 / z.sources[i].h.squaredNorm() * g[i].x;
    EXPECT_LT((next.sources[i].h - h).norm(), 1e-15 * h.norm());
    EXPECT_LT((next.sources[i].x - x).norm(), 1e-15 * x.norm());
  }
}

TEST(WfStep, DecreasesLossNearTruth) {
  const auto inst = generate_instance({1, 40, 2}, 1.0, 0.0, 9);
  auto z = inst.truth->as_state();
  std::mt19937_64 gen(9);
  z.sources[0].h += 0.1 * random_cvector(gen, 2);
  z.sources[0].x += 0.1 * random_cvector(gen, 2);
  EXPECT_LT(loss(wf_step(z, inst, 0.1), inst), loss(z, inst));
}

TEST(WfStep, ZeroSourceIsDegenerate) {
  const auto inst = generate_instance({2, 30, 3}, 1.0, 0.0, 10);
  auto z = inst.truth->as_state();
  z.sources[1].x.setZero();
  EXPECT_THROW(wf_step(z, inst, 0.1), DegenerateIterateError);
}

TEST(WfStep, CommutesWithGlobalPhase) {
  std::mt19937_64 gen(11);
  const auto inst = generate_instance({2, 40, 3}, 1.0, 0.05, 11);
  auto z = testing::random_state(gen, 2, 3);
  const cplx c = std::polar(1.0, 2.1);
  auto w = z;
  for (auto& p : w.sources) {
    p.h *= c;
    p.x *= c;  // (c h, x / conj(c)) with |c| = 1
  }
  for (int t = 0; t < 20; ++t) {
    z = wf_step(z, inst, 0.1);
    w = wf_step(w, inst, 0.1);
    EXPECT_NEAR(loss(w, inst), loss(z, inst), 1e-10);
  }
  for (int i = 0; i < 2; ++i) {
    EXPECT_LT((w.sources[i].h - c * z.sources[i].h).norm(), 1e-10);
    EXPECT_LT((w.sources[i].x - c * z.sources[i].x).norm(), 1e-10);
  }
}

TEST(Run, RecordsAndDeterminism) {
  const auto inst = generate_instance({2, 120, 6}, 1.0, 0.0, 12);
  SolverConfig cfg;
  cfg.eta = 0.2;
  cfg.max_iters = 47;
  cfg.record_every = 10;
  const auto a = run(inst, cfg);
  const auto b = run(inst, cfg);
  std::vector<int> iters;
  for (const auto& r : a.trajectory) iters.push_back(r.iter);
  EXPECT_EQ(iters, (std::vector<int>{0, 10, 20, 30, 40, 47}));
  ASSERT_EQ(a.trajectory.size(), b.trajectory.size());
  for (std::size_t k = 0; k < a.trajectory.size(); ++k) {
    EXPECT_EQ(a.trajectory[k].loss, b.trajectory[k].loss);
    EXPECT_EQ(a.trajectory[k].relative_error, b.trajectory[k].relative_error);
    EXPECT_EQ(a.trajectory[k].dist, b.trajectory[k].dist);
    for (double v : {a.trajectory[k].loss, a.trajectory[k].relative_error,
                     a.trajectory[k].dist, a.trajectory[k].inc_a, a.trajectory[k].inc_b})
      EXPECT_TRUE(std::isfinite(v));
  }
  for (int i = 0; i < 2; ++i) EXPECT_EQ(a.final_state.sources[i].h, b.final_state.sources[i].h);
}

TEST(Run, EarlyStopOnRelativeError) {
  const auto inst = generate_instance({2, 200, 6}, 1.0, 0.0, 13);
  SolverConfig cfg;
  cfg.eta = 0.2;
  cfg.max_iters = 2000;
  cfg.stop_tol = 1e-3;
  cfg.record_every = 5;
  const auto r = run(inst, cfg);
  EXPECT_TRUE(r.stopped_early);
  EXPECT_LE(r.trajectory.back().relative_error, 1e-3);
  EXPECT_EQ(r.trajectory.back().iter % 5, 0);
  EXPECT_GT(r.trajectory[r.trajectory.size() - 2].relative_error, 1e-3);
}

TEST(Run, FixedPointFromTruth) {
  const auto inst = generate_instance({2, 60, 4}, 1.5, 0.0, 14);
  SolverConfig cfg;
  cfg.max_iters = 10;
  const auto r = run_from(inst, cfg, inst.truth->as_state());
  for (const auto& rec : r.trajectory) {
    EXPECT_EQ(rec.loss, 0.0);
    EXPECT_EQ(rec.relative_error, 0.0);
    EXPECT_EQ(rec.max_alignment_ratio(), 0.0);
  }
  for (int i = 0; i < 2; ++i) EXPECT_EQ(r.final_state.sources[i].h, inst.truth->sources[i].h);
}

TEST(Run, DivergenceReported) {
  const auto inst = generate_instance({2, 60, 4}, 1.0, 0.0, 15);
  SolverConfig cfg;
  cfg.eta = 50.0;
  cfg.max_iters = 200;
  try {
    run(inst, cfg);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.iteration(), 1);
    EXPECT_FALSE(e.partial().empty());
  }
}

TEST(Run, WithoutTruthMetricsAreNaN) {
  auto inst = generate_instance({1, 40, 3}, 1.0, 0.0, 16);
  inst.truth.reset();
  SolverConfig cfg;
  cfg.max_iters = 3;
  const auto r = run(inst, cfg);
  EXPECT_TRUE(std::isnan(r.trajectory.back().relative_error));
  EXPECT_TRUE(std::isfinite(r.trajectory.back().loss));
}

TEST(Run, MonotoneTailNoiseless) {
  const auto inst = generate_instance({10, 2500, 50}, 1.0, 0.0, 1);
  SolverConfig cfg;
  cfg.eta = 0.1;
  cfg.max_iters = 120;
  const auto r = run(inst, cfg);
  for (std::size_t k = 11; k < r.trajectory.size(); ++k)
    EXPECT_LE(r.trajectory[k].loss, r.trajectory[k - 1].loss) << "iter " << r.trajectory[k].iter;
}

}  // namespace
}  // namespace demix
