#include <cmath>

#include <gtest/gtest.h>

#include "demix/objective.hpp"
#include "oracles.hpp"

namespace demix {
namespace {

using testing::random_cvector;
using testing::random_state;

double max_abs(const WirtingerGradient& g) {
  double out = 0.0;
  for (const auto& p : g) out = std::max({out, p.h.cwiseAbs().maxCoeff(), p.x.cwiseAbs().maxCoeff()});
  return out;
}

double gradient_distance(const WirtingerGradient& a, const WirtingerGradient& b,
                         double scale_a = 1.0) {
  double d = 0.0, n = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (scale_a * a[i].h - b[i].h).squaredNorm() + (scale_a * a[i].x - b[i].x).squaredNorm();
    n += b[i].h.squaredNorm() + b[i].x.squaredNorm();
  }
  return std::sqrt(d / n);
}

TEST(Residual, ZeroAtTruthNoiseless) {
  const auto inst = generate_instance({3, 30, 4}, 2.0, 0.0, 1);
  const auto z = inst.truth->as_state();
  const CVector r = residuals(z, inst);
  EXPECT_EQ(r.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(loss(z, inst), 0.0);
  EXPECT_EQ(max_abs(wirtinger_gradient(z, inst)), 0.0);
}

TEST(Residual, EqualsMinusNoiseAtTruth) {
  const auto inst = generate_instance({2, 40, 4}, 1.0, 0.3, 2);
  const CVector r = residuals(inst.truth->as_state(), inst);
  EXPECT_LT((r + inst.e).norm(), 1e-14 * inst.y.norm());
  EXPECT_NEAR(clean_loss(inst.truth->as_state(), inst), 0.0, 0.0);
}

TEST(Loss, MatchesBruteForce) {
  std::mt19937_64 gen(3);
  const auto inst = generate_instance({3, 20, 4}, 1.0, 0.1, 3);
  const auto z = random_state(gen, 3, 4);
  EXPECT_NEAR(loss(z, inst), testing::brute_loss(z, inst), 1e-12 * loss(z, inst));
}

TEST(Loss, InvariantUnderScalingAmbiguity) {
  std::mt19937_64 gen(4);
  const auto inst = generate_instance({2, 20, 3}, 1.0, 0.1, 4);
  auto z = random_state(gen, 2, 3);
  const double before = loss(z, inst);
  const cplx c{0.3, -1.7};
  for (auto& p : z.sources) {
    p.h *= c;
    p.x /= std::conj(c);
  }
  EXPECT_NEAR(loss(z, inst), before, 1e-12 * before);
}

TEST(Loss, StateShapeChecked) {
  const auto inst = generate_instance({2, 20, 3}, 1.0, 0.0, 4);
  std::mt19937_64 gen(5);
  EXPECT_THROW(loss(random_state(gen, 1, 3), inst), DimensionError);
  EXPECT_THROW(loss(random_state(gen, 2, 4), inst), DimensionError);
}

// Scalar case: f(h, x) = |conj(b) h conj(x) a - y|^2 with K = m = s = 1;
// the ratio between the finite-difference real gradient and the returned
// Wirtinger gradient fixes the convention factor.
double calibrate_factor() {
  ProblemInstance inst;
  inst.dims = {1, 1, 1};
  inst.B = make_dft_rows(1, 1);
  inst.A = DesignTensor(1, 1, 1);
  inst.A.a(0, 0)[0] = {0.8, -0.3};
  inst.y = CVector::Constant(1, cplx{0.2, 0.5});
  DemixState z{{{CVector::Constant(1, cplx{1.1, 0.4}), CVector::Constant(1, cplx{-0.6, 0.9})}}};
  const auto fd = testing::finite_difference_gradient(
      [&](const DemixState& w) { return loss(w, inst); }, z, 1e-6);
  const auto g = wirtinger_gradient(z, inst);
  return fd[0].h[0].real() / g[0].h[0].real();
}

TEST(Gradient, ConventionFactorIsTwo) { EXPECT_NEAR(calibrate_factor(), 2.0, 1e-8); }

TEST(Gradient, MatchesFiniteDifferences) {
  const double factor = calibrate_factor();
  std::mt19937_64 gen(6);
  for (int trial = 0; trial < 20; ++trial) {
    const int K = 1 + trial % 4;
    const int s = 1 + trial % 3;
    const int m = K + (trial * 7) % (13 - K);
    const auto inst = generate_instance({s, m, K}, 1.0, 0.2, 100 + trial);
    const auto z = random_state(gen, s, K);
    const auto fd = testing::finite_difference_gradient(
        [&](const DemixState& w) { return testing::brute_loss(w, inst); }, z, 1e-6);
    EXPECT_LT(gradient_distance(wirtinger_gradient(z, inst), fd, factor), 1e-6)
        << "trial " << trial << " s=" << s << " m=" << m << " K=" << K;
  }
}

TEST(Gradient, LeaveOneOutPlusTermIsFull) {
  std::mt19937_64 gen(7);
  const auto inst = generate_instance({2, 25, 4}, 1.0, 0.1, 7);
  const auto z = random_state(gen, 2, 4);
  const auto full = wirtinger_gradient(z, inst);
  for (int l : {0, 12, 24}) {
    const auto loo = leave_one_out_gradient(z, inst, l);
    const auto term = gradient_term(z, inst, l);
    for (int i = 0; i < 2; ++i) {
      EXPECT_LT((loo[i].h + term[i].h - full[i].h).norm(), 1e-13 * full[i].h.norm());
      EXPECT_LT((loo[i].x + term[i].x - full[i].x).norm(), 1e-13 * full[i].x.norm());
    }
  }
  EXPECT_THROW(leave_one_out_gradient(z, inst, 25), DimensionError);
}

TEST(Gradient, EvaluationMatchesSeparateCalls) {
  std::mt19937_64 gen(8);
  const auto inst = generate_instance({2, 25, 4}, 1.0, 0.1, 8);
  const auto z = random_state(gen, 2, 4);
  const auto ev = evaluate_gradient(z, inst);
  EXPECT_EQ(ev.loss, loss(z, inst));
  const auto g = wirtinger_gradient(z, inst);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(ev.grad[i].h, g[i].h);
    EXPECT_EQ(ev.grad[i].x, g[i].x);
  }
}

// w = [d; conj d] for a perturbation d of source i only.
CVector lift(const CVector& dh, const CVector& dx) {
  const Eigen::Index K = dh.size();
  CVector w(4 * K);
  w << dh, dx, dh.conjugate(), dx.conjugate();
  return w;
}

TEST(Hessian, MatchesSecondDifference) {
  std::mt19937_64 gen(9);
  for (bool clean : {false, true}) {
    const auto inst = generate_instance({2, 18, 3}, 1.0, 0.2, 9);
    const auto z = random_state(gen, 2, 3);
    auto f = [&](const DemixState& w) { return clean ? clean_loss(w, inst) : loss(w, inst); };
    for (int i = 0; i < 2; ++i) {
      const CMatrix H = assemble_source_hessian(hessian_blocks(z, inst, i, clean));
      EXPECT_LT((H - H.adjoint()).norm(), 1e-12 * H.norm());
      const CVector dh = random_cvector(gen, 3), dx = random_cvector(gen, 3);
      const CVector w = lift(dh, dx);
      const double quad = std::real(w.dot(H * w));
      // f(z + t d) = f + t (2 Re <g, d>) + t^2/2 w^* H w + O(t^3):
      // the second difference over t^2 is w^* H w + O(t^2).
      const double t = 1e-3;
      DemixState zp = z, zm = z;
      zp.sources[i].h += t * dh;
      zp.sources[i].x += t * dx;
      zm.sources[i].h -= t * dh;
      zm.sources[i].x -= t * dx;
      const double second = (f(zp) - 2 * f(z) + f(zm)) / (t * t);
      EXPECT_NEAR(second, quad, 1e-5 * std::abs(quad)) << "clean=" << clean << " i=" << i;
    }
  }
}

TEST(Hessian, CleanResidualBlockVanishesAtTruth) {
  const auto inst = generate_instance({2, 30, 3}, 1.0, 0.2, 10);
  const auto blk = hessian_blocks(inst.truth->as_state(), inst, 1, true);
  EXPECT_EQ(blk.C2.cwiseAbs().maxCoeff(), 0.0);
  const auto noisy = hessian_blocks(inst.truth->as_state(), inst, 1, false);
  EXPECT_GT(noisy.C2.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Hessian, SizeCapEnforced) {
  const auto inst = generate_instance({2, 513, 513}, 1.0, 0.0, 1);
  const auto blk = HessianBlocks{CMatrix::Zero(1025, 1025), CMatrix::Zero(1025, 1025),
                                 CMatrix::Zero(1025, 1025), CMatrix::Zero(1025, 1025),
                                 CMatrix::Zero(1025, 1025)};
  EXPECT_THROW(assemble_source_hessian(blk), DimensionError);
  EXPECT_THROW(assemble_clean_hessian(inst.truth->as_state(), inst), DimensionError);
}

}  // namespace
}  // namespace demix
