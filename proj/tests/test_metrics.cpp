#include <cmath>

#include <gtest/gtest.h>

#include "demix/metrics.hpp"
#include "oracles.hpp"

namespace demix {
namespace {

using testing::alignment_g;
using testing::random_cvector;

struct Pair4 {
  CVector h, x, hr, xr;
};

Pair4 random_pair(std::mt19937_64& gen) {
  std::uniform_int_distribution<int> kd(1, 6);
  std::uniform_real_distribution<double> ld(std::log(0.1), std::log(10.0));
  const int K = kd(gen);
  Pair4 p{random_cvector(gen, K, std::exp(ld(gen))), random_cvector(gen, K, std::exp(ld(gen))),
          random_cvector(gen, K, std::exp(ld(gen))), random_cvector(gen, K, std::exp(ld(gen)))};
  // Half of the pairs are noisy rescalings of the reference, the regime the
  // solver actually meets.
  if (gen() % 2 == 0) {
    const cplx c = std::polar(std::exp(ld(gen) / 2), 6.283185307179586 * (gen() % 1000) / 1000.0);
    p.h = c * p.hr + 0.1 * random_cvector(gen, K);
    p.x = p.xr / std::conj(c) + 0.1 * random_cvector(gen, K);
  }
  return p;
}

TEST(Alignment, MatchesGridOracle) {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 40; ++trial) {
    const auto p = random_pair(gen);
    const cplx a = align_source(p.h, p.x, p.hr, p.xr);
    const cplx o = testing::alignment_grid_oracle(p.h, p.x, p.hr, p.xr);
    const double ga = alignment_objective(a, p.h, p.x, p.hr, p.xr);
    const double go = alignment_g(o, p.h, p.x, p.hr, p.xr);
    EXPECT_NEAR(ga, go, 1e-9) << "trial " << trial;
    EXPECT_LE(ga, go + 1e-9) << "trial " << trial;
  }
}

TEST(Alignment, NotBeatenByPerturbations) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> ud(-0.1, 0.1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_pair(gen);
    const cplx a = align_source(p.h, p.x, p.hr, p.xr);
    const double ga = alignment_g(a, p.h, p.x, p.hr, p.xr);
    for (int k = 0; k < 1000; ++k) {
      const cplx b = a * cplx{1.0 + ud(gen), ud(gen)};
      ASSERT_GE(alignment_g(b, p.h, p.x, p.hr, p.xr), ga - 1e-12) << "trial " << trial;
    }
  }
}

TEST(Alignment, ObjectiveMatchesDefinition) {
  std::mt19937_64 gen(3);
  const auto p = random_pair(gen);
  const cplx a{0.4, -1.3};
  EXPECT_NEAR(alignment_objective(a, p.h, p.x, p.hr, p.xr), alignment_g(a, p.h, p.x, p.hr, p.xr),
              1e-12);
}

TEST(Alignment, RecoversExactScaling) {
  std::mt19937_64 gen(4);
  const CVector h = random_cvector(gen, 5), x = random_cvector(gen, 5);
  const cplx c{1.7, -0.6};
  // (c h, x / conj(c)) is aligned back by alpha = conj(c).
  const cplx a = align_source(c * h, x / std::conj(c), h, x);
  EXPECT_LT(std::abs(a - std::conj(c)), 1e-9);
  EXPECT_LT(alignment_objective(a, c * h, x / std::conj(c), h, x), 1e-18);
}

TEST(Alignment, UnitModulusClosedForm) {
  std::mt19937_64 gen(5);
  const auto p = random_pair(gen);
  const cplx a = align_source_unit(p.h, p.x, p.hr, p.xr);
  EXPECT_NEAR(std::abs(a), 1.0, 1e-15);
  const double ga = alignment_g(a, p.h, p.x, p.hr, p.xr);
  for (int k = 0; k < 720; ++k)
    EXPECT_GE(alignment_g(std::polar(1.0, k * 3.141592653589793 / 360), p.h, p.x, p.hr, p.xr),
              ga - 1e-12);
}

TEST(Alignment, ZeroVectorRejected) {
  const CVector z = CVector::Zero(3), o = CVector::Ones(3);
  EXPECT_THROW(align_source(z, o, o, o), ArgumentError);
  EXPECT_THROW(align_source(o, z, o, o), ArgumentError);
}

TEST(Distance, ZeroAtTruthAndScalingInvariant) {
  const auto inst = generate_instance({3, 40, 4}, 2.0, 0.0, 1);
  const auto& truth = *inst.truth;
  EXPECT_NEAR(dist(truth.as_state(), truth), 0.0, 1e-12);
  auto z = truth.as_state();
  std::mt19937_64 gen(6);
  for (auto& p : z.sources) p.h += 0.05 * random_cvector(gen, 4);
  const double d = dist(z, truth);
  const double r = relative_error(z, truth);
  auto w = z;
  const cplx c{-0.5, 2.0};
  for (auto& p : w.sources) {
    p.h *= c;
    p.x /= std::conj(c);
  }
  EXPECT_NEAR(dist(w, truth), d, 1e-9);
  EXPECT_NEAR(relative_error(w, truth), r, 1e-12);
}

TEST(Distance, PerSourceTermsSumToSquare) {
  const auto inst = generate_instance({3, 40, 4}, 1.0, 0.0, 2);
  std::mt19937_64 gen(7);
  auto z = testing::random_state(gen, 3, 4);
  const auto terms = source_distances_sq(z, *inst.truth);
  double sum = 0;
  for (double t : terms) sum += t;
  EXPECT_NEAR(std::sqrt(sum), dist(z, *inst.truth), 1e-12);
}

TEST(RelativeError, DefinitionOracle) {
  const auto inst = generate_instance({2, 40, 3}, 1.0, 0.0, 3);
  const auto& truth = *inst.truth;
  EXPECT_EQ(relative_error(truth.as_state(), truth), 0.0);
  DemixState zero{{{CVector::Zero(3), CVector::Zero(3)}, {CVector::Zero(3), CVector::Zero(3)}}};
  EXPECT_NEAR(relative_error(zero, truth), 1.0, 1e-15);
  std::mt19937_64 gen(8);
  const auto z = testing::random_state(gen, 2, 3);
  double num = 0, den = 0;
  for (int i = 0; i < 2; ++i) {
    const CMatrix X = z.sources[i].h * z.sources[i].x.adjoint();
    const CMatrix T = truth.sources[i].h * truth.sources[i].x.adjoint();
    num += (X - T).norm();
    den += T.norm();
  }
  EXPECT_NEAR(relative_error(z, truth), num / den, 1e-14);
}

TEST(Incoherence, AtTruthEqualsMuOverRootM) {
  const auto inst = generate_instance({2, 64, 4}, 1.0, 0.0, 4);
  const auto m = incoherence_measures(inst.truth->as_state(), *inst.truth, inst,
                                      {cplx{1, 0}, cplx{1, 0}});
  EXPECT_EQ(m.inc_a, 0.0);
  EXPECT_NEAR(m.inc_b, *inst.truth->mu / 8.0, 1e-14);
}

}  // namespace
}  // namespace demix
