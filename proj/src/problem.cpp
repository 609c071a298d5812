#include "demix/problem.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "demix/rng.hpp"

namespace demix {

void Dimensions::validate() const {
  if (s < 1 || K < 1 || m < 1) {
    std::ostringstream msg;
    msg << "dimensions must be positive (s=" << s << ", m=" << m << ", K=" << K
        << ")";
    throw DimensionError(msg.str());
  }
  if (m < K) {
    std::ostringstream msg;
    msg << "need m >= K for a partial DFT design (m=" << m << ", K=" << K
        << ")";
    throw DimensionError(msg.str());
  }
}

GroundTruth GroundTruth::from_pairs(std::vector<SourcePair> pairs) {
  if (pairs.empty()) throw DimensionError("ground truth needs at least one source");
  GroundTruth truth;
  truth.sources = std::move(pairs);
  double d0_sq = 0.0;
  double x_max = 0.0;
  double x_min = std::numeric_limits<double>::infinity();
  for (const auto& p : truth.sources) {
    const double hn = p.h.squaredNorm();
    const double xn = p.x.squaredNorm();
    truth.d.push_back(hn + xn);
    d0_sq += hn * xn;
    x_max = std::max(x_max, std::sqrt(xn));
    x_min = std::min(x_min, std::sqrt(xn));
  }
  truth.d0 = std::sqrt(d0_sq);
  truth.kappa = x_min > 0.0 ? x_max / x_min
                            : std::numeric_limits<double>::infinity();
  return truth;
}

const GroundTruth& ProblemInstance::ground_truth() const {
  if (!truth) throw MissingGroundTruthError("instance has no ground truth attached");
  return *truth;
}

void ProblemInstance::check_shapes() const {
  dims.validate();
  if (A.s() != dims.s || A.m() != dims.m || A.K() != dims.K)
    throw DimensionError("design tensor shape does not match dimensions");
  if (B.m() != dims.m || B.K() != dims.K)
    throw DimensionError("DFT rows shape does not match dimensions");
  if (y.size() != dims.m) throw DimensionError("measurement vector has wrong length");
  if (e.size() != 0 && e.size() != dims.m)
    throw DimensionError("noise vector has wrong length");
  if (truth) {
    if (truth->num_sources() != dims.s)
      throw DimensionError("ground truth has wrong number of sources");
    for (const auto& p : truth->sources)
      if (p.h.size() != dims.K || p.x.size() != dims.K)
        throw DimensionError("ground truth vectors have wrong length");
  }
}

cplx inner(std::span<const cplx> a, const CVector& v) {
  cplx acc{0.0, 0.0};
  for (std::size_t k = 0; k < a.size(); ++k) acc += std::conj(a[k]) * v[k];
  return acc;
}

cplx inner(const CVector& u, const CVector& v) { return u.dot(v); }

DftRows make_dft_rows(int m, int K) {
  if (m < 1 || K < 1 || m < K) {
    std::ostringstream msg;
    msg << "make_dft_rows needs m >= K >= 1 (m=" << m << ", K=" << K << ")";
    throw DimensionError(msg.str());
  }
  DftRows B(m, K);
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  for (int j = 0; j < m; ++j) {
    auto row = B.b(j);
    for (int k = 0; k < K; ++k) {
      // Reduce j*k mod m first so the angle stays accurate for large m.
      const auto jk = (static_cast<long long>(j) * k) % m;
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(jk) / m;
      row[k] = scale * cplx{std::cos(angle), std::sin(angle)};
    }
  }
  return B;
}

DesignTensor sample_design(const Dimensions& dims, std::uint64_t seed) {
  dims.validate();
  DesignTensor A(dims.s, dims.m, dims.K);
  for (int i = 0; i < dims.s; ++i) {
    for (int j = 0; j < dims.m; ++j) {
      RandomStream stream(seed, StreamTag::kDesign,
                          static_cast<std::uint64_t>(i) * dims.m + j);
      for (auto& v : A.a(i, j)) v = stream.complex_normal();
    }
  }
  return A;
}

std::vector<double> source_norm_pattern(int s, double kappa) {
  if (!(kappa >= 1.0)) throw ArgumentError("kappa must be >= 1");
  std::vector<double> norms(static_cast<std::size_t>(s), 1.0);
  if (s == 1) return norms;
  // Geometric interpolation: norms[i] = kappa^(i / (s-1)).
  for (int i = 1; i < s; ++i)
    norms[i] = std::pow(kappa, static_cast<double>(i) / (s - 1));
  norms.back() = kappa;
  return norms;
}

namespace {

CVector random_unit_vector(RandomStream& stream, int K) {
  CVector v(K);
  for (int k = 0; k < K; ++k) v[k] = stream.complex_normal();
  return v / v.norm();
}

}  // namespace

GroundTruth sample_ground_truth(const Dimensions& dims, double kappa,
                                std::uint64_t seed) {
  dims.validate();
  const auto norms = source_norm_pattern(dims.s, kappa);
  std::vector<SourcePair> pairs;
  pairs.reserve(dims.s);
  for (int i = 0; i < dims.s; ++i) {
    RandomStream hs(seed, StreamTag::kTruth, 2ull * i);
    RandomStream xs(seed, StreamTag::kTruth, 2ull * i + 1);
    SourcePair p{random_unit_vector(hs, dims.K), random_unit_vector(xs, dims.K)};
    p.h *= norms[i];
    p.x *= norms[i];
    pairs.push_back(std::move(p));
  }
  return GroundTruth::from_pairs(std::move(pairs));
}

double incoherence_mu(const GroundTruth& truth, const DftRows& B) {
  double worst = 0.0;
  for (const auto& p : truth.sources) {
    const double hn = p.h.norm();
    if (p.h.size() != B.K()) throw DimensionError("truth and B disagree on K");
    for (int j = 0; j < B.m(); ++j)
      worst = std::max(worst, std::abs(inner(B.b(j), p.h)) / hn);
  }
  return std::sqrt(static_cast<double>(B.m())) * worst;
}

CVector forward(const std::vector<SourcePair>& pairs, const DesignTensor& A,
                const DftRows& B) {
  const int s = static_cast<int>(pairs.size());
  if (s != A.s() || A.m() != B.m() || A.K() != B.K())
    throw DimensionError("forward: shape mismatch");
  CVector out = CVector::Zero(B.m());
  for (int j = 0; j < B.m(); ++j) {
    cplx acc{0.0, 0.0};
    for (int i = 0; i < s; ++i) {
      const auto& p = pairs[i];
      if (p.h.size() != B.K() || p.x.size() != B.K())
        throw DimensionError("forward: source vector length mismatch");
      // b_j^* h_i x_i^* a_ij = (b_j^* h_i) * conj(a_ij^* x_i)
      acc += inner(B.b(j), p.h) * std::conj(inner(A.a(i, j), p.x));
    }
    out[j] = acc;
  }
  return out;
}

Measurements synthesize_measurements(const GroundTruth& truth,
                                     const DesignTensor& A, const DftRows& B,
                                     double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ArgumentError("sigma must be >= 0");
  Measurements out;
  out.y = forward(truth.sources, A, B);
  const int m = B.m();
  if (sigma == 0.0) {
    out.e = CVector::Zero(m);
    return out;
  }
  // complex_normal() has variance 1/2 per component, so scaling by
  // sigma d0 / sqrt(m) gives N(0, sigma^2 d0^2 / (2m)) per component.
  const double scale = sigma * truth.d0 / std::sqrt(static_cast<double>(m));
  RandomStream stream(seed, StreamTag::kNoise, 0);
  out.e.resize(m);
  for (int j = 0; j < m; ++j) out.e[j] = scale * stream.complex_normal();
  out.y += out.e;
  return out;
}

double snr_db(const CVector& y, const CVector& e) {
  const double en = e.norm();
  if (en == 0.0) throw InfiniteSnrError("infinite SNR: noise vector is zero");
  return 20.0 * std::log10(y.norm() / en);
}

ProblemInstance generate_instance(const Dimensions& dims, double kappa,
                                  double sigma, std::uint64_t seed) {
  dims.validate();
  if (!(sigma >= 0.0)) throw ArgumentError("sigma must be >= 0");
  ProblemInstance inst;
  inst.dims = dims;
  inst.sigma = sigma;
  inst.seed = seed;
  inst.B = make_dft_rows(dims.m, dims.K);
  inst.A = sample_design(dims, seed);
  GroundTruth truth = sample_ground_truth(dims, kappa, seed);
  truth.mu = incoherence_mu(truth, inst.B);
  auto meas = synthesize_measurements(truth, inst.A, inst.B, sigma, seed);
  inst.y = std::move(meas.y);
  if (sigma > 0.0) inst.e = std::move(meas.e);
  inst.truth = std::move(truth);
  return inst;
}

}  // namespace demix
