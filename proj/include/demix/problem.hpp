#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "demix/types.hpp"

namespace demix {

// Version tag of the DFT sign/scale/index convention written to every
// instance file.
inline constexpr const char* kDftConvention = "dft-neg-v1";

// The s source pairs (h_i, x_i) together with derived scale quantities.
struct GroundTruth {
  std::vector<SourcePair> sources;
  std::vector<double> d;  // d_i = ||h_i||^2 + ||x_i||^2
  double d0 = 0.0;        // sqrt(sum_i ||h_i||^2 ||x_i||^2)
  double kappa = 1.0;     // max_i ||x_i|| / min_i ||x_i||
  std::optional<double> mu;  // set once attached to a design B

  int num_sources() const { return static_cast<int>(sources.size()); }
  DemixState as_state() const { return DemixState{sources}; }

  // Builds d, d0 and kappa from the given pairs. mu is left unset.
  static GroundTruth from_pairs(std::vector<SourcePair> pairs);
};

// Flat storage for the s x m design vectors a_ij in C^K, row-major in
// (i, j, k) so that each a_ij is a contiguous span.
class DesignTensor {
 public:
  DesignTensor() = default;
  DesignTensor(int s, int m, int K)
      : s_(s), m_(m), K_(K),
        data_(static_cast<std::size_t>(s) * m * K, cplx{0.0, 0.0}) {}

  int s() const { return s_; }
  int m() const { return m_; }
  int K() const { return K_; }

  std::span<const cplx> a(int i, int j) const {
    return {data_.data() + offset(i, j), static_cast<std::size_t>(K_)};
  }
  std::span<cplx> a(int i, int j) {
    return {data_.data() + offset(i, j), static_cast<std::size_t>(K_)};
  }
  const std::vector<cplx>& raw() const { return data_; }
  std::vector<cplx>& raw() { return data_; }

  friend bool operator==(const DesignTensor&, const DesignTensor&) = default;

 private:
  std::size_t offset(int i, int j) const {
    return (static_cast<std::size_t>(i) * m_ + j) * K_;
  }
  int s_ = 0, m_ = 0, K_ = 0;
  std::vector<cplx> data_;
};

// The m rows b_j in C^K, stored contiguously.
class DftRows {
 public:
  DftRows() = default;
  DftRows(int m, int K)
      : m_(m), K_(K), data_(static_cast<std::size_t>(m) * K, cplx{0.0, 0.0}) {}

  int m() const { return m_; }
  int K() const { return K_; }
  std::span<const cplx> b(int j) const {
    return {data_.data() + static_cast<std::size_t>(j) * K_,
            static_cast<std::size_t>(K_)};
  }
  std::span<cplx> b(int j) {
    return {data_.data() + static_cast<std::size_t>(j) * K_,
            static_cast<std::size_t>(K_)};
  }
  const std::vector<cplx>& raw() const { return data_; }
  std::vector<cplx>& raw() { return data_; }

  friend bool operator==(const DftRows&, const DftRows&) = default;

 private:
  int m_ = 0, K_ = 0;
  std::vector<cplx> data_;
};

struct ProblemInstance {
  Dimensions dims;
  DesignTensor A;
  DftRows B;
  CVector y;
  CVector e;  // empty in noiseless mode
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::optional<GroundTruth> truth;

  bool has_truth() const { return truth.has_value(); }
  const GroundTruth& ground_truth() const;  // throws MissingGroundTruthError

  // Throws DimensionError if any array disagrees with dims.
  void check_shapes() const;
};

// Small helpers over spans: a^* v and the like.
cplx inner(std::span<const cplx> a, const CVector& v);  // a^* v
cplx inner(const CVector& u, const CVector& v);          // u^* v

// b_j[k] = exp(-2 pi i j k / m) / sqrt(m), zero-based j, k.
DftRows make_dft_rows(int m, int K);

// Every entry of every a_ij is CN(0, 1); a_ij comes from its own sub-stream.
DesignTensor sample_design(const Dimensions& dims, std::uint64_t seed);

// Source norms: 1 for the first source, geometric interpolation up to kappa
// for the remaining ones; ||h_i|| = ||x_i||.
std::vector<double> source_norm_pattern(int s, double kappa);

GroundTruth sample_ground_truth(const Dimensions& dims, double kappa,
                                std::uint64_t seed);

// mu = sqrt(m) max_{i,j} |b_j^* h_i| / ||h_i||.
double incoherence_mu(const GroundTruth& truth, const DftRows& B);

struct Measurements {
  CVector y;
  CVector e;
};

// y_j = sum_i b_j^* h_i x_i^* a_ij + e_j with e_j ~ CN(0, sigma^2 d0^2 / m).
// sigma == 0 gives e == 0 exactly.
Measurements synthesize_measurements(const GroundTruth& truth,
                                     const DesignTensor& A, const DftRows& B,
                                     double sigma, std::uint64_t seed);

// The noiseless bilinear forward map for an arbitrary set of pairs.
CVector forward(const std::vector<SourcePair>& pairs, const DesignTensor& A,
                const DftRows& B);

// 20 log10(||y|| / ||e||). Throws InfiniteSnrError if ||e|| == 0.
double snr_db(const CVector& y, const CVector& e);

// Full synthetic instance from one master seed; truth is attached and mu set.
ProblemInstance generate_instance(const Dimensions& dims, double kappa,
                                  double sigma, std::uint64_t seed);

}  // namespace demix
