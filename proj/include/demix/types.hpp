#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace demix {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

// Error hierarchy. Everything the library throws derives from demix::Error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent or invalid sizes (m < K, mismatched vectors, bad indices).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid scalar argument (kappa < 1, eta <= 0, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// An operation needs the ground truth but the instance carries none.
class MissingGroundTruthError : public Error {
 public:
  using Error::Error;
};

// A source with ||h_i|| == 0 or ||x_i|| == 0 cannot be stepped.
class DegenerateIterateError : public Error {
 public:
  using Error::Error;
};

// Power iteration and its dense fallback both failed.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// Noiseless input where a finite SNR is required.
class InfiniteSnrError : public Error {
 public:
  using Error::Error;
};

struct Dimensions {
  int s = 1;  // number of sources
  int m = 1;  // number of measurements
  int K = 1;  // subspace dimension

  // Throws DimensionError unless s >= 1, K >= 1 and m >= K.
  void validate() const;

  friend bool operator==(const Dimensions&, const Dimensions&) = default;
};

// One rank-one component (h_i, x_i).
struct SourcePair {
  CVector h;
  CVector x;
};

// The iterate z = {(h_i, x_i)}.
struct DemixState {
  std::vector<SourcePair> sources;

  int num_sources() const { return static_cast<int>(sources.size()); }
};

}  // namespace demix
