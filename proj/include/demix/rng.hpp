#pragma once

#include <array>
#include <cstdint>

#include "demix/types.hpp"

namespace demix {

// Philox4x32-10 counter-based generator (Salmon et al., Random123).
//
// A stream is fully identified by (seed, tag, substream); draws within a
// stream are addressed by a block counter, so any (i, j) design vector can
// be generated independently of evaluation order.
//
// Counter layout: ctr = {block, substream_lo, substream_hi, tag},
//                 key = {seed_lo, seed_hi}.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter round10(Counter ctr, Key key);
};

// Named sub-stream tags. Bumping the convention version means these change.
enum class StreamTag : std::uint32_t {
  kDesign = 1,
  kTruth = 2,
  kNoise = 3,
  kRscPoints = 4,
  kRscDirections = 5,
  kLooIndices = 6,
  kTrials = 7,
};

inline constexpr const char* kRngConvention = "philox4x32-10/v1";

class RandomStream {
 public:
  RandomStream(std::uint64_t seed, StreamTag tag, std::uint64_t substream = 0);

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform in (0, 1].
  double uniform_open_low() { return 1.0 - uniform(); }
  // Standard normal via Box-Muller (pairs are cached).
  double normal();
  // CN(0, 1): real and imaginary parts N(0, 1/2).
  cplx complex_normal();
  std::uint64_t next_u64();

 private:
  void refill();

  Philox4x32::Key key_;
  Philox4x32::Counter ctr_;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Derives a child seed (for per-trial or per-job streams) from a master seed.
std::uint64_t derive_seed(std::uint64_t seed, StreamTag tag, std::uint64_t index);

}  // namespace demix
