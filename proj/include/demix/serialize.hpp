#pragma once

#include <filesystem>
#include <iosfwd>

#include <json.hpp>

#include "demix/problem.hpp"

namespace demix {

// Binary instance container, little-endian throughout:
//
//   magic        8 bytes  "DMXINST\0"
//   version      u32      kInstanceFormatVersion
//   flags        u32      bit 0: ground truth present, bit 1: noise present
//   s, m, K      3 x i64
//   sigma        f64
//   seed         u64
//   convention   16 bytes, NUL-padded ASCII (kDftConvention)
//   B            m*K complex (re, im interleaved f64)
//   A            s*m*K complex, index order (i, j, k)
//   y            m complex
//   e            m complex            (if flag bit 1)
//   truth        s x (h: K, x: K) complex (if flag bit 0)
inline constexpr std::uint32_t kInstanceFormatVersion = 1;

void write_instance(std::ostream& out, const ProblemInstance& inst);
ProblemInstance read_instance(std::istream& in);

void write_instance_file(const std::filesystem::path& path,
                         const ProblemInstance& inst);
ProblemInstance read_instance_file(const std::filesystem::path& path);

// {s, m, K, sigma, seed, kappa, mu, d0, convention}
nlohmann::json instance_metadata(const ProblemInstance& inst);

}  // namespace demix
