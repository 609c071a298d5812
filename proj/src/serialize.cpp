#include "demix/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace demix {

namespace {

constexpr std::array<char, 8> kMagic = {'D', 'M', 'X', 'I', 'N', 'S', 'T', '\0'};
constexpr std::size_t kConventionBytes = 16;
constexpr std::uint32_t kFlagTruth = 1u;
constexpr std::uint32_t kFlagNoise = 2u;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void i64(std::int64_t v) { le(static_cast<std::uint64_t>(v)); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void c128(cplx v) {
    f64(v.real());
    f64(v.imag());
  }
  void bytes(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }

 private:
  template <typename U>
  void le(U v) {
    std::array<char, sizeof(U)> buf;
    for (std::size_t b = 0; b < sizeof(U); ++b)
      buf[b] = static_cast<char>((v >> (8 * b)) & 0xFFu);
    out_.write(buf.data(), buf.size());
  }
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  std::int64_t i64() { return static_cast<std::int64_t>(le<std::uint64_t>()); }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  cplx c128() {
    const double re = f64();
    const double im = f64();
    return {re, im};
  }
  void bytes(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (!in_) throw Error("instance file truncated");
  }

 private:
  template <typename U>
  U le() {
    std::array<unsigned char, sizeof(U)> buf;
    bytes(reinterpret_cast<char*>(buf.data()), buf.size());
    U v = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b) v |= static_cast<U>(buf[b]) << (8 * b);
    return v;
  }
  std::istream& in_;
};

void write_vector(Writer& w, const CVector& v) {
  for (Eigen::Index k = 0; k < v.size(); ++k) w.c128(v[k]);
}

CVector read_vector(Reader& r, int n) {
  CVector v(n);
  for (int k = 0; k < n; ++k) v[k] = r.c128();
  return v;
}

}  // namespace

void write_instance(std::ostream& out, const ProblemInstance& inst) {
  inst.check_shapes();
  Writer w(out);
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(kInstanceFormatVersion);
  std::uint32_t flags = 0;
  if (inst.truth) flags |= kFlagTruth;
  if (inst.e.size() != 0) flags |= kFlagNoise;
  w.u32(flags);
  w.i64(inst.dims.s);
  w.i64(inst.dims.m);
  w.i64(inst.dims.K);
  w.f64(inst.sigma);
  w.u64(inst.seed);
  std::array<char, kConventionBytes> conv{};
  std::strncpy(conv.data(), kDftConvention, conv.size() - 1);
  w.bytes(conv.data(), conv.size());

  for (const auto& v : inst.B.raw()) w.c128(v);
  for (const auto& v : inst.A.raw()) w.c128(v);
  write_vector(w, inst.y);
  if (flags & kFlagNoise) write_vector(w, inst.e);
  if (flags & kFlagTruth) {
    for (const auto& p : inst.truth->sources) {
      write_vector(w, p.h);
      write_vector(w, p.x);
    }
  }
  if (!out) throw Error("failed writing instance");
}

ProblemInstance read_instance(std::istream& in) {
  Reader r(in);
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) throw Error("not a demix instance file (bad magic)");
  const auto version = r.u32();
  if (version != kInstanceFormatVersion)
    throw Error("unsupported instance format version " + std::to_string(version));
  const auto flags = r.u32();

  ProblemInstance inst;
  inst.dims.s = static_cast<int>(r.i64());
  inst.dims.m = static_cast<int>(r.i64());
  inst.dims.K = static_cast<int>(r.i64());
  inst.dims.validate();
  inst.sigma = r.f64();
  inst.seed = r.u64();
  std::array<char, kConventionBytes + 1> conv{};
  r.bytes(conv.data(), kConventionBytes);
  if (std::string(conv.data()) != kDftConvention)
    throw Error("unsupported DFT convention '" + std::string(conv.data()) + "'");

  const auto& d = inst.dims;
  inst.B = DftRows(d.m, d.K);
  for (auto& v : inst.B.raw()) v = r.c128();
  inst.A = DesignTensor(d.s, d.m, d.K);
  for (auto& v : inst.A.raw()) v = r.c128();
  inst.y = read_vector(r, d.m);
  if (flags & kFlagNoise) inst.e = read_vector(r, d.m);
  if (flags & kFlagTruth) {
    std::vector<SourcePair> pairs;
    for (int i = 0; i < d.s; ++i) {
      SourcePair p;
      p.h = read_vector(r, d.K);
      p.x = read_vector(r, d.K);
      pairs.push_back(std::move(p));
    }
    auto truth = GroundTruth::from_pairs(std::move(pairs));
    truth.mu = incoherence_mu(truth, inst.B);
    inst.truth = std::move(truth);
  }
  return inst;
}

void write_instance_file(const std::filesystem::path& path,
                         const ProblemInstance& inst) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_instance(out, inst);
}

ProblemInstance read_instance_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_instance(in);
}

nlohmann::json instance_metadata(const ProblemInstance& inst) {
  nlohmann::json meta;
  meta["s"] = inst.dims.s;
  meta["m"] = inst.dims.m;
  meta["K"] = inst.dims.K;
  meta["sigma"] = inst.sigma;
  meta["seed"] = inst.seed;
  if (inst.truth) {
    meta["kappa"] = inst.truth->kappa;
    meta["mu"] = inst.truth->mu ? *inst.truth->mu : incoherence_mu(*inst.truth, inst.B);
    meta["d0"] = inst.truth->d0;
  } else {
    meta["kappa"] = nullptr;
    meta["mu"] = nullptr;
    meta["d0"] = nullptr;
  }
  meta["convention"] = kDftConvention;
  return meta;
}

}  // namespace demix
