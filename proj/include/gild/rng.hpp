#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>

namespace gild {

/// One deterministic random stream. Draws are built from raw 64-bit engine
/// output so sequences do not depend on the standard library's distribution
/// implementations.
class RngStream {
 public:
  RngStream() : RngStream(0) {}
  explicit RngStream(std::uint64_t seed);
  RngStream(std::uint64_t master, const std::string& name);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller (one draw per call, no caching).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  friend bool operator==(const RngStream& a, const RngStream& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Named streams derived from one master seed. Each name maps to an
/// independent stream, so consuming one never shifts another.
class RngRegistry {
 public:
  explicit RngRegistry(std::uint64_t master_seed) : master_(master_seed) {}

  std::uint64_t master_seed() const noexcept { return master_; }
  /// The stream for `name`, created on first use.
  RngStream& stream(const std::string& name);

 private:
  std::uint64_t master_;
  std::map<std::string, RngStream> streams_;
};

/// Canonical stream names used by the training loop.
namespace streams {
inline constexpr const char* kInit = "init";
inline constexpr const char* kGildInit = "gild-init";
inline constexpr const char* kExploration = "exploration";
inline constexpr const char* kBuffer = "buffer-sampling";
inline constexpr const char* kDemo = "demo-sampling";
inline constexpr const char* kValidation = "validation-sampling";
inline constexpr const char* kPolicyNoise = "policy-noise";
inline constexpr const char* kMetaNoise = "meta-noise";
inline constexpr const char* kEnv = "env";
inline constexpr const char* kEval = "eval";
}  // namespace streams

}  // namespace gild
