#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace kvark {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Base class for every error raised by the library. `stage()` names the
/// pipeline stage or module that failed so the CLI can report it.
class Error : public std::runtime_error {
 public:
  Error(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Seed mixer used to split a master seed into independent RNG streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t sub = 0) {
  return splitmix64(splitmix64(master ^ splitmix64(stream + 1)) + sub);
}

/// Selects the OpenMP kernel or its serial reference implementation.
enum class Execution { Serial, Parallel };

inline bool all_finite(const Eigen::Ref<const Mat>& m) { return m.allFinite(); }

inline void require_finite(const Eigen::Ref<const Mat>& m, const char* stage,
                           const char* what) {
  if (!m.allFinite()) throw InvalidInput(stage, std::string(what) + " is not finite");
}

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

}  // namespace kvark
