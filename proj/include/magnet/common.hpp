#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace magnet {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Eigen::Index;

/// Invalid configuration or specification (bad K, unpaired classes, ...).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input file; the message names the offending line.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dimension mismatch between operands.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Caller violated an operation's precondition.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Floor applied to every variance that ends up in an exponent denominator.
inline constexpr double kVarianceFloor = 1e-8;

template <typename Scalar>
inline Scalar hinge(Scalar x) {
  return x > Scalar(0) ? x : Scalar(0);
}

/// log(sum(exp(v))) with max-shift; -inf for an empty input.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  if (v.size() == 0) return -std::numeric_limits<Scalar>::infinity();
  const Scalar m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

/// splitmix64 finalizer; used to derive independent seeds for sub-streams.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  return mix_seed(mix_seed(mix_seed(base) ^ stream) ^ index);
}

}  // namespace magnet
