#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace h2dist {

using Vec3 = Eigen::Vector3d;
using Index = std::uint32_t;
using Rank = int;
using Complex = std::complex<double>;

template <class Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline constexpr std::uint32_t kNone = 0xFFFFFFFFu;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a request exceeds a configured size guard.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// Kernel evaluated at coincident points.
class SingularityError : public Error {
 public:
  using Error::Error;
};

// Message-passing contract violated (unexpected tag, missing data, peer abort).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

template <class Scalar>
inline constexpr bool is_complex_v = false;
template <>
inline constexpr bool is_complex_v<Complex> = true;

}  // namespace h2dist
