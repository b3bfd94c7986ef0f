#pragma once

// CP auxiliary functions.
//
//   xi(Z)   = cosh(sqrt Z)              (cos(sqrt(-Z)) for Z < 0)
//   eta0(Z) = sinh(sqrt Z) / sqrt Z     (sin(sqrt(-Z)) / sqrt(-Z) for Z < 0)
//   eta1(Z) = (xi(Z) - eta0(Z)) / Z
//
// All three are entire functions of Z. They are templated on the scalar so the
// exponentially fitted quadrature can evaluate them at complex arguments
// (mixed evanescent/oscillatory frequency pairs).

#include <cmath>
#include <complex>
#include <stdexcept>
#include <type_traits>

namespace tdcp {

template <class T>
struct is_complex : std::false_type {};
template <class T>
struct is_complex<std::complex<T>> : std::true_type {};
template <class T>
inline constexpr bool is_complex_v = is_complex<T>::value;

namespace detail {

inline constexpr double kSeriesSwitch = 1e-3;

template <class S>
bool finite(const S& z) {
  if constexpr (is_complex_v<S>) {
    return std::isfinite(z.real()) && std::isfinite(z.imag());
  } else {
    return std::isfinite(z);
  }
}

template <class S>
void require_finite(const S& z, const char* who) {
  if (!finite(z)) throw std::domain_error(std::string(who) + ": non-finite argument");
}

// eta1 as sum_k Z^k (2k+2)/(2k+3)!; ten terms reach roundoff for |Z| < 1.
template <class S>
S eta1_power_series(S Z) {
  S term_sum = S(0);
  S power = S(1);
  double fact = 6.0;  // (2k+3)! at k = 0
  for (int k = 0; k < 10; ++k) {
    term_sum += power * ((2.0 * k + 2.0) / fact);
    power *= Z;
    fact *= (2.0 * k + 4.0) * (2.0 * k + 5.0);
  }
  return term_sum;
}

}  // namespace detail

template <class S>
S xi(S Z) {
  detail::require_finite(Z, "xi");
  if (std::abs(Z) < detail::kSeriesSwitch) {
    return S(1) + Z * (S(0.5) + Z * (S(1.0 / 24.0) + Z * S(1.0 / 720.0)));
  }
  if constexpr (is_complex_v<S>) {
    return std::cosh(std::sqrt(Z));
  } else {
    return Z > 0 ? std::cosh(std::sqrt(Z)) : std::cos(std::sqrt(-Z));
  }
}

template <class S>
S eta0(S Z) {
  detail::require_finite(Z, "eta0");
  if (std::abs(Z) < detail::kSeriesSwitch) {
    return S(1) + Z * (S(1.0 / 6.0) + Z * (S(1.0 / 120.0) + Z * S(1.0 / 5040.0)));
  }
  if constexpr (is_complex_v<S>) {
    const S s = std::sqrt(Z);
    return std::sinh(s) / s;
  } else {
    if (Z > 0) {
      const double s = std::sqrt(Z);
      return std::sinh(s) / s;
    }
    const double s = std::sqrt(-Z);
    return std::sin(s) / s;
  }
}

template <class S>
S eta1(S Z) {
  detail::require_finite(Z, "eta1");
  if (std::abs(Z) < detail::kSeriesSwitch) {
    return S(1.0 / 3.0) + Z * (S(1.0 / 30.0) + Z * (S(1.0 / 840.0) + Z * S(1.0 / 45360.0)));
  }
  // (xi - eta0) / Z cancels badly for |Z| of order one; the full series is exact there.
  if (std::abs(Z) < 1.0) return detail::eta1_power_series(Z);
  return (xi(Z) - eta0(Z)) / Z;
}

/// eta_s for s in {0, 1}.
template <class S>
S eta(S Z, int s) {
  switch (s) {
    case 0:
      return eta0(Z);
    case 1:
      return eta1(Z);
    default:
      throw std::invalid_argument("eta: only s = 0 and s = 1 are provided");
  }
}

}  // namespace tdcp
