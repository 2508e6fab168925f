#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>

// Branch-free sin/cos/exp kernels that the compiler can vectorize. Accurate to
// a few ulp on the ranges the activations and random features produce; the
// array entry points fall back to libm for arguments outside that range.
namespace inrbo::vmath {

inline constexpr double kSinCosFastLimit = 1.0e6;

inline void sincos_reduced(double x, double& s, double& c) {
  constexpr double kTwoOverPi = 6.36619772367581382433e-01;
  constexpr double kPio2Hi = 1.57079632673412561417e+00;
  constexpr double kPio2Mid = 6.07710050630396597660e-11;
  constexpr double kPio2Lo = 2.02226624871116645580e-21;
  constexpr double kRoundShift = 0x1.8p52;  // adding it rounds to an integer held in the low mantissa bits
  const double shifted = std::fma(x, kTwoOverPi, kRoundShift);
  const double k = shifted - kRoundShift;
  const std::uint64_t quadrant = std::bit_cast<std::uint64_t>(shifted);
  double r = std::fma(-k, kPio2Hi, x);
  r = std::fma(-k, kPio2Mid, r);
  r = std::fma(-k, kPio2Lo, r);
  const double z = r * r;
  const double ps =
      r + r * z *
              (-1.66666666666666324348e-01 +
               z * (8.33333333332248946124e-03 +
                    z * (-1.98412698298579493134e-04 +
                         z * (2.75573137070700676789e-06 +
                              z * (-2.50507602534068634195e-08 + z * 1.58969099521155010221e-10)))));
  const double pc =
      1.0 - 0.5 * z +
      z * z *
          (4.16666666666666019037e-02 +
           z * (-1.38888888888741095749e-03 +
                z * (2.48015872894767294178e-05 +
                     z * (-2.75573143513906633035e-07 +
                          z * (2.08757232129817482790e-09 + z * -1.13596475577881948265e-11)))));
  // Quadrant fix-up by bit selects so the loop stays branch-free.
  const std::uint64_t swap = 0 - (quadrant & 1);
  const std::uint64_t bs = std::bit_cast<std::uint64_t>(ps);
  const std::uint64_t bc = std::bit_cast<std::uint64_t>(pc);
  const std::uint64_t s0 = (bs & ~swap) | (bc & swap);
  const std::uint64_t c0 = (bc & ~swap) | (bs & swap);
  s = std::bit_cast<double>(s0 ^ ((quadrant & 2) << 62));
  c = std::bit_cast<double>(c0 ^ (((quadrant + 1) & 2) << 62));
}

inline double sin(double x) {
  if (!(std::abs(x) < kSinCosFastLimit)) return std::sin(x);
  double s, c;
  sincos_reduced(x, s, c);
  return s;
}

inline double cos(double x) {
  if (!(std::abs(x) < kSinCosFastLimit)) return std::cos(x);
  double s, c;
  sincos_reduced(x, s, c);
  return c;
}

/// exp(x) for finite x; returns 0 below -708 and +inf above 709.78.
inline double exp_reduced(double x) {
  constexpr double kLog2e = 1.44269504088896338700e+00;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  double xc = x < -708.0 ? -708.0 : x;
  xc = xc > 709.0 ? 709.0 : xc;
  // Round-to-nearest by the 1.5 * 2^52 shift; the low mantissa bits of
  // `shifted` then hold k, which also builds 2^k below.
  constexpr double kShift = 0x1.8p52;
  const double shifted = std::fma(xc, kLog2e, kShift);
  const double k = shifted - kShift;
  double r = std::fma(-k, kLn2Hi, xc);
  r = std::fma(-k, kLn2Lo, r);
  double p = 1.0 / 479001600.0;
  p = std::fma(p, r, 1.0 / 39916800.0);
  p = std::fma(p, r, 1.0 / 3628800.0);
  p = std::fma(p, r, 1.0 / 362880.0);
  p = std::fma(p, r, 1.0 / 40320.0);
  p = std::fma(p, r, 1.0 / 5040.0);
  p = std::fma(p, r, 1.0 / 720.0);
  p = std::fma(p, r, 1.0 / 120.0);
  p = std::fma(p, r, 1.0 / 24.0);
  p = std::fma(p, r, 1.0 / 6.0);
  p = std::fma(p, r, 0.5);
  p = std::fma(p, r, 1.0);
  p = std::fma(p, r, 1.0);
  const double scale = std::bit_cast<double>((std::bit_cast<std::uint64_t>(shifted) + 1023) << 52);
  double y = p * scale;
  y = x < -708.0 ? 0.0 : y;
  y = x > 709.78 ? HUGE_VAL : y;
  return y;
}

inline double exp(double x) {
  if (std::isnan(x)) return x;
  return exp_reduced(x);
}

/// Element-wise sin and cos of x (s and c must not alias x).
void sincos(std::span<const double> x, std::span<double> s, std::span<double> c);

/// Element-wise cos of x; out may alias x.
void cos(std::span<const double> x, std::span<double> out);

/// Element-wise exp of x; out may alias x.
void exp(std::span<const double> x, std::span<double> out);

}  // namespace inrbo::vmath
