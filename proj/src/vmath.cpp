#include "inrbo/vmath.hpp"

#include <algorithm>
#include <bit>
#include <cstddef>

namespace inrbo::vmath {
namespace {

constexpr std::size_t kBlock = 256;
constexpr std::uint64_t kAbsMask = 0x7fffffffffffffffULL;
constexpr std::uint64_t kInfBits = 0x7ff0000000000000ULL;

// Largest |x| over [b, e) as raw bits; bit order matches numeric order for
// non-negative doubles and NaN sorts above infinity. Integer max vectorizes.
std::uint64_t block_magnitude(std::span<const double> x, std::size_t b, std::size_t e) {
  std::uint64_t top = 0;
  for (std::size_t i = b; i < e; ++i) top = std::max<std::uint64_t>(top, std::bit_cast<std::uint64_t>(x[i]) & kAbsMask);
  return top;
}

}  // namespace

void sincos(std::span<const double> x, std::span<double> s, std::span<double> c) {
  const std::size_t n = x.size();
  for (std::size_t b = 0; b < n; b += kBlock) {
    const std::size_t e = std::min(n, b + kBlock);
    if (block_magnitude(x, b, e) >= std::bit_cast<std::uint64_t>(kSinCosFastLimit)) {
      for (std::size_t i = b; i < e; ++i) {
        const double v = x[i];
        s[i] = vmath::sin(v);
        c[i] = vmath::cos(v);
      }
      continue;
    }
    for (std::size_t i = b; i < e; ++i) sincos_reduced(x[i], s[i], c[i]);
  }
}

void cos(std::span<const double> x, std::span<double> out) {
  const std::size_t n = x.size();
  for (std::size_t b = 0; b < n; b += kBlock) {
    const std::size_t e = std::min(n, b + kBlock);
    if (block_magnitude(x, b, e) >= std::bit_cast<std::uint64_t>(kSinCosFastLimit)) {
      for (std::size_t i = b; i < e; ++i) out[i] = vmath::cos(x[i]);
      continue;
    }
    for (std::size_t i = b; i < e; ++i) {
      double s, c;
      sincos_reduced(x[i], s, c);
      out[i] = c;
    }
  }
}

void exp(std::span<const double> x, std::span<double> out) {
  const std::size_t n = x.size();
  for (std::size_t b = 0; b < n; b += kBlock) {
    const std::size_t e = std::min(n, b + kBlock);
    if (block_magnitude(x, b, e) > kInfBits) {  // NaN present
      for (std::size_t i = b; i < e; ++i) out[i] = vmath::exp(x[i]);
      continue;
    }
    for (std::size_t i = b; i < e; ++i) out[i] = exp_reduced(x[i]);
  }
}

}  // namespace inrbo::vmath
