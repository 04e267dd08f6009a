#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "unipc/model.hpp"

namespace unipc {

/// Name of the only supported initial-noise generator.
inline constexpr std::string_view kGaussianGeneratorName = "mt19937_64-box-muller";

/// Standard normal vector from a 64-bit seed.
///
/// std::mt19937_64 seeded with `seed` supplies 64-bit words; each word is
/// turned into a uniform in (0, 1] as ((w >> 11) + 1) * 2^-53, and pairs of
/// uniforms (u1, u2) give sqrt(-2 ln u1) * {cos, sin}(2 pi u2). The engine is
/// fully specified by the standard, so the sequence is identical on every
/// conforming platform (up to libm rounding in log/cos/sin).
StateVector gaussian_vector(std::uint64_t seed, std::size_t dim);

}  // namespace unipc
