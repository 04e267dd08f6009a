#include "unipc/rng.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace unipc {

namespace {

double unit_open_closed(std::mt19937_64& gen) {
  return static_cast<double>((gen() >> 11) + 1) * 0x1.0p-53;
}

}  // namespace

StateVector gaussian_vector(std::uint64_t seed, std::size_t dim) {
  std::mt19937_64 gen(seed);
  StateVector out(dim);
  for (std::size_t i = 0; i < dim; i += 2) {
    const double u1 = unit_open_closed(gen);
    const double u2 = unit_open_closed(gen);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    out[i] = radius * std::cos(angle);
    if (i + 1 < dim) out[i + 1] = radius * std::sin(angle);
  }
  return out;
}

}  // namespace unipc
