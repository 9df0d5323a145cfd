#pragma once

// Seed-deterministic generator of connected shapes. `holes_hint` biases the
// growth toward ring-like structures; the resulting hole count is reported by
// analyze(), not guaranteed.

#include <cstdint>

#include "amoebot/grid.hpp"
#include "amoebot/rng.hpp"

namespace amoebot {

Shape gen_shape(int n, int holes_hint, uint64_t seed);

}  // namespace amoebot
