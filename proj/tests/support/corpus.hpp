#pragma once

// Synthetic skin corpora shared by unit and acceptance tests.

#include <vector>

#include "skintone/color.hpp"
#include "skintone/simulate.hpp"

namespace skintone::testing {

inline double skin_hue(double L) { return typical_skin_hue(L); }
inline double skin_chroma(double L) { return typical_skin_chroma(L); }

inline std::vector<PolarTone> realistic_skin_corpus(std::size_t n, unsigned seed) {
  return synthetic_skin_corpus(n, seed);
}

}  // namespace skintone::testing
