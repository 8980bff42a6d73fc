#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace gti {

// std::uniform_real_distribution is not pinned by the standard, so draws
// go through this mapping to keep seeded runs bit-identical everywhere.
inline double uniform01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

inline std::string rng_state_string(const std::mt19937_64& g) {
  std::ostringstream os;
  os << g;
  return os.str();
}

inline void rng_restore_state(std::mt19937_64& g, const std::string& s) {
  std::istringstream is(s);
  is >> g;
}

}  // namespace gti
