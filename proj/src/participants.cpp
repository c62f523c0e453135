#include "refprime/participants.hpp"

#include <cmath>
#include <set>

#include "refprime/errors.hpp"
#include "refprime/math/rng.hpp"

namespace refprime {

namespace {
constexpr double kRounding = 1000.0;  // 3 decimals
}

std::vector<double> assign_temperatures(int n, double lo, double hi, uint64_t rng_seed) {
  if (n < 1) throw ConfigError("assign_temperatures: n must be >= 1");
  if (!(lo < hi)) throw ConfigError("assign_temperatures: need lo < hi");
  long capacity = std::lround((hi - lo) * kRounding) + 1;
  if (n > capacity) {
    throw ConfigError("assign_temperatures: " + std::to_string(n) +
                      " distinct values do not fit in [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "] at 3-decimal rounding");
  }
  Rng rng(rng_seed);
  std::set<long> taken;
  std::vector<double> out;
  out.reserve(static_cast<size_t>(n));
  size_t attempts = 0;
  const size_t max_attempts = 1000u * static_cast<size_t>(n) + 1000u;
  while (out.size() < static_cast<size_t>(n)) {
    if (++attempts > max_attempts) {
      throw ConfigError("assign_temperatures: rejection sampling failed to find distinct values");
    }
    double t = rng.uniform(lo, hi);
    long key = std::lround(t * kRounding);
    if (taken.insert(key).second) {
      out.push_back(static_cast<double>(key) / kRounding);
    }
  }
  return out;
}

std::string render_persona_prompt(const Persona& p) {
  if (p.prefix.empty() || p.name.empty() || p.country.empty() || p.gender_pronoun.empty()) {
    throw ConfigError("persona fields must all be nonempty");
  }
  return p.prefix + " " + p.name + " is a native English speaker living in " + p.country + ". " +
         p.gender_pronoun + " is asked in a psycholinguistic experiment to answer the following questions.";
}

}  // namespace refprime
