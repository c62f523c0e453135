#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "refprime/stimuli.hpp"

namespace refprime {

struct Persona {
  std::string prefix;          // "Mr.", "Ms."
  std::string name;            // surname
  std::string country;         // "England"
  std::string gender_pronoun;  // "He", "She"
};

struct ParticipantProfile {
  std::string participant_id;
  double temperature = 0.7;
  std::optional<Persona> persona;
  ExperimentDesign design;
};

// n pairwise-distinct temperatures uniform over [lo, hi]. Distinctness is
// enforced at 3-decimal rounding by rejection resampling; the returned
// values are the rounded ones.
std::vector<double> assign_temperatures(int n, double lo, double hi, uint64_t rng_seed);

// "{Prefix Name} is a native English speaker living in {Country}. {Pronoun}
// is asked in a psycholinguistic experiment to answer the following
// questions."
std::string render_persona_prompt(const Persona& persona);

}  // namespace refprime
